import os

# Cap BLAS pools before numpy loads: keeps runs reproducible and makes the
# single-core timing checks honest.
for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(var, "1")
