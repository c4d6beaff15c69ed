"""Command-line entry points.

Exit codes: 0 success, 2 bad configuration or input files, 3 training
aborted on a non-finite loss, 4 simulation failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys


def _apply_thread_cap() -> None:
    """NKF_THREADS caps the BLAS pools; must run before numpy loads."""
    cap = os.environ.get("NKF_THREADS")
    if cap:
        for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, cap)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nkf",
        description="Neural kinematic bases for mesh-free fluid animation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a basis network")
    p.add_argument("--dim", type=int, default=2, choices=(2, 3))
    p.add_argument("--domains", type=int, default=16)
    p.add_argument("--test-domains", type=int, default=4)
    p.add_argument("--points", type=int, default=20_000)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch", type=int, default=2_000)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--layers", type=int, default=4)
    p.add_argument("--basis", type=int, default=10, help="number of basis fields")
    p.add_argument("--circles", type=int, default=10)
    p.add_argument("--lr", type=float, default=5e-4)
    p.add_argument("--lr-decay", type=float, default=0.96)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eval-points", type=int, default=4096)
    p.add_argument("--precision", choices=("f32", "f64"), default="f32")
    p.add_argument("--disable-smooth", action="store_true")
    p.add_argument("--sharp-corners", action="store_true")
    p.add_argument("--ortho-raw", action="store_true")
    p.add_argument("--orth-mode", choices=("pointwise", "integral", "raw"),
                   default="pointwise")
    p.add_argument("--out", required=True, help="checkpoint path (.nkbf)")
    p.add_argument("--log", default=None, help="metrics JSONL path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("metrics", help="evaluate a model on fresh domains")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--model")
    src.add_argument("--analytic", action="store_true")
    p.add_argument("--domains", type=int, default=8)
    p.add_argument("--test-domains", type=int, default=8)
    p.add_argument("--points", type=int, default=4096)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bins", type=int, default=64)
    p.add_argument("--precision", choices=("f32", "f64"), default="f64")
    p.add_argument("--out", default=None, help="JSON path (stdout when omitted)")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("fit", help="fit coefficients to a sketch scene")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--model")
    src.add_argument("--analytic", action="store_true")
    p.add_argument("--scene", required=True)
    p.add_argument("--ridge", type=float, default=1e-6)
    p.add_argument("--precision", choices=("f32", "f64"), default="f64")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="fit a scene then advect it")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--model")
    src.add_argument("--analytic", action="store_true")
    p.add_argument("--scene", required=True)
    p.add_argument("--frames", type=int, default=100)
    p.add_argument("--dt", type=float, default=0.005)
    p.add_argument("--grid", type=int, default=64)
    p.add_argument("--proj-points", type=int, default=4096)
    p.add_argument("--ridge", type=float, default=0.0, help="re-projection ridge")
    p.add_argument("--fit-ridge", type=float, default=1e-6)
    p.add_argument("--particles", type=int, default=0)
    p.add_argument("--keyframes", default=None, help="domain timeline JSON")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--precision", choices=("f32", "f64"), default="f64")
    p.add_argument("--out", required=True, help="frame directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("export-field", help="CSV grid of a basis or velocity field")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--model")
    src.add_argument("--analytic", action="store_true")
    p.add_argument("--scene", default=None, help="scene providing the domain")
    what = p.add_mutually_exclusive_group(required=True)
    what.add_argument("--basis-index", type=int, help="export one basis field")
    what.add_argument("--alpha", help="JSON file with coefficients to combine")
    p.add_argument("--grid", type=int, default=64)
    p.add_argument("--precision", choices=("f32", "f64"), default="f64")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_field)

    p = sub.add_parser("serve", help="interactive sketch session endpoint")
    p.add_argument("--model", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--precision", choices=("f32", "f64"), default="f32")
    p.add_argument("--proj-points", type=int, default=2048)
    p.add_argument("--particles", type=int, default=256)
    p.set_defaults(func=cmd_serve)

    return parser


def _load_provider(args, spec=None):
    import numpy as np

    from .basis import AnalyticBasis, NeuralBasis
    from .mlp import load_checkpoint

    if getattr(args, "analytic", False):
        return AnalyticBasis(b=10)
    dtype = np.float64 if args.precision == "f64" else np.float32
    model = load_checkpoint(args.model, dtype=dtype)
    if spec is None:
        return model
    return NeuralBasis(model, spec)


def _load_scene(path):
    from .sketch import SketchScene

    with open(path) as fh:
        return SketchScene.loads(fh.read())


def cmd_train(args) -> int:
    from .losses import LossWeights
    from .training import TrainConfig, generate_dataset, train

    config = TrainConfig(
        weights=LossWeights(orth_mode=args.orth_mode),
        dim=args.dim,
        n_domains=args.domains,
        n_test_domains=args.test_domains,
        n_points=args.points,
        n_epochs=args.epochs,
        batch_size=args.batch,
        n_basis=args.basis,
        m_circles=args.circles,
        width=args.width,
        n_layers=args.layers,
        base_lr=args.lr,
        lr_decay=args.lr_decay,
        rng_seed=args.seed,
        n_eval_points=args.eval_points,
        precision=args.precision,
        disable_smooth=args.disable_smooth,
        sharp_corners=args.sharp_corners,
        ortho_raw=args.ortho_raw,
    )
    dataset = generate_dataset(config)
    train(config, dataset, checkpoint_path=args.out, log_path=args.log)
    return 0


def cmd_metrics(args) -> int:
    import numpy as np

    from . import sim
    from .basis import AnalyticBasis, boundary_stats, divergence_stats, gram_matrix
    from .geometry import sample_points
    from .training import TrainConfig, evaluate, generate_dataset

    if args.analytic:
        from .geometry import SampleSet

        provider = AnalyticBasis(b=10)
        spec = sim._unit_domain()
        samples = sample_points(spec, args.points, args.seed)
        # Gram on a midpoint grid: the quadrature is spectrally exact there
        res = 256
        xs = (np.arange(res) + 0.5) / res
        grid = np.stack(np.meshgrid(xs, xs, indexing="ij"), axis=-1).reshape(-1, 2)
        gsamples = SampleSet(
            grid, np.ones(len(grid)), np.zeros(len(grid)),
            np.full_like(grid, np.nan),
        )
        gram = gram_matrix(provider, gsamples)
        off = gram - np.diag(np.diag(gram))
        record = {
            "divergence": divergence_stats(provider, samples, bins=args.bins).to_json(),
            "boundary": boundary_stats(provider, samples, bins=args.bins).to_json(),
            "gram_offdiag_max": float(np.max(np.abs(off))),
        }
    else:
        from .mlp import load_checkpoint

        dtype = np.float64 if args.precision == "f64" else np.float32
        model = load_checkpoint(args.model, dtype=dtype)
        config = TrainConfig(
            dim=model.dim,
            n_domains=args.domains,
            n_test_domains=args.test_domains,
            n_points=args.points,
            batch_size=min(args.points, 2000),
            n_basis=model.n_basis,
            m_circles=model.m_circles,
            rng_seed=args.seed,
            n_eval_points=args.points,
            hist_bins=args.bins,
            precision=args.precision,
        )
        dataset = generate_dataset(config)
        record = evaluate(model, dataset, config).to_json()
    text = json.dumps(record, indent=2) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_fit(args) -> int:
    from .sketch import fit_alpha, fit_problem_from_scene, fit_residual

    scene = _load_scene(args.scene)
    provider = _load_provider(args, spec=scene.domain)
    problem = fit_problem_from_scene(scene, ridge=args.ridge)
    alpha = fit_alpha(provider, problem)
    residual = fit_residual(provider, problem, alpha)
    record = {"alpha": [float(a) for a in alpha], "residual": residual}
    text = json.dumps(record, indent=2) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _load_keyframes(path):
    from .geometry import DomainSpec

    with open(path) as fh:
        data = json.load(fh)
    return [(float(k["t"]), DomainSpec.from_json(k["domain"])) for k in data]


def cmd_simulate(args) -> int:
    from .sim import SimConfig, run
    from .sketch import fit_alpha, fit_problem_from_scene

    scene = _load_scene(args.scene)
    provider = _load_provider(args, spec=scene.domain)
    problem = fit_problem_from_scene(scene, ridge=args.fit_ridge)
    alpha0 = fit_alpha(provider, problem)
    config = SimConfig(
        dt=args.dt,
        n_projection_points=args.proj_points,
        ridge=args.ridge,
        n_frames=args.frames,
        keyframes=_load_keyframes(args.keyframes) if args.keyframes else None,
        n_particles=args.particles,
        rng_seed=args.seed,
        grid_res=args.grid,
    )
    os.makedirs(args.out, exist_ok=True)
    for _ in run(provider, alpha0, config, out_dir=args.out):
        pass
    return 0


def cmd_export_field(args) -> int:
    import numpy as np

    from . import sim
    from .basis import velocity

    if args.scene:
        scene = _load_scene(args.scene)
        spec = scene.domain
    else:
        spec = sim._unit_domain()
    provider = _load_provider(args, spec=spec if not args.analytic else None)
    res = args.grid
    xs = np.linspace(0.0, 1.0, res)
    grid = np.stack(np.meshgrid(xs, xs, indexing="ij"), axis=-1).reshape(-1, 2)
    if args.basis_index is not None:
        if not 0 <= args.basis_index < provider.b:
            raise ValueError(f"basis index out of range 0..{provider.b - 1}")
        vals = provider.evaluate(grid)[:, args.basis_index, :]
    else:
        with open(args.alpha) as fh:
            alpha = np.asarray(json.load(fh)["alpha"], dtype=np.float64)
        vals = velocity(provider, alpha, grid)
    with open(args.out, "w") as fh:
        fh.write("x,y,u,v\n")
        for (x, y), (u, v) in zip(grid, vals):
            fh.write(f"{float(x)!r},{float(y)!r},{float(u)!r},{float(v)!r}\n")
    return 0


def cmd_serve(args) -> int:
    from .service import serve_forever

    return serve_forever(
        model_path=args.model,
        host=args.host,
        port=args.port,
        precision=args.precision,
        n_projection_points=args.proj_points,
        n_particles=args.particles,
    )


def main(argv=None) -> int:
    _apply_thread_cap()
    parser = build_parser()
    args = parser.parse_args(argv)
    from .errors import NonFiniteLoss, StepFailed

    try:
        return args.func(args)
    except NonFiniteLoss as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except StepFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
