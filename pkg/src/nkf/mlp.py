"""Dense MLP with hand-rolled differentiation.

The network maps a point plus a domain encoding to a stack of basis
vectors. Two derivative channels are kept alongside the plain value:

* tangent-forward propagation seeds one unit tangent per spatial input
  coordinate and pushes it through every layer, yielding exact columns of
  the output-by-point Jacobian;
* the reverse pass runs over the augmented graph (value + tangent
  channels) and produces parameter gradients for losses that mix values
  and Jacobian entries.

Hidden layers use a leaky rectifier (piecewise-linear, so its second
derivative vanishes almost everywhere); the output layer uses an
exponential-linear unit whose exact second derivative enters the reverse
pass on the negative branch.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadMagic,
    ChecksumMismatch,
    NonFiniteGradient,
    ShapeMismatch,
    VersionMismatch,
)

MAGIC = b"NKBF"
VERSION = 1


@dataclass
class MlpModel:
    """Weights, biases and activation settings of the basis network."""

    weights: list[np.ndarray]  # each (out, in)
    biases: list[np.ndarray]  # each (out,)
    dim: int  # spatial dimension
    n_basis: int  # number of emitted basis vectors
    m_circles: int  # circles in the domain encoding
    leaky_slope: float = 0.01
    elu_alpha: float = 1.0

    def __post_init__(self):
        if len(self.weights) != len(self.biases):
            raise ShapeMismatch("weights and biases must pair up")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ShapeMismatch(f"layer {i}: bias {b.shape} vs weight {w.shape}")
            if i > 0 and w.shape[1] != self.weights[i - 1].shape[0]:
                raise ShapeMismatch(f"layer {i}: input width does not chain")
        if self.weights[-1].shape[0] != self.dim * self.n_basis:
            raise ShapeMismatch("last layer must emit dim * n_basis values")

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def dim_in(self) -> int:
        return self.weights[0].shape[1]

    @property
    def dim_out(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def dtype(self) -> np.dtype:
        return self.weights[0].dtype

    def astype(self, dtype) -> "MlpModel":
        return MlpModel(
            [w.astype(dtype) for w in self.weights],
            [b.astype(dtype) for b in self.biases],
            self.dim,
            self.n_basis,
            self.m_circles,
            self.leaky_slope,
            self.elu_alpha,
        )

    def copy(self) -> "MlpModel":
        return self.astype(self.dtype)


@dataclass
class ForwardBundle:
    """Network output plus the Jacobian columns w.r.t. the point coordinates.

    ``value`` is ``(n, dim_out)``; ``tangents`` is ``(n, dim, dim_out)`` with
    ``tangents[i, j, :] = d value_i / d p_j``.
    """

    value: np.ndarray
    tangents: np.ndarray


@dataclass
class Grads:
    """Parameter gradients, mirroring the model layout."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]


def init_kaiming(
    dim: int,
    n_basis: int,
    m_circles: int,
    n_layers: int = 8,
    width: int = 256,
    leaky_slope: float = 0.01,
    elu_alpha: float = 1.0,
    rng_seed: int = 0,
    dtype=np.float32,
) -> MlpModel:
    """Normal(0, sqrt(2 / (1 + s^2)) / sqrt(fan_in)) weights, zero biases."""
    if n_layers < 1:
        raise ValueError("need at least one layer")
    dim_in = dim + m_circles * (dim + 1)
    dims = [dim_in] + [width] * (n_layers - 1) + [dim * n_basis]
    gain = np.sqrt(2.0 / (1.0 + leaky_slope**2))
    rng = np.random.default_rng(rng_seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        std = gain / np.sqrt(fan_in)
        weights.append(rng.normal(0.0, std, size=(fan_out, fan_in)).astype(dtype))
        biases.append(np.zeros(fan_out, dtype=dtype))
    return MlpModel(weights, biases, dim, n_basis, m_circles, leaky_slope, elu_alpha)


# ---------------------------------------------------------------------------
# Activations (derivatives at exactly 0 take the negative-branch value)
# ---------------------------------------------------------------------------

def _leaky(z, s):
    return np.where(z > 0, z, s * z)


def _leaky_d(z, s):
    return np.where(z > 0, 1.0, s).astype(z.dtype)


def _elu(z, a):
    return np.where(z > 0, z, a * np.expm1(np.minimum(z, 0.0)))


def _elu_d(z, a):
    return np.where(z > 0, 1.0, a * np.exp(np.minimum(z, 0.0)))


def _elu_dd(z, a):
    return np.where(z > 0, 0.0, a * np.exp(np.minimum(z, 0.0)))


def _stack_inputs(model: MlpModel, points, rho):
    points = np.asarray(points, dtype=model.dtype)
    rho = np.asarray(rho, dtype=model.dtype)
    squeeze = points.ndim == 1
    pts = np.atleast_2d(points)
    if pts.shape[1] != model.dim:
        raise ShapeMismatch(f"points have dim {pts.shape[1]}, model wants {model.dim}")
    n = pts.shape[0]
    if rho.ndim == 1:
        rho = np.broadcast_to(rho, (n, rho.shape[0]))
    if rho.shape != (n, model.dim_in - model.dim):
        raise ShapeMismatch(
            f"domain encoding {rho.shape} does not fill {model.dim_in - model.dim} slots"
        )
    return np.concatenate([pts, rho], axis=1), squeeze


def forward(model: MlpModel, points, rho) -> np.ndarray:
    """Plain value pass; returns ``(n, dim_out)`` (or 1-D for one point)."""
    x, squeeze = _stack_inputs(model, points, rho)
    a = x
    last = model.n_layers - 1
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w.T + b
        a = _elu(z, model.elu_alpha) if l == last else _leaky(z, model.leaky_slope)
    return a[0] if squeeze else a


def forward_with_tangents(
    model: MlpModel, points, rho, keep_cache: bool = False
):
    """Value pass plus Jacobian columns for the point coordinates.

    With ``keep_cache`` the per-layer intermediates needed by
    :func:`backward` are returned as a second value.
    """
    x, squeeze = _stack_inputs(model, points, rho)
    n = x.shape[0]
    dim = model.dim
    a = x
    # tangents seeded on the point slots only; the first matmul reduces to
    # slicing the leading columns of W_1
    tang = None
    cache = {"acts": [a], "tangs": [], "deriv": [], "curv": []}
    last = model.n_layers - 1
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w.T + b
        if l == 0:
            t = np.broadcast_to(w[:, :dim].T[None, :, :], (n, dim, w.shape[0])).copy()
        else:
            t = tang @ w.T
        if l == last:
            d = _elu_d(z, model.elu_alpha)
            c = _elu_dd(z, model.elu_alpha)
            a = _elu(z, model.elu_alpha)
        else:
            d = _leaky_d(z, model.leaky_slope)
            c = None  # piecewise linear: second derivative vanishes a.e.
            a = _leaky(z, model.leaky_slope)
        pre_t = t
        tang = d[:, None, :] * t
        if keep_cache:
            cache["acts"].append(a)
            cache["tangs"].append((pre_t, tang))
            cache["deriv"].append(d)
            cache["curv"].append(c)
    bundle = ForwardBundle(
        value=a[0] if squeeze else a,
        tangents=tang[0] if squeeze else tang,
    )
    if keep_cache:
        cache["tangs"].insert(0, (None, None))  # align indices with layers
        return bundle, cache
    return bundle


def backward(
    model: MlpModel,
    points,
    rho,
    grad_value: np.ndarray,
    grad_tangents: np.ndarray | None = None,
    cache=None,
) -> Grads:
    """Reverse pass over the value and tangent channels.

    ``grad_value`` is ``(n, dim_out)``; ``grad_tangents`` is
    ``(n, dim, dim_out)`` or None when the loss touches no Jacobian entry.
    Gradients accumulate over the batch by summation.
    """
    if cache is None:
        _, cache = forward_with_tangents(model, points, rho, keep_cache=True)
    acts = cache["acts"]
    derivs = cache["deriv"]
    curvs = cache["curv"]
    n = acts[0].shape[0]
    dim = model.dim

    abar = np.asarray(grad_value, dtype=model.dtype)
    if abar.ndim == 1:
        abar = abar[None, :]
    if abar.shape != (n, model.dim_out):
        raise ShapeMismatch(f"grad_value shape {abar.shape}")
    if grad_tangents is None:
        sbar = np.zeros((n, dim, model.dim_out), dtype=model.dtype)
    else:
        sbar = np.asarray(grad_tangents, dtype=model.dtype)
        if sbar.ndim == 2:
            sbar = sbar[None, :, :]
        if sbar.shape != (n, dim, model.dim_out):
            raise ShapeMismatch(f"grad_tangents shape {sbar.shape}")

    gw = [None] * model.n_layers
    gb = [None] * model.n_layers
    for l in range(model.n_layers - 1, -1, -1):
        w = model.weights[l]
        d = derivs[l]
        c = curvs[l]
        pre_t = cache["tangs"][l + 1][0]

        tbar = d[:, None, :] * sbar
        zbar = d * abar
        if c is not None:
            zbar = zbar + c * np.einsum("njo,njo->no", pre_t, sbar)

        a_prev = acts[l]
        gw[l] = np.einsum("no,ni->oi", zbar, a_prev)
        gb[l] = zbar.sum(axis=0)
        if l > 0:
            s_prev = cache["tangs"][l][1]
            gw[l] += np.einsum("njo,nji->oi", tbar, s_prev)
            abar = zbar @ w
            sbar = tbar @ w
        else:
            # input tangents are one-hot on the point slots
            gw[l][:, :dim] += tbar.sum(axis=0).T
    return Grads(gw, gb)


def param_vector(model: MlpModel) -> np.ndarray:
    """All parameters flattened to one f64 vector (weights then biases)."""
    return np.concatenate(
        [w.ravel().astype(np.float64) for w in model.weights]
        + [b.astype(np.float64) for b in model.biases]
    )


def set_param_vector(model: MlpModel, vec: np.ndarray) -> None:
    off = 0
    for w in model.weights:
        w[...] = vec[off:off + w.size].reshape(w.shape).astype(w.dtype)
        off += w.size
    for b in model.biases:
        b[...] = vec[off:off + b.size].astype(b.dtype)
        off += b.size
    if off != vec.size:
        raise ShapeMismatch("parameter vector length mismatch")


def grads_vector(grads: Grads) -> np.ndarray:
    return np.concatenate(
        [g.ravel().astype(np.float64) for g in grads.weights]
        + [g.astype(np.float64) for g in grads.biases]
    )


# ---------------------------------------------------------------------------
# Adam with exponential learning-rate schedule
# ---------------------------------------------------------------------------

@dataclass
class OptimizerState:
    m_w: list[np.ndarray]
    v_w: list[np.ndarray]
    m_b: list[np.ndarray]
    v_b: list[np.ndarray]
    step: int = 0
    epoch: int = 0
    base_lr: float = 5e-4
    decay: float = 0.96
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_model(cls, model: MlpModel, base_lr: float = 5e-4, decay: float = 0.96):
        zeros = lambda arrs: [np.zeros_like(a, dtype=np.float64) for a in arrs]
        return cls(
            zeros(model.weights),
            zeros(model.weights),
            zeros(model.biases),
            zeros(model.biases),
            base_lr=base_lr,
            decay=decay,
        )

    @property
    def learning_rate(self) -> float:
        return self.base_lr * self.decay**self.epoch


def adam_step(model: MlpModel, grads: Grads, state: OptimizerState) -> None:
    """One Adam update in place; raises on non-finite gradients."""
    for g in grads.weights + grads.biases:
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient("gradient contains NaN or Inf")
    state.step += 1
    lr = state.learning_rate
    b1, b2, eps = state.beta1, state.beta2, state.eps
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for params, gs, ms, vs in (
        (model.weights, grads.weights, state.m_w, state.v_w),
        (model.biases, grads.biases, state.m_b, state.v_b),
    ):
        for p, g, m, v in zip(params, gs, ms, vs):
            g64 = g.astype(np.float64)
            m *= b1
            m += (1 - b1) * g64
            v *= b2
            v += (1 - b2) * g64 * g64
            update = lr * (m / c1) / (np.sqrt(v / c2) + eps)
            p -= update.astype(p.dtype)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(model: MlpModel, path, meta: dict | None = None) -> None:
    """Binary little-endian dump with a CRC32 trailer."""
    width = model.dtype.itemsize
    if width not in (4, 8):
        raise ValueError("only f32/f64 models are serializable")
    parts = [
        MAGIC,
        struct.pack(
            "<IIIIII", VERSION, width, model.dim, model.n_basis, model.m_circles,
            model.n_layers,
        ),
    ]
    for w, b in zip(model.weights, model.biases):
        parts.append(struct.pack("<II", w.shape[0], w.shape[1]))
        parts.append(np.ascontiguousarray(w, dtype=f"<f{width}").tobytes())
        parts.append(np.ascontiguousarray(b, dtype=f"<f{width}").tobytes())
    payload = b"".join(parts)
    blob = payload + struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF)
    with open(path, "wb") as fh:
        fh.write(blob)
    if meta is not None:
        with open(f"{path}.meta.json", "w") as fh:
            json.dump(meta, fh, indent=2)
            fh.write("\n")


def load_checkpoint(path, dtype=None) -> MlpModel:
    """Reads a checkpoint; ``dtype`` overrides the stored precision."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 8 or blob[:4] != MAGIC:
        raise BadMagic(f"{path} is not a basis checkpoint")
    payload, tail = blob[:-4], blob[-4:]
    if len(blob) < 32 or struct.unpack("<I", tail)[0] != zlib.crc32(payload) & 0xFFFFFFFF:
        raise ChecksumMismatch(f"{path} failed its CRC check")
    version, width, dim, n_basis, m_circles, n_layers = struct.unpack(
        "<IIIIII", payload[4:28]
    )
    if version != VERSION:
        raise VersionMismatch(f"checkpoint version {version}, reader supports {VERSION}")
    np_dtype = np.dtype(f"<f{width}")
    off = 28
    weights, biases = [], []
    for _ in range(n_layers):
        rows, cols = struct.unpack("<II", payload[off:off + 8])
        off += 8
        wn = rows * cols * width
        weights.append(
            np.frombuffer(payload, dtype=np_dtype, count=rows * cols, offset=off)
            .reshape(rows, cols)
            .copy()
        )
        off += wn
        biases.append(
            np.frombuffer(payload, dtype=np_dtype, count=rows, offset=off).copy()
        )
        off += rows * width
    model = MlpModel(weights, biases, dim, n_basis, m_circles)
    if dtype is not None and np.dtype(dtype) != model.dtype:
        model = model.astype(dtype)
    return model
