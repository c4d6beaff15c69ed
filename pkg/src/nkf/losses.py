"""The six physics losses and their weighted aggregate.

All losses are Monte Carlo estimates over annotated sample points. Inputs
are the stacked basis values ``(n, b, dim)`` and, where derivatives are
needed, the per-basis Jacobians ``(n, b, dim, dim)`` with
``jac[i, k, a, j] = d phi_k_a / d p_j``.

Normalizers: W = sum of mask weights, S = W*b for per-basis point sums,
S_b = b * sum of band weights for the boundary term, and S_o = W*b(b-1)/2
for the pair sum of the orthogonality term.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMask, MissingTangents
from .geometry import SampleSet

COSSIM_EPS = 1e-12


@dataclass(frozen=True)
class LossWeights:
    """Aggregation weights plus the two loss-internal constants.

    ``orth_mode`` picks how the pair term enters the aggregate:
    "pointwise" (default) squares per-sample products, matching the
    standalone :func:`loss_orth`; "integral" squares the Monte Carlo
    average of each pair's inner product, the direct rendering of the
    average-orthogonality invariant (ten vectors in the plane can never be
    pairwise orthogonal pointwise, so only this form can reach zero);
    "raw" keeps the signed per-sample sum for ablation.
    """

    smooth: float = 0.01
    div: float = 5.0
    orth: float = 100.0
    bc: float = 30.0
    length: float = 100.0
    small: float = 100.0
    delta: float = 0.05
    c_target: float = 0.37
    orth_mode: str = "pointwise"

    def __post_init__(self):
        if self.orth_mode not in ("integral", "pointwise", "raw"):
            raise ValueError(f"unknown orth_mode {self.orth_mode!r}")


@dataclass
class LossReport:
    """Per-component values, normalizers and the weighted total."""

    div: float
    bc: float
    orth: float
    length: float
    small: float
    smooth: float
    total: float
    W: float
    S_b: float
    S_o: float
    degenerate: bool = False

    def to_json(self) -> dict:
        return {
            "div": self.div,
            "bc": self.bc,
            "orth": self.orth,
            "len": self.length,
            "small": self.small,
            "smooth": self.smooth,
            "total": self.total,
            "W": self.W,
        }


def _check(values, jacobians, samples, need_tangents):
    values = np.asarray(values)
    n, b, dim = values.shape
    if len(samples) != n:
        raise ValueError(f"{n} bundles vs {len(samples)} samples")
    if need_tangents:
        if jacobians is None:
            raise MissingTangents("this loss needs Jacobians")
        jacobians = np.asarray(jacobians)
        if jacobians.shape != (n, b, dim, dim):
            raise ValueError(f"jacobian shape {jacobians.shape}")
    return values, jacobians, n, b, dim


def loss_div(values, jacobians, samples: SampleSet) -> float:
    """Mask-weighted mean squared divergence across bases."""
    values, jacobians, n, b, dim = _check(values, jacobians, samples, True)
    W = samples.mask_w.sum()
    if W <= 0:
        return 0.0
    div = np.einsum("nkaa->nk", jacobians)
    return float(np.einsum("nk,n->", div**2, samples.mask_w) / (W * b))


def loss_bc(values, jacobians, samples: SampleSet) -> float:
    """Band-weighted squared cosine of basis against the boundary normal."""
    values, _, n, b, dim = _check(values, jacobians, samples, False)
    wb = samples.band_wb
    S_b = b * wb.sum()
    if S_b <= 0:
        return 0.0
    sel = wb > 0
    v = values[sel]
    nrm = samples.normals[sel]
    cs = _cossim(v, nrm[:, None, :])
    return float(np.einsum("nk,n->", cs**2, wb[sel]) / S_b)


def _cossim(v, n):
    num = np.sum(v * n, axis=-1)
    den = np.linalg.norm(v, axis=-1) * np.linalg.norm(n, axis=-1) + COSSIM_EPS
    return num / den


def loss_orth(values, jacobians, samples: SampleSet, ortho_raw: bool = False) -> float:
    """Mean squared per-sample inner product over distinct basis pairs.

    Zero exactly when the bases are pointwise orthogonal on the mask
    support. ``ortho_raw`` drops the square (ablation).
    """
    values, _, n, b, dim = _check(values, jacobians, samples, False)
    if b < 2:
        return 0.0
    W = samples.mask_w.sum()
    if W <= 0:
        return 0.0
    gram = np.einsum("nkd,nld->nkl", values, values)
    iu = np.triu_indices(b, k=1)
    pairs = gram[:, iu[0], iu[1]]
    if not ortho_raw:
        pairs = pairs**2
    S_o = W * b * (b - 1) / 2
    return float(np.einsum("np,n->", pairs, samples.mask_w) / S_o)


def loss_orth_integral(values, jacobians, samples: SampleSet) -> float:
    """Squared Monte Carlo Gram off-diagonals, averaged over pairs.

    Renders the average-orthogonality invariant directly: the loss is zero
    exactly when every pair's mask-weighted mean inner product vanishes.
    """
    values, _, n, b, dim = _check(values, jacobians, samples, False)
    if b < 2:
        return 0.0
    W = samples.mask_w.sum()
    if W <= 0:
        return 0.0
    gram = np.einsum("nkd,nld,n->kl", values, values, samples.mask_w) / W
    iu = np.triu_indices(b, k=1)
    return float(np.sum(gram[iu] ** 2) / (b * (b - 1) / 2))


def loss_len(values, jacobians, samples: SampleSet, c_target: float = 0.37) -> float:
    """Deviation of each basis' mean length from the target."""
    values, _, n, b, dim = _check(values, jacobians, samples, False)
    W = samples.mask_w.sum()
    if W <= 0:
        raise DegenerateMask("no sample carries mask weight")
    norms = np.linalg.norm(values, axis=-1)
    means = np.einsum("nk,n->k", norms, samples.mask_w) / W
    return float(np.sum((means - c_target) ** 2) / b)


def loss_small(values, jacobians, samples: SampleSet, delta: float = 0.05) -> float:
    """Hinge penalty on basis vectors shorter than delta."""
    values, _, n, b, dim = _check(values, jacobians, samples, False)
    W = samples.mask_w.sum()
    if W <= 0:
        return 0.0
    norms = np.linalg.norm(values, axis=-1)
    hinge = np.maximum(0.0, delta - norms)
    return float(np.einsum("nk,n->", hinge, samples.mask_w) / (W * b))


def loss_smooth(values, jacobians, samples: SampleSet) -> float:
    """Mask-weighted mean squared Frobenius norm of the Jacobians."""
    values, jacobians, n, b, dim = _check(values, jacobians, samples, True)
    W = samples.mask_w.sum()
    if W <= 0:
        return 0.0
    frob2 = np.einsum("nkaj,nkaj->nk", jacobians, jacobians)
    return float(np.einsum("nk,n->", frob2, samples.mask_w) / (W * b))


def loss_total(
    values, jacobians, samples: SampleSet, weights: LossWeights = LossWeights()
) -> LossReport:
    """Weighted sum of the six losses; degenerate batches come back flagged."""
    report, _, _ = loss_total_and_grads(values, jacobians, samples, weights)
    return report


def loss_total_and_grads(
    values, jacobians, samples: SampleSet, weights: LossWeights = LossWeights()
):
    """Aggregate loss along with its gradients w.r.t. values and Jacobians.

    Returns ``(report, d_values, d_jacobians)``; gradient arrays are f64 and
    match the input shapes.
    """
    values, jacobians, n, b, dim = _check(values, jacobians, samples, True)
    v = values.astype(np.float64)
    J = jacobians.astype(np.float64)
    w = samples.mask_w
    wb = samples.band_wb
    W = float(w.sum())
    S_b = float(b * wb.sum())
    n_pairs = b * (b - 1) / 2
    S_o = W * n_pairs

    dv = np.zeros_like(v)
    dJ = np.zeros_like(J)

    if W <= 0:
        report = LossReport(
            0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, W, S_b, S_o, degenerate=True
        )
        return report, dv, dJ
    S = W * b

    norms = np.linalg.norm(v, axis=-1)  # (n, b)
    safe = np.maximum(norms, 1e-300)
    unit = v / safe[..., None]

    # divergence
    div = np.einsum("nkaa->nk", J)
    l_div = float(np.einsum("nk,n->", div**2, w) / S)
    gd = (2.0 / S) * div * w[:, None]
    eye = np.eye(dim)
    dJ += weights.div * gd[:, :, None, None] * eye

    # boundary alignment
    if S_b > 0:
        sel = wb > 0.0
        vsel = v[sel]
        nsel = samples.normals[sel]
        vn = np.linalg.norm(vsel, axis=-1)
        den = vn * 1.0 + COSSIM_EPS  # normals are unit length
        num = np.einsum("nkd,nd->nk", vsel, nsel)
        cs = num / den
        l_bc = float(np.einsum("nk,n->", cs**2, wb[sel]) / S_b)
        # d cs / d v = n / den - cs * v_hat / den  (v_hat = v / |v|)
        vhat = vsel / np.maximum(vn, 1e-300)[..., None]
        dcs = (nsel[:, None, :] - cs[..., None] * vhat) / den[..., None]
        dv[sel] += weights.bc * (2.0 / S_b) * (cs * wb[sel, None])[..., None] * dcs
    else:
        l_bc = 0.0

    # orthogonality over pairs
    n_pairs_f = b * (b - 1) / 2
    if b >= 2:
        idx = np.arange(b)
        iu = np.triu_indices(b, k=1)
        if weights.orth_mode == "integral":
            gram = np.einsum("nkd,nld,n->kl", v, v, w) / W
            goff = gram.copy()
            goff[idx, idx] = 0.0
            l_orth = float(np.sum(gram[iu] ** 2) / n_pairs_f)
            # d/dv[i,k] of sum_{k<l} G_kl^2: both triangle entries feed k
            dv += weights.orth * (2.0 / (W * n_pairs_f)) * np.einsum(
                "kl,nld->nkd", goff, v
            ) * w[:, None, None]
        else:
            gram = np.einsum("nkd,nld->nkl", v, v)
            off = gram.copy()
            off[:, idx, idx] = 0.0
            pairs = gram[:, iu[0], iu[1]]
            if weights.orth_mode == "raw":
                l_orth = float(np.einsum("np,n->", pairs, w) / S_o)
                ones = np.ones_like(off)
                ones[:, idx, idx] = 0.0
                dv += weights.orth * np.einsum("nkl,nld->nkd", ones, v) * (
                    w[:, None, None] / S_o
                )
            else:
                l_orth = float(np.einsum("np,n->", pairs**2, w) / S_o)
                dv += weights.orth * (2.0 / S_o) * np.einsum(
                    "nkl,nld->nkd", off, v
                ) * w[:, None, None]
    else:
        l_orth = 0.0

    # mean length
    means = np.einsum("nk,n->k", norms, w) / W
    l_len = float(np.sum((means - weights.c_target) ** 2) / b)
    coef = (2.0 / b) * (means - weights.c_target) / W  # (b,)
    dv += weights.length * coef[None, :, None] * unit * w[:, None, None]

    # small-basis hinge
    hinge = np.maximum(0.0, weights.delta - norms)
    l_small = float(np.einsum("nk,n->", hinge, w) / S)
    active = (hinge > 0.0) & (norms > 0.0)
    dv -= weights.small * (active / S)[..., None] * unit * w[:, None, None]

    # smoothness
    frob2 = np.einsum("nkaj,nkaj->nk", J, J)
    l_smooth = float(np.einsum("nk,n->", frob2, w) / S)
    dJ += weights.smooth * (2.0 / S) * J * w[:, None, None, None]

    total = (
        weights.div * l_div
        + weights.bc * l_bc
        + weights.orth * l_orth
        + weights.length * l_len
        + weights.small * l_small
        + weights.smooth * l_smooth
    )
    report = LossReport(
        l_div, l_bc, l_orth, l_len, l_small, l_smooth, total, W, S_b, S_o
    )
    return report, dv, dJ
