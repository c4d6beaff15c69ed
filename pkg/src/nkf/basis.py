"""Basis providers: the neural network and an analytic oracle.

Both expose the same surface: ``evaluate`` returns the stacked basis
vectors ``(n, b, dim)`` and ``evaluate_with_jacobian`` adds the per-basis
Jacobians ``(n, b, dim, dim)``. The neural provider is conditioned on a
:class:`~nkf.geometry.DomainSpec`; the analytic provider is only valid on
the empty unit square and exists as a correctness oracle: each of its
modes is the curl of a sine stream function, hence exactly divergence-free
with zero normal flow through the box edges.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import mlp
from .errors import DegenerateMask, DimMismatch
from .geometry import DomainSpec, SampleSet


def domain_encoding(spec: DomainSpec) -> np.ndarray:
    """Conditioning vector [c_1, r_1, ..., c_m, r_m]."""
    parts = np.concatenate(
        [spec.centers, spec.radii[:, None]], axis=1
    )  # (m, dim + 1)
    return parts.ravel()


def bundle_to_basis_arrays(bundle: mlp.ForwardBundle, b: int, dim: int):
    """Reshape a network bundle into basis-major values and Jacobians."""
    value = np.atleast_2d(bundle.value)
    n = value.shape[0]
    values = value.reshape(n, b, dim)
    jac = None
    if bundle.tangents is not None:
        t = bundle.tangents.reshape(n, dim, b, dim)
        jac = t.transpose(0, 2, 3, 1)  # (n, b, dim_component, dim_input)
    return values, jac


def basis_grads_to_bundle(d_values: np.ndarray, d_jacobians: np.ndarray):
    """Inverse of :func:`bundle_to_basis_arrays` for upstream gradients."""
    n, b, dim = d_values.shape
    gv = d_values.reshape(n, b * dim)
    gt = d_jacobians.transpose(0, 3, 1, 2).reshape(n, dim, b * dim)
    return gv, gt


class NeuralBasis:
    """The trained network bound to one obstacle configuration."""

    def __init__(self, model: mlp.MlpModel, spec: DomainSpec):
        if model.dim != spec.dim:
            raise DimMismatch(f"model dim {model.dim} vs domain dim {spec.dim}")
        if model.m_circles != spec.m:
            raise DimMismatch(
                f"model conditioned on {model.m_circles} circles, domain has {spec.m}"
            )
        self.model = model
        self.spec = spec
        self.rho = domain_encoding(spec)

    @property
    def b(self) -> int:
        return self.model.n_basis

    @property
    def dim(self) -> int:
        return self.model.dim

    def with_domain(self, spec: DomainSpec) -> "NeuralBasis":
        return NeuralBasis(self.model, spec)

    def _points(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if points.shape[1] != self.dim:
            raise DimMismatch(f"points of dim {points.shape[1]}")
        return points

    def evaluate(self, points) -> np.ndarray:
        pts = self._points(points)
        out = mlp.forward(self.model, pts, self.rho)
        return out.reshape(pts.shape[0], self.b, self.dim).astype(np.float64)

    def evaluate_with_jacobian(self, points):
        pts = self._points(points)
        bundle = mlp.forward_with_tangents(self.model, pts, self.rho)
        values, jac = bundle_to_basis_arrays(bundle, self.b, self.dim)
        return values.astype(np.float64), jac.astype(np.float64)


def default_modes(b: int = 10) -> np.ndarray:
    """The b lowest (k1, k2) wave pairs, ordered by k1^2 + k2^2 then lexicographically."""
    k = int(np.ceil(np.sqrt(b))) + 2
    pairs = [(i, j) for i in range(1, k + 1) for j in range(1, k + 1)]
    pairs.sort(key=lambda p: (p[0] ** 2 + p[1] ** 2, p))
    return np.array(pairs[:b], dtype=np.int64)


class AnalyticBasis:
    """Divergence-free eigenmodes of the empty unit square.

    Mode (k1, k2) is the curl of psi = sin(k1 pi x) sin(k2 pi y):
    phi = (k2 pi sin(k1 pi x) cos(k2 pi y), -k1 pi cos(k1 pi x) sin(k2 pi y)).
    """

    dim = 2

    def __init__(self, modes: np.ndarray | None = None, b: int = 10):
        self.modes = default_modes(b) if modes is None else np.asarray(modes)
        self.b = self.modes.shape[0]

    def with_domain(self, spec: DomainSpec) -> "AnalyticBasis":
        return self  # the oracle ignores obstacles by design

    def _trig(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if pts.shape[1] != 2:
            raise DimMismatch("analytic basis is 2-D only")
        k1 = self.modes[:, 0] * np.pi  # (b,)
        k2 = self.modes[:, 1] * np.pi
        x = pts[:, :1]
        y = pts[:, 1:]
        return pts, k1, k2, np.sin(k1 * x), np.cos(k1 * x), np.sin(k2 * y), np.cos(k2 * y)

    def evaluate(self, points) -> np.ndarray:
        pts, k1, k2, s1, c1, s2, c2 = self._trig(points)
        u = k2 * s1 * c2
        v = -k1 * c1 * s2
        return np.stack([u, v], axis=-1)

    def evaluate_with_jacobian(self, points):
        pts, k1, k2, s1, c1, s2, c2 = self._trig(points)
        values = np.stack([k2 * s1 * c2, -k1 * c1 * s2], axis=-1)
        n = pts.shape[0]
        jac = np.empty((n, self.b, 2, 2))
        cross = (k1 * k2) * c1 * c2  # shared term keeps the trace exactly zero
        jac[:, :, 0, 0] = cross
        jac[:, :, 0, 1] = -(k2 * k2) * s1 * s2
        jac[:, :, 1, 0] = (k1 * k1) * s1 * s2
        jac[:, :, 1, 1] = -cross
        return values, jac


def velocity(provider, alpha, points) -> np.ndarray:
    """v(p) = sum_k phi_k(p) alpha_k."""
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.shape != (provider.b,):
        raise DimMismatch(f"alpha has {alpha.shape}, provider emits {provider.b} bases")
    vals = provider.evaluate(points)
    out = np.einsum("nkd,k->nd", vals, alpha)
    return out[0] if np.asarray(points).ndim == 1 else out


def gram_matrix(provider, samples: SampleSet) -> np.ndarray:
    """Monte Carlo inner products G_kl = sum_i <phi_k, phi_l> w_i / W."""
    W = samples.mask_w.sum()
    if W <= 0:
        raise DegenerateMask("no sample carries mask weight")
    vals = provider.evaluate(samples.positions)
    g = np.einsum("nkd,nld,n->kl", vals, vals, samples.mask_w) / W
    iu = np.triu_indices(provider.b, k=1)
    g[(iu[1], iu[0])] = g[iu]  # mirror: symmetric by construction
    return g


@dataclass
class FieldStats:
    """Weighted histogram plus mean of a per-point per-basis quantity."""

    mean: float
    edges: np.ndarray
    mass: np.ndarray

    def to_json(self) -> dict:
        return {
            "mean": self.mean,
            "edges": [float(e) for e in self.edges],
            "mass": [float(m) for m in self.mass],
        }


def weighted_stats(samples_values, weights, bins=64, vmax=None) -> FieldStats:
    v = np.asarray(samples_values, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != v.shape:
        # per-point weights broadcast across trailing value axes
        w = np.broadcast_to(w.reshape(w.shape + (1,) * (v.ndim - w.ndim)), v.shape)
    flat = v.ravel()
    wrep = w.ravel()
    wsum = wrep.sum()
    if wsum <= 0:
        raise DegenerateMask("no weight mass for statistics")
    mean = float((flat * wrep).sum() / wsum)
    hi = float(flat.max()) if vmax is None else float(vmax)
    if hi <= 0:
        hi = 1e-12
    counts, edges = np.histogram(flat, bins=bins, range=(0.0, hi), weights=wrep)
    tail = wrep[flat > hi].sum()  # mass beyond a shared range folds into the last bin
    counts[-1] += tail
    return FieldStats(mean, edges, counts / wsum)


def divergence_stats(provider, samples: SampleSet, bins: int = 64, vmax=None) -> FieldStats:
    """Distribution of |div phi_k| over the masked sample set."""
    _, jac = provider.evaluate_with_jacobian(samples.positions)
    div = np.abs(np.einsum("nkaa->nk", jac))
    return weighted_stats(div, samples.mask_w, bins=bins, vmax=vmax)


def boundary_stats(provider, samples: SampleSet, bins: int = 64, vmax=1.0) -> FieldStats:
    """Distribution of cossim^2 against boundary normals on the band."""
    sel = samples.band_wb > 0
    if not sel.any():
        raise DegenerateMask("no band points in the sample set")
    vals = provider.evaluate(samples.positions[sel])
    nrm = samples.normals[sel]
    num = np.einsum("nkd,nd->nk", vals, nrm)
    den = np.linalg.norm(vals, axis=-1) + 1e-12
    cs2 = (num / den) ** 2
    return weighted_stats(cs2, samples.band_wb[sel], bins=bins, vmax=vmax)
