"""Implicit geometry of the fluid domain.

The domain is the unit square (cube in 3D) with rounded corners minus an
obstacle blob built from ``m`` circles (spheres). A single scalar field
``g`` encodes it: ``g < 0`` inside the fluid, ``g = 0`` on its boundary and
``g > 0`` outside, whether beyond the square or inside an obstacle. The
boundary band weight ``w_b``, the integration mask ``w``, boundary normals
and closest-point projection are all derived from ``g``.

Point arrays have shape ``(..., dim)``; scalar fields broadcast over the
leading axes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ProjectionFailed

GRAD_EPS = 1e-8  # below this gradient norm a normal is considered absent


@dataclass(frozen=True)
class DomainSpec:
    """Rounded square/cube minus a blob of m circles/spheres.

    ``centers`` is ``(m, dim)``, ``radii`` is ``(m,)``. ``band_eps`` is the
    boundary band half-width in composite-field units and doubles as the
    margin of the sampling box in coordinate units.
    """

    dim: int
    centers: np.ndarray
    radii: np.ndarray
    corner_radius: float = 0.2
    blend_k: float = 30.0
    band_eps: float = 0.05

    def __post_init__(self):
        centers = np.atleast_2d(np.asarray(self.centers, dtype=np.float64))
        radii = np.atleast_1d(np.asarray(self.radii, dtype=np.float64))
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "radii", radii)
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        if centers.ndim != 2 or centers.shape[1] != self.dim:
            raise ValueError(f"centers must be (m, {self.dim}), got {centers.shape}")
        if radii.shape != (centers.shape[0],):
            raise ValueError("radii must have one entry per circle")
        if centers.shape[0] < 1:
            raise ValueError("at least one circle is required")
        if not np.all(np.isfinite(centers)):
            raise ValueError("circle centers must be finite")
        if not np.all(radii > 0):
            raise ValueError("circle radii must be positive")
        if self.blend_k <= 0:
            raise ValueError("blend_k must be positive")
        if self.band_eps <= 0:
            raise ValueError("band_eps must be positive")
        if self.corner_radius < 0:
            raise ValueError("corner_radius must be nonnegative")

    @property
    def m(self) -> int:
        return self.centers.shape[0]

    def with_circles(self, centers, radii) -> "DomainSpec":
        return replace(self, centers=np.asarray(centers), radii=np.asarray(radii))

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "circles": [
                {"c": [float(x) for x in c], "r": float(r)}
                for c, r in zip(self.centers, self.radii)
            ],
            "corner_radius": float(self.corner_radius),
            "blend_k": float(self.blend_k),
            "band_eps": float(self.band_eps),
        }

    @classmethod
    def from_json(cls, data: dict) -> "DomainSpec":
        circles = data["circles"]
        return cls(
            dim=int(data["dim"]),
            centers=np.array([c["c"] for c in circles], dtype=np.float64),
            radii=np.array([c["r"] for c in circles], dtype=np.float64),
            corner_radius=float(data.get("corner_radius", 0.2)),
            blend_k=float(data.get("blend_k", 30.0)),
            band_eps=float(data.get("band_eps", 0.05)),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json())

    @classmethod
    def loads(cls, text: str) -> "DomainSpec":
        return cls.from_json(json.loads(text))


@dataclass(frozen=True)
class SamplePoint:
    """One annotated integration point."""

    position: np.ndarray
    mask_w: float
    band_wb: float
    normal: np.ndarray | None


@dataclass(frozen=True)
class SampleSet:
    """Annotated sample points, stored as arrays for vectorized consumers.

    Behaves as a sequence of :class:`SamplePoint`. ``normals`` rows are NaN
    where no normal is defined (``band_wb == 0``).
    """

    positions: np.ndarray  # (n, dim)
    mask_w: np.ndarray  # (n,)
    band_wb: np.ndarray  # (n,)
    normals: np.ndarray  # (n, dim), NaN where absent

    def __len__(self) -> int:
        return self.positions.shape[0]

    def __getitem__(self, idx):
        if isinstance(idx, (int, np.integer)):
            wb = float(self.band_wb[idx])
            return SamplePoint(
                position=self.positions[idx],
                mask_w=float(self.mask_w[idx]),
                band_wb=wb,
                normal=self.normals[idx] if wb > 0 else None,
            )
        return SampleSet(
            self.positions[idx], self.mask_w[idx], self.band_wb[idx], self.normals[idx]
        )

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    @property
    def total_mask(self) -> float:
        """W = sum of mask weights."""
        return float(self.mask_w.sum())

    @property
    def total_band(self) -> float:
        return float(self.band_wb.sum())


def concat_samples(sets: list[SampleSet]) -> SampleSet:
    return SampleSet(
        np.concatenate([s.positions for s in sets]),
        np.concatenate([s.mask_w for s in sets]),
        np.concatenate([s.band_wb for s in sets]),
        np.concatenate([s.normals for s in sets]),
    )


# ---------------------------------------------------------------------------
# Scalar fields
# ---------------------------------------------------------------------------

def circle_field(p, c, r):
    """Implicit circle/sphere ``||p - c||^2 - r^2`` (negative inside)."""
    p = np.asarray(p, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    return np.sum((p - c) ** 2, axis=-1) - float(r) ** 2


def blob_field(p, spec: DomainSpec):
    """Smooth-max blend of the obstacle circles.

    ``ln(sum_i exp(-k f_i)) / k`` approximates ``-min_i f_i`` for large k:
    positive inside the obstacle union, negative outside. Evaluated with a
    max shift so the exponentials never overflow.
    """
    p = np.asarray(p, dtype=np.float64)
    d2 = np.sum((p[..., None, :] - spec.centers) ** 2, axis=-1)  # (..., m)
    a = -spec.blend_k * (d2 - spec.radii**2)
    amax = a.max(axis=-1)
    return amax / spec.blend_k + np.log(
        np.exp(a - amax[..., None]).sum(axis=-1)
    ) / spec.blend_k


def _blob_gradient(p, spec: DomainSpec):
    p = np.asarray(p, dtype=np.float64)
    diff = p[..., None, :] - spec.centers  # (..., m, dim)
    d2 = np.sum(diff**2, axis=-1)
    a = -spec.blend_k * (d2 - spec.radii**2)
    a -= a.max(axis=-1, keepdims=True)
    w = np.exp(a)
    w /= w.sum(axis=-1, keepdims=True)
    return -2.0 * np.sum(w[..., None] * diff, axis=-2)


def rounded_box_field(p, corner_radius: float):
    """Exact signed distance to the unit box with rounded corners.

    Negative inside. Corner radius 0 yields the sharp box.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.abs(p - 0.5) - (0.5 - corner_radius)
    outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
    inside = np.minimum(q.max(axis=-1), 0.0)
    return outside + inside - corner_radius


def _rounded_box_gradient(p, corner_radius: float):
    p = np.asarray(p, dtype=np.float64)
    u = p - 0.5
    q = np.abs(u) - (0.5 - corner_radius)
    qpos = np.maximum(q, 0.0)
    norm = np.linalg.norm(qpos, axis=-1, keepdims=True)
    any_out = (q > 0.0).any(axis=-1)

    with np.errstate(invalid="ignore", divide="ignore"):
        grad_out = np.sign(u) * qpos / np.where(norm > 0.0, norm, 1.0)

    # Interior: distance follows the largest q component only.
    axis = np.argmax(q, axis=-1)
    grad_in = np.zeros_like(u)
    idx = np.indices(axis.shape, sparse=False)
    grad_in[(*idx, axis)] = np.sign(np.take_along_axis(u, axis[..., None], -1))[..., 0]

    return np.where(any_out[..., None], grad_out, grad_in)


def composite_field(p, spec: DomainSpec):
    """The domain field g: smooth max of the box distance and the blob.

    ``g < 0`` in the fluid, ``g = 0`` on its boundary, ``g > 0`` outside.
    """
    s = rounded_box_field(p, spec.corner_radius)
    f = blob_field(p, spec)
    k = spec.blend_k
    m = np.maximum(s, f)
    return m + np.log(np.exp(k * (s - m)) + np.exp(k * (f - m))) / k


def composite_gradient(p, spec: DomainSpec):
    """Analytic gradient of :func:`composite_field`."""
    s = rounded_box_field(p, spec.corner_radius)
    f = blob_field(p, spec)
    k = spec.blend_k
    # softmax weight of the box term, computed stably
    t = np.clip(k * (f - s), -700.0, 700.0)
    w_box = 1.0 / (1.0 + np.exp(t))
    gs = _rounded_box_gradient(p, spec.corner_radius)
    gf = _blob_gradient(p, spec)
    return w_box[..., None] * gs + (1.0 - w_box)[..., None] * gf


# ---------------------------------------------------------------------------
# Band weight, mask, normals
# ---------------------------------------------------------------------------

def _wb_from_field(g, eps: float):
    a = np.abs(g)
    d = 2.0 * a**3 / eps**3 - 3.0 * a**2 / eps**2 + 1.0
    d = np.where((a > eps) | (d < 0.0), 0.0, d)
    return d**4


def _mask_from_field(g, wb, eps: float):
    return np.where(g < 0.0, 1.0, np.where(g <= eps, wb, 0.0))


def boundary_indicator(p, spec: DomainSpec):
    """Quartic bump w_b, 1 on the boundary, 0 beyond the eps band."""
    return _wb_from_field(composite_field(p, spec), spec.band_eps)


def mask(p, spec: DomainSpec):
    """Integration mask w: 1 inside, w_b in the outer band, 0 beyond."""
    g = composite_field(p, spec)
    wb = _wb_from_field(g, spec.band_eps)
    return _mask_from_field(g, wb, spec.band_eps)


def boundary_normal(p, spec: DomainSpec):
    """Unit gradient of g (points out of the fluid); NaN where it vanishes."""
    grad = composite_gradient(p, spec)
    norm = np.linalg.norm(grad, axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        n = grad / norm
    return np.where(norm >= GRAD_EPS, n, np.nan)


# ---------------------------------------------------------------------------
# Projection
# ---------------------------------------------------------------------------

def project_with_status(p, spec: DomainSpec, tol: float = 1e-6, max_iter: int = 20):
    """Newton projection of each point onto ``g <= 0``.

    Returns ``(points, ok)``: points already inside pass through unchanged;
    outside points walk down g and get a final inward nudge of ``tol``.
    ``ok`` is False where the gradient vanished while ``g > tol``.
    """
    pts = np.array(np.atleast_2d(np.asarray(p, dtype=np.float64)))
    g = composite_field(pts, spec)
    ok = np.ones(pts.shape[0], dtype=bool)
    moved = g > 0.0
    active = g > tol
    for _ in range(max_iter):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        grad = composite_gradient(pts[idx], spec)
        gn2 = np.sum(grad**2, axis=-1)
        stalled = np.sqrt(gn2) < GRAD_EPS
        if stalled.any():
            ok[idx[stalled]] = False
            active[idx[stalled]] = False
            idx = idx[~stalled]
            grad = grad[~stalled]
            gn2 = gn2[~stalled]
            if idx.size == 0:
                continue
        pts[idx] -= (g[idx] / gn2)[:, None] * grad
        g[idx] = composite_field(pts[idx], spec)
        active[idx] = g[idx] > tol

    unconverged = ok & (g > tol)
    ok[unconverged] = False

    nudge = np.flatnonzero(moved & ok)
    if nudge.size:
        grad = composite_gradient(pts[nudge], spec)
        norm = np.linalg.norm(grad, axis=-1, keepdims=True)
        safe = norm[:, 0] >= GRAD_EPS
        pts[nudge[safe]] -= tol * grad[safe] / norm[safe]
        g_final = composite_field(pts[nudge], spec)
        ok[nudge[g_final > 1e-5]] = False

    out = pts if np.asarray(p).ndim > 1 else pts[0]
    return out, (ok if np.asarray(p).ndim > 1 else bool(ok[0]))


def project_to_domain(p, spec: DomainSpec, tol: float = 1e-6, max_iter: int = 20):
    """Like :func:`project_with_status` but raises on any failure."""
    pts, ok = project_with_status(p, spec, tol=tol, max_iter=max_iter)
    bad = np.flatnonzero(~np.atleast_1d(ok))
    if bad.size:
        raise ProjectionFailed(bad.tolist(), points=pts)
    return pts


def boundary_point_cloud(spec: DomainSpec, resolution: int = 64) -> np.ndarray:
    """Points on ``g = 0`` found by bisecting sign changes of a grid.

    Gradient-free, so it works where Newton projection stalls; used as the
    fallback target set when projection fails.
    """
    eps = spec.band_eps
    axes = [np.linspace(-eps, 1.0 + eps, resolution) for _ in range(spec.dim)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    g = composite_field(grid, spec)

    segs_a, segs_b = [], []
    for ax in range(spec.dim):
        lo = [slice(None)] * spec.dim
        hi = [slice(None)] * spec.dim
        lo[ax] = slice(None, -1)
        hi[ax] = slice(1, None)
        flip = (g[tuple(lo)] < 0.0) != (g[tuple(hi)] < 0.0)
        segs_a.append(grid[tuple(lo)][flip])
        segs_b.append(grid[tuple(hi)][flip])
    a = np.concatenate(segs_a)
    b = np.concatenate(segs_b)
    if a.shape[0] == 0:
        return np.empty((0, spec.dim))

    ga = composite_field(a, spec)
    for _ in range(40):
        mid = 0.5 * (a + b)
        gm = composite_field(mid, spec)
        left = (gm < 0.0) == (ga < 0.0)
        a = np.where(left[:, None], mid, a)
        ga = np.where(left, gm, ga)
        b = np.where(left[:, None], b, mid)
    return 0.5 * (a + b)


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def annotate_points(positions: np.ndarray, spec: DomainSpec) -> SampleSet:
    """Attach mask, band weight and normals to raw positions."""
    positions = np.atleast_2d(np.asarray(positions, dtype=np.float64))
    g = composite_field(positions, spec)
    wb = _wb_from_field(g, spec.band_eps)
    normals = np.full_like(positions, np.nan)
    band = wb > 0.0
    if band.any():
        n = boundary_normal(positions[band], spec)
        bad = ~np.isfinite(n).all(axis=-1)
        if bad.any():
            # A vanishing gradient in the band leaves no usable normal;
            # drop the point from the boundary term instead of emitting NaN.
            sub = np.flatnonzero(band)
            wb[sub[bad]] = 0.0
            n = n[~bad]
            band = wb > 0.0
        normals[band] = n
    w = _mask_from_field(g, wb, spec.band_eps)
    return SampleSet(positions, w, wb, normals)


def sample_points(spec: DomainSpec, n: int, rng_seed: int) -> SampleSet:
    """n i.i.d. uniform samples on the eps-padded box, annotated."""
    if n <= 0:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(rng_seed)
    eps = spec.band_eps
    positions = rng.uniform(-eps, 1.0 + eps, size=(n, spec.dim))
    return annotate_points(positions, spec)


def stratified_interior_points(spec: DomainSpec, n: int, rng_seed: int) -> np.ndarray:
    """Exactly n jittered-grid points with ``g < 0``, deterministic per seed.

    Cells are visited in raster order; extra passes with derived seeds run
    until enough interior points accumulate.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    entropy = (rng_seed,) if isinstance(rng_seed, (int, np.integer)) else tuple(rng_seed)
    per_axis = max(2, int(np.ceil((2.5 * n) ** (1.0 / spec.dim))))
    collected: list[np.ndarray] = []
    count = 0
    for attempt in range(64):
        rng = np.random.default_rng(np.random.SeedSequence(entropy + (977, attempt)))
        axes = [np.arange(per_axis) for _ in range(spec.dim)]
        cells = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, spec.dim)
        pts = (cells + rng.uniform(0.0, 1.0, cells.shape)) / per_axis
        inside = composite_field(pts, spec) < 0.0
        pts = pts[inside]
        collected.append(pts)
        count += pts.shape[0]
        if count >= n:
            break
    if count < n:
        raise RuntimeError("domain interior too small to place projection points")
    return np.concatenate(collected)[:n]
