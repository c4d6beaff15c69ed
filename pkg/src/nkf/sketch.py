"""Guide curves and the least-squares fit of initial coefficients.

A sketch scene is a domain plus a handful of streamline curves. Each curve
is sampled at uniformly spaced parameters; the normalized spline tangent
at each sample becomes a target velocity, scaled by the curve's speed
multiplier. Stacking all (point, target) pairs gives a small linear
least-squares problem for the coefficient vector.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .basis import velocity
from .errors import DegenerateCurve, SingularSystem
from .geometry import DomainSpec, composite_field


@dataclass
class GuideCurve:
    """Control polygon of one streamline.

    The curve through the control points is an interpolating piecewise
    cubic with centripetal parameterization; ``samples`` overrides the
    scene-wide sample count when set.
    """

    points: np.ndarray  # (k, dim)
    closed: bool = False
    speed: float = 1.0
    samples: int | None = None

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        object.__setattr__(self, "points", pts)
        if pts.shape[0] < 2:
            raise ValueError("a guide curve needs at least two control points")
        gaps = np.linalg.norm(np.diff(pts, axis=0), axis=-1)
        if np.any(gaps <= 1e-9):
            raise DegenerateCurve("consecutive control points coincide")

    def to_json(self) -> dict:
        return {
            "points": [[float(x) for x in p] for p in self.points],
            "closed": bool(self.closed),
            "speed": float(self.speed),
        }

    @classmethod
    def from_json(cls, data: dict) -> "GuideCurve":
        return cls(
            points=np.asarray(data["points"], dtype=np.float64),
            closed=bool(data.get("closed", False)),
            speed=float(data.get("speed", 1.0)),
        )


@dataclass
class SketchScene:
    domain: DomainSpec
    curves: list[GuideCurve] = field(default_factory=list)
    samples_per_curve: int = 64

    def to_json(self) -> dict:
        return {
            "domain": self.domain.to_json(),
            "curves": [c.to_json() for c in self.curves],
            "samples_per_curve": int(self.samples_per_curve),
        }

    @classmethod
    def from_json(cls, data: dict) -> "SketchScene":
        return cls(
            domain=DomainSpec.from_json(data["domain"]),
            curves=[GuideCurve.from_json(c) for c in data.get("curves", [])],
            samples_per_curve=int(data.get("samples_per_curve", 64)),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json())

    @classmethod
    def loads(cls, text: str) -> "SketchScene":
        return cls.from_json(json.loads(text))


@dataclass
class FitProblem:
    """Stacked (point, target velocity) pairs plus the ridge parameter."""

    points: np.ndarray  # (n, dim)
    targets: np.ndarray  # (n, dim)
    ridge: float = 1e-6


def _spline(curve: GuideCurve) -> CubicSpline:
    pts = curve.points
    if curve.closed:
        pts = np.vstack([pts, pts[:1]])
    # centripetal knots: spacing by sqrt of chord length
    gaps = np.linalg.norm(np.diff(pts, axis=0), axis=-1)
    t = np.concatenate([[0.0], np.cumsum(np.sqrt(gaps))])
    t /= t[-1]
    bc = "periodic" if curve.closed else "not-a-knot"
    return CubicSpline(t, pts, bc_type=bc, axis=0)


def sample_curve(curve: GuideCurve, n: int | None = None):
    """Uniform parameter samples with normalized, speed-scaled tangents.

    Samples with a vanishing derivative are skipped; a curve whose every
    sample vanishes is degenerate.
    """
    n = n if n is not None else (curve.samples or 64)
    spline = _spline(curve)
    # closed curves wrap, so the endpoint duplicates parameter 0
    t = np.linspace(0.0, 1.0, n, endpoint=not curve.closed)
    pts = spline(t)
    deriv = spline(t, 1)
    norms = np.linalg.norm(deriv, axis=-1)
    keep = norms >= 1e-8
    if not keep.any():
        raise DegenerateCurve("all curve samples had vanishing derivatives")
    tangents = deriv[keep] / norms[keep, None] * curve.speed
    return pts[keep], tangents


def fit_problem_from_scene(scene: SketchScene, ridge: float = 1e-6) -> FitProblem:
    """Collect in-domain samples from every curve of the scene."""
    pts_all, tg_all = [], []
    for curve in scene.curves:
        pts, tg = sample_curve(curve, curve.samples or scene.samples_per_curve)
        inside = composite_field(pts, scene.domain) <= 0.0
        if not inside.all():
            warnings.warn(
                f"dropping {int((~inside).sum())} curve samples outside the domain",
                stacklevel=2,
            )
        pts_all.append(pts[inside])
        tg_all.append(tg[inside])
    if pts_all:
        points = np.concatenate(pts_all)
        targets = np.concatenate(tg_all)
    else:
        points = np.empty((0, scene.domain.dim))
        targets = np.empty((0, scene.domain.dim))
    return FitProblem(points, targets, ridge)


def fit_alpha(provider, problem: FitProblem) -> np.ndarray:
    """Ridge least squares of the targets onto the basis span.

    Solves the normal equations of the system stacking ``dim`` rows per
    sample; with ``ridge == 0`` a singular Gram matrix raises.
    """
    n = problem.points.shape[0]
    if n == 0:
        return np.zeros(provider.b)
    if n < provider.b:
        warnings.warn(
            f"{n} samples for {provider.b} coefficients; fit is underdetermined",
            stacklevel=2,
        )
    if not np.all(np.isfinite(problem.targets)):
        raise ValueError("fit targets must be finite")
    vals = provider.evaluate(problem.points)  # (n, b, dim)
    a = vals.transpose(0, 2, 1).reshape(n * provider.dim, provider.b)
    y = problem.targets.reshape(n * provider.dim)
    gram = a.T @ a
    rhs = a.T @ y
    if problem.ridge > 0.0:
        gram = gram + problem.ridge * np.eye(provider.b)
    try:
        alpha = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem("normal equations are singular; enable ridge") from exc
    return alpha


def fit_residual(provider, problem: FitProblem, alpha: np.ndarray) -> float:
    """Root mean squared velocity error of a fit at its own sample points."""
    if problem.points.shape[0] == 0:
        return 0.0
    v = velocity(provider, alpha, problem.points)
    return float(np.sqrt(np.mean(np.sum((v - problem.targets) ** 2, axis=-1))))
