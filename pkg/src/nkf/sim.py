"""Semi-Lagrangian time stepping in coefficient space.

Each step back-traces a fresh set of in-domain projection points through
the current velocity, copies the upstream velocity as the target field,
and least-squares projects that field onto the bases of the next domain
configuration. Obstacles may move along a keyframe timeline; passive
particles ride the flow for visualization only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from . import geometry
from .basis import velocity
from .errors import StepFailed
from .geometry import DomainSpec
from .sketch import FitProblem, fit_alpha


@dataclass
class SimConfig:
    dt: float = 0.005
    n_projection_points: int = 4096
    ridge: float = 0.0  # the re-projection is plain least squares by default
    n_frames: int = 0
    keyframes: list[tuple[float, DomainSpec]] | None = None
    n_particles: int = 0
    rng_seed: int = 0
    grid_res: int = 64

    def __post_init__(self):
        if self.dt < 0:
            raise ValueError("dt must be nonnegative")
        if self.keyframes is not None:
            times = [t for t, _ in self.keyframes]
            if sorted(times) != times:
                raise ValueError("keyframes must be time-sorted")


@dataclass
class SimState:
    time: float
    alpha: np.ndarray
    domain: DomainSpec
    projection_points: np.ndarray  # (n, dim)
    particles: np.ndarray  # (p, dim)
    step_index: int = 0
    dropped_last_step: int = 0


def interpolate_domain(keyframes, base: DomainSpec, t: float) -> DomainSpec:
    """Per-circle linear interpolation between bracketing keyframes.

    Written as ``a + u * (b - a)`` so identical keyframes reproduce their
    spec bitwise. Outside the timeline the nearest keyframe holds.
    """
    if not keyframes:
        return base
    if t <= keyframes[0][0]:
        return keyframes[0][1]
    if t >= keyframes[-1][0]:
        return keyframes[-1][1]
    for (t0, d0), (t1, d1) in zip(keyframes[:-1], keyframes[1:]):
        if t0 <= t <= t1:
            u = (t - t0) / (t1 - t0) if t1 > t0 else 0.0
            centers = d0.centers + u * (d1.centers - d0.centers)
            radii = d0.radii + u * (d1.radii - d0.radii)
            return d0.with_circles(centers, radii)
    return keyframes[-1][1]


def initial_state(provider, alpha, config: SimConfig) -> SimState:
    if config.n_projection_points < provider.b:
        raise ValueError("need at least as many projection points as bases")
    base = provider.spec if hasattr(provider, "spec") else _unit_domain()
    domain = interpolate_domain(config.keyframes, base, 0.0)
    proj = geometry.stratified_interior_points(
        domain, config.n_projection_points, _proj_seed(config.rng_seed, 0)
    )
    if config.n_particles > 0:
        particles = geometry.stratified_interior_points(
            domain, config.n_particles, _particle_seed(config.rng_seed)
        )
    else:
        particles = np.empty((0, domain.dim))
    return SimState(
        time=0.0,
        alpha=np.asarray(alpha, dtype=np.float64),
        domain=domain,
        projection_points=proj,
        particles=particles,
    )


def _unit_domain() -> DomainSpec:
    # fallback spec for the analytic provider: obstacle-free rounded box
    return DomainSpec(
        dim=2, centers=np.array([[0.5, 0.5]]), radii=np.array([1e-6]),
        corner_radius=0.0,
    )


def _proj_seed(seed: int, step_index: int):
    return (seed, 2718, step_index)


def _particle_seed(seed: int):
    return (seed, 3141)


def step(provider, state: SimState, config: SimConfig) -> SimState:
    """Advance the coefficients by one semi-Lagrangian step."""
    if not np.all(np.isfinite(state.alpha)):
        raise StepFailed("coefficients are not finite")
    t_next = (state.step_index + 1) * config.dt
    next_domain = interpolate_domain(config.keyframes, state.domain, t_next)

    cur = provider.with_domain(state.domain)
    nxt = provider.with_domain(next_domain)

    proj = geometry.stratified_interior_points(
        next_domain, config.n_projection_points,
        _proj_seed(config.rng_seed, state.step_index + 1),
    )

    v_here = velocity(cur, state.alpha, proj)
    origins = proj - v_here * config.dt
    origins, ok = geometry.project_with_status(origins, state.domain)
    dropped = int((~ok).sum())
    if dropped * 2 > proj.shape[0]:
        raise StepFailed(
            f"{dropped} of {proj.shape[0]} back-traced points failed projection"
        )
    keep = ok
    targets = velocity(cur, state.alpha, origins[keep])

    alpha_next = fit_alpha(nxt, FitProblem(proj[keep], targets, ridge=config.ridge))
    return SimState(
        time=t_next,
        alpha=alpha_next,
        domain=next_domain,
        projection_points=proj,
        particles=state.particles,
        step_index=state.step_index + 1,
        dropped_last_step=dropped,
    )


def advect_particles(provider, state: SimState, config: SimConfig) -> np.ndarray:
    """Explicit Euler for the passive markers; strays project back inside."""
    if state.particles.shape[0] == 0:
        return state.particles
    cur = provider.with_domain(state.domain)
    v = velocity(cur, state.alpha, state.particles)
    moved = state.particles + v * config.dt
    moved, ok = geometry.project_with_status(moved, state.domain)
    if not ok.all():
        # vanishing-gradient stragglers snap to the nearest cached boundary point
        cloud = geometry.boundary_point_cloud(state.domain, resolution=48)
        bad = np.flatnonzero(~ok)
        if cloud.shape[0]:
            d = np.linalg.norm(moved[bad][:, None, :] - cloud[None], axis=-1)
            moved[bad] = cloud[np.argmin(d, axis=1)]
    return moved


def field_grid(provider, state: SimState, nx: int, ny: int):
    """Velocity sampled on a regular grid over the unit square.

    Values outside the fluid are zeroed so every consumer renders sensibly.
    """
    xs = np.linspace(0.0, 1.0, nx)
    ys = np.linspace(0.0, 1.0, ny)
    grid = np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1).reshape(-1, 2)
    cur = provider.with_domain(state.domain)
    v = velocity(cur, state.alpha, grid)
    outside = geometry.composite_field(grid, state.domain) > 0.0
    v[outside] = 0.0
    return v.reshape(nx, ny, 2)


def frame_record(provider, state: SimState, config: SimConfig) -> dict:
    v = field_grid(provider, state, config.grid_res, config.grid_res)
    return {
        "t": state.time,
        "alpha": [float(a) for a in state.alpha],
        "grid": {
            "nx": config.grid_res,
            "ny": config.grid_res,
            "u": [float(x) for x in v[:, :, 0].ravel()],
            "v": [float(x) for x in v[:, :, 1].ravel()],
        },
        "particles": [[float(x) for x in p] for p in state.particles],
    }


def run(provider, alpha0, config: SimConfig, out_dir=None):
    """Yield one frame record per time step, the initial state included.

    With ``out_dir`` each record is also written as ``frame_%05d.json``.
    """
    state = initial_state(provider, alpha0, config)
    for frame in range(config.n_frames + 1):
        record = frame_record(provider, state, config)
        if out_dir is not None:
            path = f"{out_dir}/frame_{frame:05d}.json"
            with open(path, "w") as fh:
                json.dump(record, fh)
                fh.write("\n")
        yield record
        if frame == config.n_frames:
            break
        particles = advect_particles(provider, state, config)
        state = step(provider, state, config)
        state = replace(state, particles=particles)
