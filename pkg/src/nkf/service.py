"""Interactive sketch sessions over a JSON WebSocket protocol.

One connection is one session: a state machine owning a scene, the fitted
coefficients and an optional play loop. Messages are JSON objects with a
``type`` and an optional ``id``; every request gets exactly one reply
carrying the same id (``<type>_ok`` or an error envelope). While playing,
the session additionally streams ``frame`` messages with monotonically
increasing timestamps. Malformed input never kills the session.

Protocol v1 message types: hello, set_domain, add_curve, update_curve,
remove_curve, fit, step, play, pause, get_field, get_particles,
set_keyframes, reset.
"""

from __future__ import annotations

import asyncio
import base64
import json
from dataclasses import replace

import numpy as np
import websockets

from . import sim
from .basis import NeuralBasis
from .errors import NkfError
from .geometry import DomainSpec
from .mlp import load_checkpoint
from .sim import SimConfig
from .sketch import GuideCurve, SketchScene, fit_alpha, fit_problem_from_scene, fit_residual

PROTOCOL_VERSION = 1


class SessionError(Exception):
    def __init__(self, code: str, message: str):
        self.code = code
        super().__init__(message)


class Session:
    """Per-connection state machine around one shared read-only model."""

    def __init__(self, model, config: SimConfig):
        self.model = model
        self.base_config = config
        self.scene = SketchScene(domain=_default_domain(model.m_circles))
        self.curves: dict[int, GuideCurve] = {}
        self.next_curve_id = 1
        self.alpha: np.ndarray | None = None
        self.state = None
        self.keyframes = None
        self.dt = config.dt
        self.grid_res = config.grid_res
        self.binary_grid = False
        self.playing = False
        self.refit_pending = False
        self.frame_seq = 0

    # -- scene ---------------------------------------------------------

    def provider(self, domain=None) -> NeuralBasis:
        return NeuralBasis(self.model, domain or self.scene.domain)

    def sync_scene_curves(self) -> None:
        self.scene.curves = [self.curves[k] for k in sorted(self.curves)]

    def refit(self) -> tuple[np.ndarray, float]:
        self.sync_scene_curves()
        provider = self.provider()
        problem = fit_problem_from_scene(self.scene, ridge=1e-6)
        alpha = fit_alpha(provider, problem)
        residual = fit_residual(provider, problem, alpha)
        self.alpha = alpha
        self.state = sim.initial_state(provider, alpha, self.config())
        self.refit_pending = False
        return alpha, residual

    def config(self) -> SimConfig:
        return replace(
            self.base_config, dt=self.dt, keyframes=self.keyframes,
            grid_res=self.grid_res,
        )

    def after_edit(self) -> bool:
        """Curve and domain edits re-fit now when paused, later when playing."""
        if self.playing:
            self.refit_pending = True
            return False
        if self.alpha is not None:
            self.refit()
            return True
        return False

    # -- stepping ------------------------------------------------------

    def require_state(self):
        if self.alpha is None or self.state is None:
            raise SessionError("no_coefficients", "no coefficients: fit first")
        return self.state

    def step_once(self) -> None:
        state = self.require_state()
        if self.refit_pending:
            self.refit()
            state = self.state
        config = self.config()
        particles = sim.advect_particles(self.provider(state.domain), state, config)
        self.state = replace(sim.step(self.provider(state.domain), state, config),
                             particles=particles)
        self.alpha = self.state.alpha

    def frame_message(self) -> dict:
        state = self.require_state()
        config = self.config()
        record = sim.frame_record(self.provider(state.domain), state, config)
        self.frame_seq += 1
        msg = {"type": "frame", "seq": self.frame_seq, **record}
        if self.binary_grid:
            grid = msg["grid"]
            for key in ("u", "v"):
                arr = np.asarray(grid[key], dtype=np.float32)
                grid[key] = base64.b64encode(arr.tobytes()).decode("ascii")
            grid["encoding"] = "b64f32"
        return msg


def _default_domain(m: int) -> DomainSpec:
    centers = np.column_stack([
        np.full(m, 0.45) + 0.01 * np.arange(m), np.full(m, 0.45),
    ])
    return DomainSpec(dim=2, centers=centers, radii=np.full(m, 0.04))


def _error(msg_id, code, message) -> str:
    return json.dumps(
        {"type": "error", "id": msg_id, "error": {"code": code, "message": message}}
    )


async def _handle_session(ws, model, config: SimConfig) -> None:
    session = Session(model, config)
    play_task = None

    async def play_loop():
        try:
            while session.playing:
                session.step_once()
                await ws.send(json.dumps(session.frame_message()))
                await asyncio.sleep(0.01)  # yield to inbound messages
        except SessionError as exc:
            session.playing = False
            await ws.send(_error(None, exc.code, str(exc)))
        except websockets.ConnectionClosed:
            session.playing = False

    try:
        async for raw in ws:
            try:
                msg = json.loads(raw)
            except (json.JSONDecodeError, UnicodeDecodeError) as exc:
                await ws.send(_error(None, "bad_json", str(exc)))
                continue
            if not isinstance(msg, dict) or "type" not in msg:
                await ws.send(_error(None, "bad_request", "message needs a type"))
                continue
            msg_id = msg.get("id")
            mtype = msg["type"]
            try:
                reply = _dispatch(session, mtype, msg)
                if mtype == "play" and session.playing and (
                    play_task is None or play_task.done()
                ):
                    play_task = asyncio.ensure_future(play_loop())
                if mtype == "pause" and play_task is not None:
                    await asyncio.wait_for(play_task, timeout=10)
                    play_task = None
                reply["id"] = msg_id
                await ws.send(json.dumps(reply))
            except SessionError as exc:
                await ws.send(_error(msg_id, exc.code, str(exc)))
            except (KeyError, TypeError, ValueError) as exc:
                await ws.send(_error(msg_id, "bad_request", str(exc)))
            except websockets.ConnectionClosed:
                raise
            except Exception as exc:  # the session must outlive any handler
                code = "internal" if isinstance(exc, NkfError) else "internal_error"
                await ws.send(_error(msg_id, code, str(exc)))
    finally:
        session.playing = False
        if play_task is not None:
            play_task.cancel()


def _dispatch(session: Session, mtype: str, msg: dict) -> dict:
    if mtype == "hello":
        session.binary_grid = bool(msg.get("binary_grid", False))
        return {
            "type": "hello_ok",
            "v": PROTOCOL_VERSION,
            "b": session.model.n_basis,
            "dim": session.model.dim,
        }
    if mtype == "set_domain":
        session.scene.domain = DomainSpec.from_json(msg["domain"])
        refit = session.after_edit()
        return {"type": "set_domain_ok", "refit": refit}
    if mtype == "add_curve":
        curve = GuideCurve.from_json(msg)
        cid = session.next_curve_id
        session.next_curve_id += 1
        session.curves[cid] = curve
        session.after_edit()
        return {"type": "add_curve_ok", "curve_id": cid}
    if mtype == "update_curve":
        cid = int(msg["curve_id"])
        if cid not in session.curves:
            raise SessionError("bad_request", f"unknown curve {cid}")
        old = session.curves[cid]
        session.curves[cid] = GuideCurve(
            points=np.asarray(msg.get("points", old.points), dtype=np.float64),
            closed=bool(msg.get("closed", old.closed)),
            speed=float(msg.get("speed", old.speed)),
        )
        session.after_edit()
        return {"type": "update_curve_ok"}
    if mtype == "remove_curve":
        cid = int(msg["curve_id"])
        if session.curves.pop(cid, None) is None:
            raise SessionError("bad_request", f"unknown curve {cid}")
        session.after_edit()
        return {"type": "remove_curve_ok"}
    if mtype == "fit":
        alpha, residual = session.refit()
        return {
            "type": "fit_ok",
            "alpha": [float(a) for a in alpha],
            "residual": residual,
        }
    if mtype == "step":
        n = int(msg.get("n", 1))
        if n < 1:
            raise SessionError("bad_request", "n must be positive")
        for _ in range(n):
            session.step_once()
        return {
            "type": "step_ok",
            "t": session.state.time,
            "alpha": [float(a) for a in session.alpha],
        }
    if mtype == "play":
        session.require_state()
        if "dt" in msg:
            dt = float(msg["dt"])
            if dt <= 0:
                raise SessionError("bad_request", "dt must be positive")
            session.dt = dt
        if "nx" in msg:
            session.grid_res = int(msg["nx"])
        session.playing = True
        return {"type": "play_ok", "dt": session.dt}
    if mtype == "pause":
        session.playing = False
        return {"type": "pause_ok", "t": session.state.time if session.state else 0.0}
    if mtype == "get_field":
        state = session.require_state()
        nx = int(msg.get("nx", session.grid_res))
        ny = int(msg.get("ny", nx))
        v = sim.field_grid(session.provider(state.domain), state, nx, ny)
        return {
            "type": "get_field_ok",
            "t": state.time,
            "grid": {
                "nx": nx,
                "ny": ny,
                "u": [float(x) for x in v[:, :, 0].ravel()],
                "v": [float(x) for x in v[:, :, 1].ravel()],
            },
        }
    if mtype == "get_particles":
        state = session.require_state()
        return {
            "type": "get_particles_ok",
            "particles": [[float(x) for x in p] for p in state.particles],
        }
    if mtype == "set_keyframes":
        frames = [
            (float(k["t"]), DomainSpec.from_json(k["domain"]))
            for k in msg["keyframes"]
        ]
        if [t for t, _ in frames] != sorted(t for t, _ in frames):
            raise SessionError("bad_request", "keyframes must be time-sorted")
        session.keyframes = frames or None
        return {"type": "set_keyframes_ok"}
    if mtype == "reset":
        session.alpha = None
        session.state = None
        session.playing = False
        session.refit_pending = False
        return {"type": "reset_ok"}
    raise SessionError("unknown_type", f"unknown message type {mtype!r}")


def serve_forever(
    model_path,
    host: str = "127.0.0.1",
    port: int = 8765,
    precision: str = "f32",
    n_projection_points: int = 2048,
    n_particles: int = 256,
) -> int:
    dtype = np.float64 if precision == "f64" else np.float32
    model = load_checkpoint(model_path, dtype=dtype)
    config = SimConfig(
        n_projection_points=n_projection_points, n_particles=n_particles
    )

    async def main():
        async def handler(ws):
            await _handle_session(ws, model, config)

        async with websockets.serve(handler, host, port):
            print(f"listening on ws://{host}:{port}", flush=True)
            await asyncio.Future()

    try:
        asyncio.run(main())
    except KeyboardInterrupt:
        pass
    return 0
