import asyncio
import json

import numpy as np
import pytest
import websockets

from nkf import mlp, service
from nkf.geometry import DomainSpec
from nkf.sim import SimConfig


@pytest.fixture(scope="module")
def model():
    return mlp.init_kaiming(2, 4, 3, n_layers=2, width=16, rng_seed=0,
                            dtype=np.float64)


def run_session(model, scenario):
    """Serve on an ephemeral port and drive it with the scenario coroutine."""

    async def main():
        config = SimConfig(n_projection_points=64, n_particles=16, grid_res=8)

        async def handler(ws):
            await service._handle_session(ws, model, config)

        async with websockets.serve(handler, "127.0.0.1", 0) as server:
            port = server.sockets[0].getsockname()[1]
            async with websockets.connect(f"ws://127.0.0.1:{port}") as ws:
                return await scenario(ws)

    return asyncio.run(main())


async def rpc(ws, msg, expect=None):
    await ws.send(json.dumps(msg))
    while True:
        reply = json.loads(await ws.recv())
        if reply.get("type") == "frame":
            continue  # streamed frames interleave with replies
        if expect is not None:
            assert reply["type"] == expect, reply
        return reply


def domain_json(seed=0, m=3):
    rng = np.random.default_rng(seed)
    spec = DomainSpec(
        dim=2, centers=rng.uniform(0.35, 0.6, (m, 2)), radii=rng.uniform(0.04, 0.07, m)
    )
    return spec.to_json()


def circle_points(r=0.2, n=10):
    t = np.arange(n) / n * 2 * np.pi
    return np.stack([0.5 + r * np.cos(t), 0.5 + r * np.sin(t)], axis=1).tolist()


def test_hello_handshake(model):
    async def scenario(ws):
        reply = await rpc(ws, {"type": "hello", "id": 1, "v": 1}, "hello_ok")
        assert reply["id"] == 1
        assert reply["b"] == 4 and reply["dim"] == 2 and reply["v"] == 1

    run_session(model, scenario)


def test_add_curve_fit_step_flow(model):
    async def scenario(ws):
        await rpc(ws, {"type": "hello", "id": 0}, "hello_ok")
        await rpc(ws, {"type": "set_domain", "id": 1, "domain": domain_json()},
                  "set_domain_ok")
        reply = await rpc(
            ws, {"type": "add_curve", "id": 2, "points": circle_points(),
                 "closed": True}, "add_curve_ok",
        )
        cid = reply["curve_id"]
        fit = await rpc(ws, {"type": "fit", "id": 3}, "fit_ok")
        assert len(fit["alpha"]) == 4
        assert fit["residual"] >= 0
        step = await rpc(ws, {"type": "step", "id": 4, "n": 3}, "step_ok")
        assert step["t"] == pytest.approx(3 * 0.005)
        await rpc(ws, {"type": "remove_curve", "id": 5, "curve_id": cid},
                  "remove_curve_ok")

    run_session(model, scenario)


def test_step_without_fit_is_error(model):
    async def scenario(ws):
        reply = await rpc(ws, {"type": "step", "id": 9})
        assert reply["type"] == "error"
        assert reply["error"]["code"] == "no_coefficients"
        assert "no coefficients" in reply["error"]["message"]
        assert reply["id"] == 9

    run_session(model, scenario)


def test_unknown_type_keeps_session_alive(model):
    async def scenario(ws):
        reply = await rpc(ws, {"type": "warp_drive", "id": 1})
        assert reply["type"] == "error" and reply["error"]["code"] == "unknown_type"
        reply = await rpc(ws, {"type": "hello", "id": 2}, "hello_ok")
        assert reply["id"] == 2

    run_session(model, scenario)


def test_malformed_json_replies_error(model):
    async def scenario(ws):
        await ws.send("{not json")
        reply = json.loads(await ws.recv())
        assert reply["type"] == "error" and reply["error"]["code"] == "bad_json"
        await rpc(ws, {"type": "hello", "id": 1}, "hello_ok")

    run_session(model, scenario)


def test_play_streams_monotonic_frames(model):
    async def scenario(ws):
        await rpc(ws, {"type": "hello", "id": 0}, "hello_ok")
        await rpc(ws, {"type": "set_domain", "id": 1, "domain": domain_json()},
                  "set_domain_ok")
        await rpc(ws, {"type": "add_curve", "id": 2, "points": circle_points(),
                       "closed": True}, "add_curve_ok")
        await rpc(ws, {"type": "fit", "id": 3}, "fit_ok")
        await rpc(ws, {"type": "play", "id": 4, "dt": 0.004, "nx": 8}, "play_ok")
        frames = []
        while len(frames) < 5:
            msg = json.loads(await ws.recv())
            if msg["type"] == "frame":
                frames.append(msg)
        reply = await rpc(ws, {"type": "pause", "id": 5}, "pause_ok")
        times = [f["t"] for f in frames]
        assert times == sorted(times) and len(set(times)) == len(times)
        seqs = [f["seq"] for f in frames]
        assert seqs == sorted(seqs)
        assert frames[0]["grid"]["nx"] == 8
        assert len(frames[0]["particles"]) == 16

    run_session(model, scenario)


def test_edit_while_paused_refits(model):
    async def scenario(ws):
        await rpc(ws, {"type": "set_domain", "id": 1, "domain": domain_json()},
                  "set_domain_ok")
        await rpc(ws, {"type": "add_curve", "id": 2, "points": circle_points(),
                       "closed": True}, "add_curve_ok")
        fit1 = await rpc(ws, {"type": "fit", "id": 3}, "fit_ok")
        reply = await rpc(
            ws, {"type": "set_domain", "id": 4, "domain": domain_json(seed=5)},
            "set_domain_ok",
        )
        assert reply["refit"] is True
        field = await rpc(ws, {"type": "get_field", "id": 5, "nx": 4}, "get_field_ok")
        assert len(field["grid"]["u"]) == 16

    run_session(model, scenario)


def test_reset_clears_coefficients(model):
    async def scenario(ws):
        await rpc(ws, {"type": "add_curve", "id": 1, "points": circle_points(),
                       "closed": True}, "add_curve_ok")
        await rpc(ws, {"type": "fit", "id": 2}, "fit_ok")
        await rpc(ws, {"type": "reset", "id": 3}, "reset_ok")
        reply = await rpc(ws, {"type": "step", "id": 4})
        assert reply["error"]["code"] == "no_coefficients"

    run_session(model, scenario)


def test_set_keyframes_and_binary_grid(model):
    async def scenario(ws):
        await rpc(ws, {"type": "hello", "id": 0, "binary_grid": True}, "hello_ok")
        kf = [
            {"t": 0.0, "domain": domain_json(seed=1)},
            {"t": 1.0, "domain": domain_json(seed=1)},
        ]
        await rpc(ws, {"type": "set_keyframes", "id": 1, "keyframes": kf},
                  "set_keyframes_ok")
        await rpc(ws, {"type": "add_curve", "id": 2, "points": circle_points(),
                       "closed": True}, "add_curve_ok")
        await rpc(ws, {"type": "fit", "id": 3}, "fit_ok")
        await rpc(ws, {"type": "play", "id": 4}, "play_ok")
        msg = json.loads(await ws.recv())
        while msg["type"] != "frame":
            msg = json.loads(await ws.recv())
        assert msg["grid"]["encoding"] == "b64f32"
        assert isinstance(msg["grid"]["u"], str)
        import base64

        u = np.frombuffer(base64.b64decode(msg["grid"]["u"]), dtype=np.float32)
        assert u.size == msg["grid"]["nx"] * msg["grid"]["ny"]
        await rpc(ws, {"type": "pause", "id": 5}, "pause_ok")

    run_session(model, scenario)


def test_get_particles(model):
    async def scenario(ws):
        await rpc(ws, {"type": "add_curve", "id": 1, "points": circle_points(),
                       "closed": True}, "add_curve_ok")
        await rpc(ws, {"type": "fit", "id": 2}, "fit_ok")
        reply = await rpc(ws, {"type": "get_particles", "id": 3}, "get_particles_ok")
        assert len(reply["particles"]) == 16

    run_session(model, scenario)
