import assert from "node:assert/strict";
import { test } from "node:test";

import { FrameMessage } from "../src/protocol.js";
import { ServiceError, Session, SocketLike } from "../src/session.js";

class FakeSocket implements SocketLike {
  sent: string[] = [];
  readyState = 1;
  private listeners = new Map<string, ((ev: never) => void)[]>();

  send(data: string): void {
    this.sent.push(data);
  }

  close(): void {
    this.emit("close", undefined as never);
  }

  addEventListener(type: string, fn: (ev: never) => void): void {
    const fns = this.listeners.get(type) ?? [];
    fns.push(fn);
    this.listeners.set(type, fns);
  }

  emit(type: string, ev: unknown): void {
    for (const fn of this.listeners.get(type) ?? []) fn(ev as never);
  }

  reply(obj: unknown): void {
    this.emit("message", { data: JSON.stringify(obj) });
  }
}

test("request/reply ids correlate one to one", async () => {
  const socket = new FakeSocket();
  const session = new Session(socket);
  const p1 = session.request({ type: "hello", v: 1 });
  const p2 = session.request({ type: "fit" });
  const sent = socket.sent.map((s) => JSON.parse(s) as { id: number });
  assert.deepEqual(sent.map((m) => m.id), [1, 2]);
  socket.reply({ type: "fit_ok", id: 2, alpha: [] });
  socket.reply({ type: "hello_ok", id: 1, b: 10, dim: 2 });
  const [r1, r2] = await Promise.all([p1, p2]);
  assert.equal(r1.type, "hello_ok");
  assert.equal(r2.type, "fit_ok");
});

test("error envelopes reject the matching request", async () => {
  const socket = new FakeSocket();
  const session = new Session(socket);
  const p = session.request({ type: "step", n: 1 });
  socket.reply({
    type: "error",
    id: 1,
    error: { code: "no_coefficients", message: "fit first" },
  });
  await assert.rejects(p, (err: ServiceError) => err.code === "no_coefficients");
});

test("frames route to the frame handler, not to requests", async () => {
  const socket = new FakeSocket();
  const session = new Session(socket);
  const frames: FrameMessage[] = [];
  session.onFrame = (f) => frames.push(f);
  const p = session.request({ type: "pause" });
  socket.reply({ type: "frame", seq: 1, t: 0.01, alpha: [], grid: { nx: 0, ny: 0, u: [], v: [] }, particles: [] });
  socket.reply({ type: "pause_ok", id: 1 });
  await p;
  assert.equal(frames.length, 1);
});

test("invalid outgoing messages never reach the wire", () => {
  const socket = new FakeSocket();
  const session = new Session(socket);
  assert.throws(() => session.request({ type: "step", n: 0 }));
  assert.equal(socket.sent.length, 0);
});

test("offline edits queue and flush on reconnect", async () => {
  const socket = new FakeSocket();
  socket.readyState = 0; // connecting
  const session = new Session(socket);
  const p = session.request({ type: "fit" });
  assert.equal(socket.sent.length, 0);
  assert.ok(session.offline);
  socket.readyState = 1;
  socket.emit("open", undefined);
  assert.equal(socket.sent.length, 1);
  socket.reply({ type: "fit_ok", id: 1 });
  await p;
});
