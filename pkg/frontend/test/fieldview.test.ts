import assert from "node:assert/strict";
import { test } from "node:test";

import { FieldView, MAX_GLYPHS_PER_AXIS } from "../src/fieldview.js";
import { FrameMessage } from "../src/protocol.js";

function frame(t: number, nx = 4): FrameMessage {
  const n = nx * nx;
  return {
    type: "frame",
    seq: Math.round(t * 1000),
    t,
    alpha: [0, 0],
    grid: {
      nx,
      ny: nx,
      u: Array.from({ length: n }, (_, i) => i),
      v: Array.from({ length: n }, () => 0),
    },
    particles: [[0.5, 0.5]],
  };
}

test("stale frames are dropped", () => {
  const view = new FieldView();
  assert.ok(view.ingest(frame(0.1)));
  assert.ok(view.ingest(frame(0.2)));
  assert.equal(view.ingest(frame(0.15)), false);
  assert.equal(view.ingest(frame(0.2)), false); // equal timestamp is stale too
  assert.equal(view.latest?.t, 0.2);
  assert.equal(view.dropped, 2);
});

test("glyphs decimate large grids to the cap", () => {
  const view = new FieldView();
  view.ingest(frame(0.1, 128));
  const glyphs = view.glyphs();
  assert.ok(glyphs);
  assert.ok(glyphs.nx <= MAX_GLYPHS_PER_AXIS);
  assert.ok(glyphs.ny <= MAX_GLYPHS_PER_AXIS);
  assert.equal(glyphs.u.length, glyphs.nx * glyphs.ny);
});

test("small grids keep every node", () => {
  const view = new FieldView();
  view.ingest(frame(0.1, 4));
  const glyphs = view.glyphs();
  assert.ok(glyphs);
  assert.equal(glyphs.nx, 4);
  assert.equal(glyphs.u[0], 0);
  // row-major with x slowest: the (1, 0) node holds value ny
  assert.equal(glyphs.u[1 * 4 + 0], 4);
});

test("reset clears frame state", () => {
  const view = new FieldView();
  view.ingest(frame(0.3));
  view.reset();
  assert.equal(view.latest, null);
  assert.equal(view.glyphs(), null);
});
