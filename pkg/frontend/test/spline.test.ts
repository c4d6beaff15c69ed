import assert from "node:assert/strict";
import { test } from "node:test";

import { splinePolyline, Pt } from "../src/spline.js";

test("open spline passes through its endpoints", () => {
  const pts: Pt[] = [
    [0, 0],
    [0.5, 0.2],
    [1, 0],
  ];
  const poly = splinePolyline(pts, false, 8);
  assert.deepEqual(poly[0], [0, 0]);
  assert.deepEqual(poly[poly.length - 1], [1, 0]);
});

test("closed spline wraps around", () => {
  const pts: Pt[] = [
    [0, 0],
    [1, 0],
    [1, 1],
    [0, 1],
  ];
  const poly = splinePolyline(pts, true, 6);
  assert.deepEqual(poly[poly.length - 1], [0, 0]);
  assert.equal(poly.length, 4 * 6 + 1);
});

test("interpolates every control point", () => {
  const pts: Pt[] = [
    [0.1, 0.1],
    [0.4, 0.6],
    [0.8, 0.3],
    [0.9, 0.9],
  ];
  const poly = splinePolyline(pts, false, 10);
  for (const p of pts) {
    const hit = poly.some(
      (q) => Math.hypot(q[0] - p[0], q[1] - p[1]) < 1e-9,
    );
    assert.ok(hit, `control point ${p} missing from polyline`);
  }
});

test("degenerate inputs pass through", () => {
  assert.deepEqual(splinePolyline([[0.5, 0.5]], false), [[0.5, 0.5]]);
  assert.deepEqual(splinePolyline([], false), []);
});
