import assert from "node:assert/strict";
import { test } from "node:test";

import { CanvasScene } from "../src/scene.js";
import { SceneJson } from "../src/protocol.js";

function sampleScene(): CanvasScene {
  const scene = new CanvasScene();
  scene.domain.circles = [
    { c: [0.4, 0.5], r: 0.05 },
    { c: [0.6, 0.5], r: 0.07 },
  ];
  scene.addCurve(
    [
      [0.3, 0.3],
      [0.7, 0.3],
      [0.7, 0.7],
    ],
    true,
    1.5,
  );
  return scene;
}

test("scene serialization is a parse/serialize fixpoint", () => {
  const scene = sampleScene();
  const once = scene.serialize();
  const twice = CanvasScene.deserialize(once).serialize();
  assert.equal(once, twice);
});

test("scene matches the service schema shape", () => {
  const data = JSON.parse(sampleScene().serialize()) as SceneJson;
  assert.equal(data.domain.dim, 2);
  assert.ok(Array.isArray(data.domain.circles));
  assert.equal(typeof data.domain.circles[0]!.r, "number");
  assert.equal(data.curves.length, 1);
  assert.equal(data.curves[0]!.closed, true);
  assert.equal(data.curves[0]!.speed, 1.5);
  assert.equal(data.samples_per_curve, 64);
});

test("undo restores the previous scene", () => {
  const scene = sampleScene();
  const before = scene.serialize();
  scene.snapshot();
  scene.addCurve(
    [
      [0.1, 0.1],
      [0.2, 0.2],
    ],
    false,
  );
  assert.notEqual(scene.serialize(), before);
  assert.ok(scene.undo());
  assert.equal(scene.serialize(), before);
  assert.ok(scene.redo());
  assert.equal(scene.curves.length, 2);
});

test("undo on an empty stack reports false", () => {
  const scene = new CanvasScene();
  assert.equal(scene.undo(), false);
});

test("circle moves update the domain", () => {
  const scene = sampleScene();
  scene.moveCircle(0, [0.45, 0.55]);
  assert.deepEqual(scene.domain.circles[0]!.c, [0.45, 0.55]);
  scene.moveCircle(99, [0, 0]); // out of range: ignored
});
