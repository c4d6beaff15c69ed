/**
 * The editable scene model: obstacle circles plus guide curves, with an
 * undo stack. Serialization matches the service's scene schema exactly, so
 * files round-trip between the UI and the command-line tools.
 */

import { CurveJson, DomainSpecJson, SceneJson } from "./protocol.js";

export interface EditorCurve extends CurveJson {
  /** id assigned by the service once committed; 0 means local-only */
  serverId: number;
}

export interface Selection {
  kind: "circle" | "curve" | "none";
  index: number;
}

const DEFAULT_DOMAIN = (): DomainSpecJson => ({
  dim: 2,
  circles: Array.from({ length: 10 }, (_, i) => ({
    c: [0.45 + 0.01 * i, 0.45] as [number, number],
    r: 0.04,
  })),
  corner_radius: 0.2,
  blend_k: 30,
  band_eps: 0.05,
});

export class CanvasScene {
  domain: DomainSpecJson = DEFAULT_DOMAIN();
  curves: EditorCurve[] = [];
  samplesPerCurve = 64;
  selection: Selection = { kind: "none", index: -1 };
  private undoStack: string[] = [];
  private redoStack: string[] = [];

  snapshot(): void {
    this.undoStack.push(JSON.stringify(this.toJson()));
    if (this.undoStack.length > 100) this.undoStack.shift();
    this.redoStack.length = 0;
  }

  undo(): boolean {
    const prev = this.undoStack.pop();
    if (prev === undefined) return false;
    this.redoStack.push(JSON.stringify(this.toJson()));
    this.loadJson(JSON.parse(prev) as SceneJson);
    return true;
  }

  redo(): boolean {
    const next = this.redoStack.pop();
    if (next === undefined) return false;
    this.undoStack.push(JSON.stringify(this.toJson()));
    this.loadJson(JSON.parse(next) as SceneJson);
    return true;
  }

  moveCircle(index: number, to: [number, number]): void {
    const circle = this.domain.circles[index];
    if (!circle) return;
    circle.c = [to[0], to[1]];
  }

  addCurve(points: [number, number][], closed: boolean, speed = 1.0): EditorCurve {
    const curve: EditorCurve = { points, closed, speed, serverId: 0 };
    this.curves.push(curve);
    return curve;
  }

  removeCurve(index: number): EditorCurve | undefined {
    return this.curves.splice(index, 1)[0];
  }

  toJson(): SceneJson {
    return {
      domain: {
        dim: this.domain.dim,
        circles: this.domain.circles.map((c) => ({ c: [c.c[0], c.c[1]], r: c.r })),
        corner_radius: this.domain.corner_radius,
        blend_k: this.domain.blend_k,
        band_eps: this.domain.band_eps,
      },
      curves: this.curves.map((c) => ({
        points: c.points.map((p) => [p[0], p[1]] as [number, number]),
        closed: c.closed,
        speed: c.speed,
      })),
      samples_per_curve: this.samplesPerCurve,
    };
  }

  loadJson(scene: SceneJson): void {
    this.domain = scene.domain;
    this.curves = scene.curves.map((c) => ({
      points: c.points,
      closed: c.closed ?? false,
      speed: c.speed ?? 1.0,
      serverId: 0,
    }));
    this.samplesPerCurve = scene.samples_per_curve ?? 64;
    this.selection = { kind: "none", index: -1 };
  }

  serialize(): string {
    return JSON.stringify(this.toJson());
  }

  static deserialize(text: string): CanvasScene {
    const scene = new CanvasScene();
    scene.loadJson(JSON.parse(text) as SceneJson);
    return scene;
  }
}
