/**
 * Canvas editor wiring: draw circles and guide curves, fit, steer playback
 * and render the live velocity field streamed by the service.
 */

import { FieldView, speedColor } from "./fieldview.js";
import { FrameMessage } from "./protocol.js";
import { CanvasScene } from "./scene.js";
import { Session } from "./session.js";
import { splinePolyline, Pt } from "./spline.js";
import { Transport } from "./transport.js";

const SNAP_RADIUS_PX = 8;

type Tool = "circle" | "curve" | "select";

interface Ui {
  canvas: HTMLCanvasElement;
  status: HTMLElement;
  toast: HTMLElement;
}

class App {
  scene = new CanvasScene();
  view = new FieldView();
  session!: Session;
  transport!: Transport;
  tool: Tool = "curve";
  pendingCurve: Pt[] = [];
  dragging: { index: number } | null = null;
  connected = false;

  constructor(private ui: Ui) {}

  async connect(url: string): Promise<void> {
    const socket = new WebSocket(url);
    this.session = new Session(socket as never);
    this.transport = new Transport(this.session);
    this.session.onFrame = (frame: FrameMessage) => this.view.ingest(frame);
    this.session.onServerError = (err) => this.showToast(`${err.code}: ${err.message}`);
    await new Promise<void>((resolve, reject) => {
      socket.addEventListener("open", () => resolve());
      socket.addEventListener("error", () => reject(new Error("connect failed")));
    });
    const hello = await this.session.request({ type: "hello", v: 1 });
    this.connected = true;
    this.ui.status.textContent = `connected (b=${hello.b}, dim=${hello.dim})`;
    await this.pushDomain();
  }

  showToast(text: string): void {
    this.ui.toast.textContent = text;
    this.ui.toast.classList.add("visible");
    setTimeout(() => this.ui.toast.classList.remove("visible"), 4000);
  }

  // -- coordinate mapping (unit square <-> canvas pixels) ------------------

  toUnit(ev: MouseEvent): Pt {
    const rect = this.ui.canvas.getBoundingClientRect();
    return [
      (ev.clientX - rect.left) / rect.width,
      1 - (ev.clientY - rect.top) / rect.height,
    ];
  }

  toPx(p: Pt): Pt {
    return [p[0] * this.ui.canvas.width, (1 - p[1]) * this.ui.canvas.height];
  }

  // -- edits ---------------------------------------------------------------

  async pushDomain(): Promise<void> {
    if (!this.connected) return;
    await this.session.request({ type: "set_domain", domain: this.scene.domain });
  }

  async commitCurve(closed: boolean): Promise<void> {
    if (this.pendingCurve.length < 2) {
      this.pendingCurve = [];
      return;
    }
    this.scene.snapshot();
    const curve = this.scene.addCurve(this.pendingCurve.slice(), closed);
    this.pendingCurve = [];
    if (this.connected) {
      const reply = await this.session.request({
        type: "add_curve",
        points: curve.points,
        closed: curve.closed,
        speed: curve.speed,
      });
      curve.serverId = reply.curve_id as number;
    }
  }

  async undo(): Promise<void> {
    if (!this.scene.undo()) return;
    // resend the whole scene: simplest way to converge after local undo
    await this.pushDomain();
    if (this.connected) {
      for (const c of this.scene.curves.filter((c) => c.serverId > 0)) {
        await this.session.request({ type: "remove_curve", curve_id: c.serverId });
        c.serverId = 0;
      }
      for (const c of this.scene.curves) {
        const reply = await this.session.request({
          type: "add_curve",
          points: c.points,
          closed: c.closed,
          speed: c.speed,
        });
        c.serverId = reply.curve_id as number;
      }
    }
  }

  handleClick(ev: MouseEvent): void {
    const p = this.toUnit(ev);
    if (this.tool === "curve") {
      const first = this.pendingCurve[0];
      if (first && this.pendingCurve.length >= 3) {
        const [fx, fy] = this.toPx(first);
        const [px, py] = this.toPx(p);
        if (Math.hypot(fx - px, fy - py) <= SNAP_RADIUS_PX) {
          void this.commitCurve(true); // closing gesture
          return;
        }
      }
      this.pendingCurve.push(p);
    } else if (this.tool === "circle") {
      const hit = this.hitCircle(p);
      if (hit >= 0) {
        this.scene.selection = { kind: "circle", index: hit };
      }
    }
  }

  hitCircle(p: Pt): number {
    return this.scene.domain.circles.findIndex(
      (c) => Math.hypot(c.c[0] - p[0], c.c[1] - p[1]) <= Math.max(c.r, 0.02),
    );
  }

  async dragCircle(index: number, to: Pt): Promise<void> {
    this.scene.moveCircle(index, to);
    await this.pushDomain(); // paused sessions re-fit automatically
  }

  // -- rendering -----------------------------------------------------------

  render(): void {
    const ctx = this.ui.canvas.getContext("2d");
    if (!ctx) return;
    const { width, height } = this.ui.canvas;
    ctx.clearRect(0, 0, width, height);

    // domain
    ctx.strokeStyle = "#888";
    ctx.strokeRect(0, 0, width, height);
    for (const c of this.scene.domain.circles) {
      const [cx, cy] = this.toPx(c.c);
      ctx.beginPath();
      ctx.arc(cx, cy, c.r * width, 0, Math.PI * 2);
      ctx.fillStyle = "rgba(120,120,120,0.5)";
      ctx.fill();
    }

    // velocity glyphs, decimated by the view
    const glyphs = this.view.glyphs();
    if (glyphs) {
      for (let i = 0; i < glyphs.xs.length; i++) {
        for (let j = 0; j < glyphs.ys.length; j++) {
          const k = i * glyphs.ny + j;
          const u = glyphs.u[k] ?? 0;
          const v = glyphs.v[k] ?? 0;
          const speed = Math.hypot(u, v);
          if (speed < 1e-6) continue;
          const [x0, y0] = this.toPx([glyphs.xs[i]!, glyphs.ys[j]!]);
          const scale = 18 / Math.max(glyphs.maxSpeed, 1e-6);
          ctx.strokeStyle = speedColor(speed, glyphs.maxSpeed);
          ctx.beginPath();
          ctx.moveTo(x0, y0);
          ctx.lineTo(x0 + u * scale, y0 - v * scale);
          ctx.stroke();
        }
      }
    }

    // particles
    ctx.fillStyle = "#063";
    for (const p of this.view.particles) {
      const [x, y] = this.toPx(p as Pt);
      ctx.fillRect(x - 1.5, y - 1.5, 3, 3);
    }

    // committed curves and the stroke in progress
    ctx.lineWidth = 2;
    for (const curve of this.scene.curves) {
      ctx.strokeStyle = "#06c";
      drawPolyline(ctx, splinePolyline(curve.points, curve.closed).map((p) => this.toPx(p)));
    }
    if (this.pendingCurve.length > 0) {
      ctx.strokeStyle = "#f80";
      drawPolyline(ctx, splinePolyline(this.pendingCurve, false).map((p) => this.toPx(p)));
    }
    ctx.lineWidth = 1;

    requestAnimationFrame(() => this.render());
  }
}

function drawPolyline(ctx: CanvasRenderingContext2D, pts: Pt[]): void {
  if (pts.length < 2) return;
  ctx.beginPath();
  ctx.moveTo(pts[0]![0], pts[0]![1]);
  for (const p of pts.slice(1)) ctx.lineTo(p[0], p[1]);
  ctx.stroke();
}

export function start(): void {
  const ui: Ui = {
    canvas: document.getElementById("canvas") as HTMLCanvasElement,
    status: document.getElementById("status")!,
    toast: document.getElementById("toast")!,
  };
  const app = new App(ui);

  ui.canvas.addEventListener("click", (ev) => app.handleClick(ev));
  ui.canvas.addEventListener("dblclick", () => void app.commitCurve(false));
  ui.canvas.addEventListener("mousedown", (ev) => {
    if (app.tool !== "circle") return;
    const hit = app.hitCircle(app.toUnit(ev));
    if (hit >= 0) {
      app.scene.snapshot();
      app.dragging = { index: hit };
    }
  });
  ui.canvas.addEventListener("mousemove", (ev) => {
    if (app.dragging) app.scene.moveCircle(app.dragging.index, app.toUnit(ev));
  });
  ui.canvas.addEventListener("mouseup", (ev) => {
    if (app.dragging) {
      void app.dragCircle(app.dragging.index, app.toUnit(ev));
      app.dragging = null;
    }
  });

  const bind = (id: string, fn: () => unknown) => {
    document.getElementById(id)?.addEventListener("click", () => void fn());
  };
  bind("tool-circle", () => (app.tool = "circle"));
  bind("tool-curve", () => (app.tool = "curve"));
  bind("fit", async () => {
    const reply = await app.session.request({ type: "fit" });
    app.showToast(`fit: residual ${(reply.residual as number).toFixed(4)}`);
  });
  bind("play", () => app.transport.play());
  bind("pause", () => app.transport.pause());
  bind("step", () => app.transport.step(1));
  bind("undo", () => app.undo());
  bind("reset", async () => {
    await app.session.request({ type: "reset" });
    app.view.reset();
  });
  bind("save", () => {
    const blob = new Blob([app.scene.serialize()], { type: "application/json" });
    const a = document.createElement("a");
    a.href = URL.createObjectURL(blob);
    a.download = "scene.json";
    a.click();
  });
  document.getElementById("load")?.addEventListener("change", async (ev) => {
    const input = ev.target as HTMLInputElement;
    const file = input.files?.[0];
    if (!file) return;
    app.scene.loadJson(JSON.parse(await file.text()));
    await app.pushDomain();
  });
  const dtSlider = document.getElementById("dt") as HTMLInputElement | null;
  dtSlider?.addEventListener("change", () =>
    void app.transport.setDt(Number(dtSlider.value)),
  );

  const url = new URLSearchParams(location.search).get("ws")
    ?? `ws://${location.hostname}:8765`;
  app.connect(url).catch((err) => app.showToast(String(err)));
  app.render();
}

if (typeof document !== "undefined") {
  window.addEventListener("load", start);
}
