/**
 * Wire types for the sketch session protocol (v1) and client-side
 * validation. The UI never sends a message that fails `validateOutgoing`.
 */

export const PROTOCOL_VERSION = 1;

export interface DomainCircle {
  c: [number, number];
  r: number;
}

export interface DomainSpecJson {
  dim: number;
  circles: DomainCircle[];
  corner_radius: number;
  blend_k: number;
  band_eps: number;
}

export interface CurveJson {
  points: [number, number][];
  closed: boolean;
  speed: number;
}

export interface SceneJson {
  domain: DomainSpecJson;
  curves: CurveJson[];
  samples_per_curve: number;
}

export interface GridJson {
  nx: number;
  ny: number;
  u: number[] | string;
  v: number[] | string;
  encoding?: string;
}

export interface FrameMessage {
  type: "frame";
  seq: number;
  t: number;
  alpha: number[];
  grid: GridJson;
  particles: [number, number][];
}

export interface ErrorEnvelope {
  type: "error";
  id: number | null;
  error: { code: string; message: string };
}

export type Reply = { type: string; id?: number | null } & Record<string, unknown>;

const OUTGOING_SCHEMAS: Record<string, (msg: Record<string, unknown>) => boolean> = {
  hello: (m) => m.v === PROTOCOL_VERSION,
  set_domain: (m) => isDomain(m.domain),
  add_curve: (m) => isPointList(m.points) && (m.points as unknown[]).length >= 2,
  update_curve: (m) =>
    typeof m.curve_id === "number" &&
    (m.points === undefined || isPointList(m.points)),
  remove_curve: (m) => typeof m.curve_id === "number",
  fit: () => true,
  step: (m) => m.n === undefined || (typeof m.n === "number" && m.n >= 1),
  play: (m) => m.dt === undefined || (typeof m.dt === "number" && m.dt > 0),
  pause: () => true,
  get_field: (m) => typeof m.nx === "number" && typeof m.ny === "number",
  get_particles: () => true,
  set_keyframes: (m) => Array.isArray(m.keyframes),
  reset: () => true,
};

export function isDomain(value: unknown): value is DomainSpecJson {
  if (typeof value !== "object" || value === null) return false;
  const d = value as Record<string, unknown>;
  return (
    typeof d.dim === "number" &&
    Array.isArray(d.circles) &&
    d.circles.every(
      (c: unknown) =>
        typeof c === "object" &&
        c !== null &&
        Array.isArray((c as DomainCircle).c) &&
        typeof (c as DomainCircle).r === "number" &&
        (c as DomainCircle).r > 0,
    )
  );
}

function isPointList(value: unknown): boolean {
  return (
    Array.isArray(value) &&
    value.every(
      (p) =>
        Array.isArray(p) &&
        p.length === 2 &&
        p.every((x) => typeof x === "number" && Number.isFinite(x)),
    )
  );
}

/** Throws when a message violates the v1 schema; returns it otherwise. */
export function validateOutgoing<T extends Record<string, unknown>>(msg: T): T {
  const type = msg.type;
  if (typeof type !== "string") throw new Error("message needs a type");
  const check = OUTGOING_SCHEMAS[type];
  if (!check) throw new Error(`unknown outgoing type ${type}`);
  if (!check(msg)) throw new Error(`schema violation in ${type} message`);
  return msg;
}

/** Decodes a grid that may arrive as plain arrays or base64 f32. */
export function decodeGrid(grid: GridJson): { u: Float32Array; v: Float32Array } {
  const decode = (field: number[] | string): Float32Array => {
    if (typeof field !== "string") return Float32Array.from(field);
    const raw = atob(field);
    const bytes = new Uint8Array(raw.length);
    for (let i = 0; i < raw.length; i++) bytes[i] = raw.charCodeAt(i);
    return new Float32Array(bytes.buffer);
  };
  return { u: decode(grid.u), v: decode(grid.v) };
}
