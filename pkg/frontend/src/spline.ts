/**
 * Centripetal Catmull-Rom evaluation for stroke previews. The service owns
 * the authoritative curve sampling; this only renders what the user drew.
 */

export type Pt = [number, number];

function dist(a: Pt, b: Pt): number {
  return Math.hypot(a[0] - b[0], a[1] - b[1]);
}

function lerp(a: Pt, b: Pt, t: number): Pt {
  return [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
}

/** One Catmull-Rom segment between p1 and p2 with centripetal knots. */
function segment(p0: Pt, p1: Pt, p2: Pt, p3: Pt, samples: number): Pt[] {
  const t0 = 0;
  const t1 = t0 + Math.sqrt(dist(p0, p1));
  const t2 = t1 + Math.sqrt(dist(p1, p2));
  const t3 = t2 + Math.sqrt(dist(p2, p3));
  const out: Pt[] = [];
  for (let i = 0; i < samples; i++) {
    const t = t1 + ((t2 - t1) * i) / samples;
    const a1 = lerp(p0, p1, t1 === t0 ? 0 : (t - t0) / (t1 - t0));
    const a2 = lerp(p1, p2, t2 === t1 ? 0 : (t - t1) / (t2 - t1));
    const a3 = lerp(p2, p3, t3 === t2 ? 0 : (t - t2) / (t3 - t2));
    const b1 = lerp(a1, a2, t2 === t0 ? 0 : (t - t0) / (t2 - t0));
    const b2 = lerp(a2, a3, t3 === t1 ? 0 : (t - t1) / (t3 - t1));
    out.push(lerp(b1, b2, t2 === t1 ? 0 : (t - t1) / (t2 - t1)));
  }
  return out;
}

/** Polyline through the control points, ~`perSegment` samples per span. */
export function splinePolyline(
  points: Pt[],
  closed: boolean,
  perSegment = 12,
): Pt[] {
  if (points.length < 2) return points.slice();
  const n = points.length;
  const at = (i: number): Pt => {
    if (closed) return points[((i % n) + n) % n]!;
    return points[Math.min(Math.max(i, 0), n - 1)]!;
  };
  const out: Pt[] = [];
  const spans = closed ? n : n - 1;
  for (let i = 0; i < spans; i++) {
    out.push(...segment(at(i - 1), at(i), at(i + 1), at(i + 2), perSegment));
  }
  out.push(closed ? at(0) : at(n - 1));
  return out;
}
