// Client-side constraint rasterizer.
//
// Mirrors the gateway's sampling rule exactly: geometry coordinates live in
// the unit square (x east, y north), a pixel is set when its cell center is
// inside the geometry (lines: center-to-segment distance <= widthPx / 2,
// inclusive; polygons: even-odd rule). Preview masks therefore match the
// server's rasterization of the same strokes pixel for pixel.

import { CHANNELS, Stroke } from "./types.js";

export function rasterizeStrokes(strokes: Stroke[], size: number): Uint8Array[] {
  const masks = CHANNELS.map(() => new Uint8Array(size * size));
  for (const stroke of strokes) {
    const channelIndex = CHANNELS.indexOf(stroke.channel);
    if (channelIndex < 0) continue;
    const mask = masks[channelIndex];
    if (stroke.kind === "line") {
      rasterizeLine(stroke, size, mask);
    } else {
      rasterizePolygon(stroke, size, mask);
    }
  }
  return masks;
}

function toPixel(p: { x: number; y: number }, size: number): [number, number] {
  // column, row; row 0 is north
  return [p.x * size, (1 - p.y) * size];
}

function rasterizeLine(stroke: Stroke, size: number, mask: Uint8Array): void {
  if (stroke.coords.length < 2 || stroke.widthPx <= 0) return;
  const half = stroke.widthPx / 2;
  const pts = stroke.coords.map((p) => toPixel(p, size));
  for (let s = 0; s + 1 < pts.length; s++) {
    const [ax, ay] = pts[s];
    const [bx, by] = pts[s + 1];
    const dx = bx - ax;
    const dy = by - ay;
    const denom = dx * dx + dy * dy;
    const lo = [Math.min(ax, bx) - half, Math.min(ay, by) - half];
    const hi = [Math.max(ax, bx) + half, Math.max(ay, by) + half];
    const r0 = Math.max(0, Math.floor(lo[1] - 0.5));
    const r1 = Math.min(size - 1, Math.ceil(hi[1]));
    const c0 = Math.max(0, Math.floor(lo[0] - 0.5));
    const c1 = Math.min(size - 1, Math.ceil(hi[0]));
    for (let r = r0; r <= r1; r++) {
      for (let c = c0; c <= c1; c++) {
        const px = c + 0.5;
        const py = r + 0.5;
        let t = denom === 0 ? 0 : ((px - ax) * dx + (py - ay) * dy) / denom;
        t = Math.max(0, Math.min(1, t));
        const qx = ax + t * dx;
        const qy = ay + t * dy;
        const dist = Math.hypot(px - qx, py - qy);
        if (dist <= half) mask[r * size + c] = 1;
      }
    }
  }
}

function rasterizePolygon(stroke: Stroke, size: number, mask: Uint8Array): void {
  if (stroke.coords.length < 3) return;
  const poly = stroke.coords.map((p) => toPixel(p, size));
  const n = poly.length;
  for (let r = 0; r < size; r++) {
    const py = r + 0.5;
    for (let c = 0; c < size; c++) {
      const px = c + 0.5;
      let inside = false;
      for (let i = 0; i < n; i++) {
        const [x1, y1] = poly[i];
        const [x2, y2] = poly[(i + 1) % n];
        if (y1 > py !== y2 > py) {
          const xcross = x1 + ((py - y1) * (x2 - x1)) / (y2 - y1);
          if (px < xcross) inside = !inside;
        }
      }
      if (inside) mask[r * size + c] = 1;
    }
  }
}

/** Merge per-channel masks into one preview grid: 0 empty, 1 + channel index. */
export function mergedPreview(masks: Uint8Array[], size: number): Uint8Array {
  const out = new Uint8Array(size * size);
  masks.forEach((mask, ch) => {
    for (let i = 0; i < mask.length; i++) {
      if (mask[i]) out[i] = ch + 1;
    }
  });
  return out;
}
