// Canvas rendering: class grids and constraint previews to ImageData.
// All layers render at identical pixel registration, so overlay toggling
// never shifts geometry.

import { CHANNELS, CHANNEL_COLORS, ENERGY_COLORS, HEIGHT_COLORS } from "./types.js";

export type Rgba = Uint8ClampedArray<ArrayBuffer>;

function hexToRgb(hex: string): [number, number, number] {
  const v = parseInt(hex.slice(1), 16);
  return [(v >> 16) & 255, (v >> 8) & 255, v & 255];
}

export function classGridToRgba(grid: Float32Array, size: number, palette: string[]): Rgba {
  const colors = palette.map(hexToRgb);
  const out = new Uint8ClampedArray(new ArrayBuffer(size * size * 4));
  for (let i = 0; i < size * size; i++) {
    const cls = Math.min(colors.length - 1, Math.max(0, Math.round(grid[i])));
    const [r, g, b] = colors[cls];
    out[i * 4] = r;
    out[i * 4 + 1] = g;
    out[i * 4 + 2] = b;
    out[i * 4 + 3] = 255;
  }
  return out;
}

export function heightGridToRgba(grid: Float32Array, size: number): Rgba {
  return classGridToRgba(grid, size, HEIGHT_COLORS);
}

export function energyGridToRgba(grid: Float32Array, size: number): Rgba {
  return classGridToRgba(grid, size, ENERGY_COLORS);
}

/** Constraint preview: 0 transparent, 1..3 the channel colors. */
export function previewToRgba(preview: Uint8Array, size: number): Rgba {
  const palette = CHANNELS.map((ch) => hexToRgb(CHANNEL_COLORS[ch]));
  const out = new Uint8ClampedArray(new ArrayBuffer(size * size * 4));
  for (let i = 0; i < size * size; i++) {
    if (preview[i] === 0) continue;
    const [r, g, b] = palette[preview[i] - 1];
    out[i * 4] = r;
    out[i * 4 + 1] = g;
    out[i * 4 + 2] = b;
    out[i * 4 + 3] = 255;
  }
  return out;
}

export function drawRgba(canvas: HTMLCanvasElement, rgba: Rgba, size: number): void {
  canvas.width = size;
  canvas.height = size;
  const ctx = canvas.getContext("2d");
  if (!ctx) throw new Error("2d context unavailable");
  ctx.putImageData(new ImageData(rgba, size, size), 0, 0);
}

export async function drawPng(canvas: HTMLCanvasElement, png: Uint8Array, size: number): Promise<void> {
  const bitmap = await createImageBitmap(new Blob([png as BlobPart], { type: "image/png" }));
  canvas.width = size;
  canvas.height = size;
  const ctx = canvas.getContext("2d");
  if (!ctx) throw new Error("2d context unavailable");
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(bitmap, 0, 0, size, size);
}
