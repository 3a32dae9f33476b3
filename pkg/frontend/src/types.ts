// Shared studio types and display constants.

export type Channel = "water" | "railway" | "major_road";
export const CHANNELS: Channel[] = ["water", "railway", "major_road"];

export interface Point {
  x: number; // unit square, east
  y: number; // unit square, north
}

export interface Stroke {
  channel: Channel;
  kind: "line" | "polygon";
  coords: Point[];
  widthPx: number;
}

export interface Density {
  bcr: number; // percent, <= 100
  bvd: number;
  rd: number;
}

export interface Scenario {
  strokes: Stroke[];
  density: Density;
  city: string;
  seed: number;
}

export interface ResultLayers {
  image: Uint8Array; // PNG bytes
  heightClasses: Float32Array;
  energyClasses: Float32Array;
  size: number;
}

export interface HistoryEntry {
  scenario: Scenario; // deep snapshot of what was submitted
  jobId: string;
  layers: ResultLayers;
}

// Fixed display colormaps, one entry per class id. Background is class 0.
export const ENERGY_COLORS = ["#202020", "#2a76c6", "#f2b134", "#d64045"];
export const ENERGY_LEGEND = ["background", "low", "medium", "high"];
export const HEIGHT_COLORS = ["#202020", "#bcd2a0", "#7fb069", "#4a7856", "#24432e"];
export const HEIGHT_LEGEND = ["background", "low-rise", "mid-rise", "high-rise", "tall"];

export const CHANNEL_COLORS: Record<Channel, string> = {
  water: "#2a76c6",
  railway: "#8c5a3c",
  major_road: "#404044",
};
