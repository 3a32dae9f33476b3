// Scenario state: stroke editing with undo/redo and the append-only run
// history. The studio never computes model outputs itself; history entries
// hold exactly what the gateway returned for the submitted snapshot.

import { Density, HistoryEntry, ResultLayers, Scenario, Stroke } from "./types.js";

export function emptyScenario(city = "oracleville", seed = 0): Scenario {
  return {
    strokes: [],
    density: { bcr: 20, bvd: 3, rd: 1 },
    city,
    seed,
  };
}

export function cloneScenario(s: Scenario): Scenario {
  return {
    strokes: s.strokes.map((st) => ({ ...st, coords: st.coords.map((p) => ({ ...p })) })),
    density: { ...s.density },
    city: s.city,
    seed: s.seed,
  };
}

export function validateDensity(d: Density): string[] {
  const problems: string[] = [];
  if (!Number.isFinite(d.bcr) || d.bcr < 0 || d.bcr > 100) {
    problems.push("bcr must lie in [0, 100]");
  }
  if (!Number.isFinite(d.bvd) || d.bvd < 0) problems.push("bvd must be >= 0");
  if (!Number.isFinite(d.rd) || d.rd < 0) problems.push("rd must be >= 0");
  return problems;
}

export class ScenarioEditor {
  private undoStack: Scenario[] = [];
  private redoStack: Scenario[] = [];
  current: Scenario;

  constructor(initial?: Scenario) {
    this.current = initial ?? emptyScenario();
  }

  private commit(next: Scenario): void {
    this.undoStack.push(cloneScenario(this.current));
    this.redoStack = [];
    this.current = next;
  }

  addStroke(stroke: Stroke): void {
    const next = cloneScenario(this.current);
    next.strokes.push({ ...stroke, coords: stroke.coords.map((p) => ({ ...p })) });
    this.commit(next);
  }

  clearAll(): void {
    const next = cloneScenario(this.current);
    next.strokes = [];
    this.commit(next);
  }

  setDensity(density: Density): void {
    const next = cloneScenario(this.current);
    next.density = { ...density };
    this.commit(next);
  }

  setSeed(seed: number): void {
    const next = cloneScenario(this.current);
    next.seed = seed;
    this.commit(next);
  }

  undo(): boolean {
    const prev = this.undoStack.pop();
    if (prev === undefined) return false;
    this.redoStack.push(this.current);
    this.current = prev;
    return true;
  }

  redo(): boolean {
    const next = this.redoStack.pop();
    if (next === undefined) return false;
    this.undoStack.push(this.current);
    this.current = next;
    return true;
  }
}

export class RunHistory {
  private entries: HistoryEntry[] = [];

  /** Append-only: every result is linked to the exact submitted snapshot. */
  record(scenario: Scenario, jobId: string, layers: ResultLayers): HistoryEntry {
    const entry: HistoryEntry = { scenario: cloneScenario(scenario), jobId, layers };
    this.entries.push(entry);
    return entry;
  }

  list(): readonly HistoryEntry[] {
    return this.entries;
  }

  get(index: number): HistoryEntry {
    const e = this.entries[index];
    if (!e) throw new Error(`no history entry ${index}`);
    return e;
  }
}

export interface ClassDelta {
  classId: number;
  a: number;
  b: number;
  delta: number;
}

/** Per-class pixel-count deltas between two class grids of equal size. */
export function classDeltas(a: Float32Array, b: Float32Array, nClasses: number): ClassDelta[] {
  if (a.length !== b.length) throw new Error("grid size mismatch");
  const countA = new Array(nClasses).fill(0);
  const countB = new Array(nClasses).fill(0);
  for (let i = 0; i < a.length; i++) countA[a[i]]++;
  for (let i = 0; i < b.length; i++) countB[b[i]]++;
  return countA.map((va, classId) => ({
    classId,
    a: va,
    b: countB[classId],
    delta: countB[classId] - va,
  }));
}

export function layersIdentical(a: ResultLayers, b: ResultLayers): boolean {
  if (a.image.length !== b.image.length) return false;
  for (let i = 0; i < a.image.length; i++) if (a.image[i] !== b.image[i]) return false;
  const grids: [Float32Array, Float32Array][] = [
    [a.heightClasses, b.heightClasses],
    [a.energyClasses, b.energyClasses],
  ];
  for (const [ga, gb] of grids) {
    if (ga.length !== gb.length) return false;
    for (let i = 0; i < ga.length; i++) if (ga[i] !== gb[i]) return false;
  }
  return true;
}
