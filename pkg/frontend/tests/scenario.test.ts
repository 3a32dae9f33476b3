import { describe, expect, it } from "vitest";

import {
  RunHistory,
  ScenarioEditor,
  classDeltas,
  emptyScenario,
  layersIdentical,
  validateDensity,
} from "../src/scenario.js";
import { ResultLayers, Stroke } from "../src/types.js";

const stroke = (y: number): Stroke => ({
  channel: "major_road",
  kind: "line",
  coords: [{ x: 0, y }, { x: 1, y }],
  widthPx: 4,
});

function layers(seedByte: number): ResultLayers {
  return {
    image: Uint8Array.from([seedByte, 2, 3, 4]),
    heightClasses: Float32Array.from([0, 1, 2, seedByte % 5]),
    energyClasses: Float32Array.from([0, 1, seedByte % 4, 3]),
    size: 2,
  };
}

describe("scenario editing", () => {
  it("undo restores the previous snapshot exactly", () => {
    const editor = new ScenarioEditor();
    editor.addStroke(stroke(0.5));
    const before = JSON.stringify(editor.current);
    editor.addStroke(stroke(0.25));
    expect(editor.undo()).toBe(true);
    expect(JSON.stringify(editor.current)).toBe(before);
  });

  it("redo replays an undone edit; new edits clear the redo stack", () => {
    const editor = new ScenarioEditor();
    editor.addStroke(stroke(0.5));
    editor.undo();
    expect(editor.redo()).toBe(true);
    expect(editor.current.strokes).toHaveLength(1);
    editor.undo();
    editor.addStroke(stroke(0.75));
    expect(editor.redo()).toBe(false);
  });

  it("clear-all empties strokes but stays undoable", () => {
    const editor = new ScenarioEditor();
    editor.addStroke(stroke(0.5));
    editor.clearAll();
    expect(editor.current.strokes).toHaveLength(0);
    editor.undo();
    expect(editor.current.strokes).toHaveLength(1);
  });

  it("undo on a fresh editor is a no-op", () => {
    const editor = new ScenarioEditor();
    expect(editor.undo()).toBe(false);
  });
});

describe("density validation", () => {
  it("enforces bcr <= 100 before submission", () => {
    expect(validateDensity({ bcr: 150, bvd: 1, rd: 1 })).toContain("bcr must lie in [0, 100]");
    expect(validateDensity({ bcr: 100, bvd: 0, rd: 0 })).toHaveLength(0);
  });

  it("rejects negatives and non-finite values", () => {
    expect(validateDensity({ bcr: -1, bvd: 1, rd: 1 }).length).toBeGreaterThan(0);
    expect(validateDensity({ bcr: 1, bvd: Number.NaN, rd: 1 }).length).toBeGreaterThan(0);
  });
});

describe("run history", () => {
  it("is append-only and links the exact submitted snapshot", () => {
    const history = new RunHistory();
    const scenario = emptyScenario("x", 7);
    scenario.strokes.push(stroke(0.5));
    const entry = history.record(scenario, "job1", layers(1));
    // mutating the live scenario later must not change the recorded snapshot
    scenario.strokes.push(stroke(0.1));
    scenario.seed = 99;
    expect(entry.scenario.strokes).toHaveLength(1);
    expect(entry.scenario.seed).toBe(7);
    expect(history.list()).toHaveLength(1);
  });

  it("diff of identical layers reports zero deltas everywhere", () => {
    const a = layers(5);
    const b = layers(5);
    expect(layersIdentical(a, b)).toBe(true);
    for (const d of classDeltas(a.energyClasses, b.energyClasses, 4)) {
      expect(d.delta).toBe(0);
    }
  });

  it("diff counts per-class pixel deltas", () => {
    const a = Float32Array.from([0, 0, 1, 2]);
    const b = Float32Array.from([0, 1, 1, 3]);
    const deltas = classDeltas(a, b, 4);
    expect(deltas[0]).toMatchObject({ a: 2, b: 1, delta: -1 });
    expect(deltas[1]).toMatchObject({ a: 1, b: 2, delta: 1 });
    expect(deltas[2]).toMatchObject({ a: 1, b: 0, delta: -1 });
    expect(deltas[3]).toMatchObject({ a: 0, b: 1, delta: 1 });
  });

  it("layersIdentical detects any byte difference", () => {
    expect(layersIdentical(layers(1), layers(2))).toBe(false);
  });
});
