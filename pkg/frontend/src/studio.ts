// Browser wiring: draw constraint strokes, set density sliders, submit jobs
// to the gateway and inspect the returned layers side by side.

import { GatewayClient } from "./api.js";
import { mergedPreview, rasterizeStrokes } from "./raster.js";
import {
  RunHistory,
  ScenarioEditor,
  classDeltas,
  layersIdentical,
  validateDensity,
} from "./scenario.js";
import {
  drawPng,
  drawRgba,
  energyGridToRgba,
  heightGridToRgba,
  previewToRgba,
} from "./render.js";
import {
  CHANNELS,
  Channel,
  ENERGY_LEGEND,
  HEIGHT_LEGEND,
  HistoryEntry,
  Point,
} from "./types.js";

const TILE = 64;
const SCALE = 6;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

export function bootStudio(): void {
  const editor = new ScenarioEditor();
  const history = new RunHistory();
  const client = new GatewayClient(window.location.origin);

  const drawCanvas = el<HTMLCanvasElement>("draw");
  drawCanvas.width = TILE * SCALE;
  drawCanvas.height = TILE * SCALE;
  const previewCanvas = el<HTMLCanvasElement>("preview");
  const statusLine = el<HTMLDivElement>("status");
  const historyList = el<HTMLUListElement>("history");
  const diffBox = el<HTMLPreElement>("diff");

  let activeChannel: Channel = "major_road";
  let pendingPoints: Point[] = [];

  function refreshPreview(): void {
    const masks = rasterizeStrokes(editor.current.strokes, TILE);
    drawRgba(previewCanvas, previewToRgba(mergedPreview(masks, TILE), TILE), TILE);
    redrawSketch();
  }

  function redrawSketch(): void {
    const ctx = drawCanvas.getContext("2d")!;
    ctx.clearRect(0, 0, drawCanvas.width, drawCanvas.height);
    ctx.drawImage(previewCanvas, 0, 0, drawCanvas.width, drawCanvas.height);
    if (pendingPoints.length > 0) {
      ctx.strokeStyle = "#ff4081";
      ctx.beginPath();
      pendingPoints.forEach((p, i) => {
        const x = p.x * drawCanvas.width;
        const y = (1 - p.y) * drawCanvas.height;
        if (i === 0) ctx.moveTo(x, y);
        else ctx.lineTo(x, y);
      });
      ctx.stroke();
    }
  }

  drawCanvas.addEventListener("click", (ev) => {
    const rect = drawCanvas.getBoundingClientRect();
    pendingPoints.push({
      x: (ev.clientX - rect.left) / rect.width,
      y: 1 - (ev.clientY - rect.top) / rect.height,
    });
    redrawSketch();
  });

  el<HTMLButtonElement>("finish-stroke").addEventListener("click", () => {
    if (pendingPoints.length >= 2) {
      editor.addStroke({
        channel: activeChannel,
        kind: "line",
        coords: pendingPoints,
        widthPx: Number(el<HTMLInputElement>("stroke-width").value) || 4,
      });
    }
    pendingPoints = [];
    refreshPreview();
  });

  for (const ch of CHANNELS) {
    el<HTMLInputElement>(`channel-${ch}`).addEventListener("change", () => {
      activeChannel = ch;
    });
  }
  el<HTMLButtonElement>("undo").addEventListener("click", () => {
    editor.undo();
    refreshPreview();
  });
  el<HTMLButtonElement>("redo").addEventListener("click", () => {
    editor.redo();
    refreshPreview();
  });
  el<HTMLButtonElement>("clear").addEventListener("click", () => {
    editor.clearAll();
    pendingPoints = [];
    refreshPreview();
  });

  function readDensity(): void {
    editor.setDensity({
      bcr: Number(el<HTMLInputElement>("bcr").value),
      bvd: Number(el<HTMLInputElement>("bvd").value),
      rd: Number(el<HTMLInputElement>("rd").value),
    });
  }
  for (const id of ["bcr", "bvd", "rd"]) {
    el<HTMLInputElement>(id).addEventListener("change", readDensity);
  }
  el<HTMLInputElement>("seed").addEventListener("change", () => {
    editor.setSeed(Number(el<HTMLInputElement>("seed").value) || 0);
  });

  async function renderEntry(entry: HistoryEntry): Promise<void> {
    const { layers } = entry;
    await drawPng(el<HTMLCanvasElement>("out-image"), layers.image, layers.size);
    drawRgba(
      el<HTMLCanvasElement>("out-height"),
      heightGridToRgba(layers.heightClasses, layers.size),
      layers.size,
    );
    drawRgba(
      el<HTMLCanvasElement>("out-energy"),
      energyGridToRgba(layers.energyClasses, layers.size),
      layers.size,
    );
    el<HTMLDivElement>("legend").textContent =
      `height: ${HEIGHT_LEGEND.join(" / ")}  |  energy: ${ENERGY_LEGEND.join(" / ")}`;
  }

  function refreshHistory(): void {
    historyList.innerHTML = "";
    history.list().forEach((entry, index) => {
      const item = document.createElement("li");
      item.textContent = `#${index} seed=${entry.scenario.seed} job=${entry.jobId}`;
      item.addEventListener("click", () => void renderEntry(entry));
      historyList.appendChild(item);
    });
  }

  el<HTMLButtonElement>("compare").addEventListener("click", () => {
    const a = Number(el<HTMLInputElement>("cmp-a").value);
    const b = Number(el<HTMLInputElement>("cmp-b").value);
    try {
      const ea = history.get(a);
      const eb = history.get(b);
      const lines = [
        `identical layers: ${layersIdentical(ea.layers, eb.layers)}`,
        "energy class deltas (b - a):",
        ...classDeltas(ea.layers.energyClasses, eb.layers.energyClasses, 4).map(
          (d) => `  ${ENERGY_LEGEND[d.classId]}: ${d.a} -> ${d.b} (${d.delta >= 0 ? "+" : ""}${d.delta})`,
        ),
        "height class deltas (b - a):",
        ...classDeltas(ea.layers.heightClasses, eb.layers.heightClasses, 5).map(
          (d) => `  ${HEIGHT_LEGEND[d.classId]}: ${d.a} -> ${d.b} (${d.delta >= 0 ? "+" : ""}${d.delta})`,
        ),
      ];
      diffBox.textContent = lines.join("\n");
    } catch (err) {
      diffBox.textContent = String(err);
    }
  });

  el<HTMLButtonElement>("run").addEventListener("click", () => {
    void (async () => {
      readDensity();
      const problems = validateDensity(editor.current.density);
      if (problems.length > 0) {
        statusLine.textContent = `fix before submitting: ${problems.join("; ")}`;
        return;
      }
      const snapshot = editor.current;
      statusLine.textContent = "submitting...";
      try {
        const jobId = await client.submit(snapshot);
        statusLine.textContent = `job ${jobId} running...`;
        const status = await client.waitForJob(jobId);
        if (status.status === "failed") {
          statusLine.textContent = `job failed: ${status.error ?? "unknown"} (retry to resubmit)`;
          return;
        }
        const layers = await client.fetchLayers(status);
        const entry = history.record(snapshot, jobId, layers);
        refreshHistory();
        await renderEntry(entry);
        statusLine.textContent = `job ${jobId} done`;
      } catch (err) {
        statusLine.textContent = `${err} (retry to resubmit)`;
      }
    })();
  });

  refreshPreview();
}

declare global {
  interface Window {
    bootStudio?: () => void;
  }
}
if (typeof window !== "undefined") {
  window.bootStudio = bootStudio;
}
