// Gateway client: job submission, polling with backoff, layer downloads.

import { decodeFloatRaster } from "./wire.js";
import { ResultLayers, Scenario } from "./types.js";
import { validateDensity } from "./scenario.js";

export interface JobStatus {
  job_id: string;
  status: "queued" | "running" | "done" | "failed";
  error?: string;
  result?: { layers: Record<string, string>; generator_digest: string; seed: number };
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class GatewayClient {
  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = (...args) => fetch(...args),
    private pollIntervalMs = 1000,
    private maxPollIntervalMs = 8000,
  ) {}

  private url(path: string): string {
    return `${this.baseUrl.replace(/\/$/, "")}${path}`;
  }

  async submit(scenario: Scenario): Promise<string> {
    const problems = validateDensity(scenario.density);
    if (problems.length > 0) {
      throw new Error(`invalid density: ${problems.join("; ")}`);
    }
    const body = {
      city: scenario.city,
      density: scenario.density,
      seed: scenario.seed,
      geometries: scenario.strokes.map((s) => ({
        channel: s.channel,
        kind: s.kind,
        coords: s.coords.map((p) => [p.x, p.y]),
        width_px: s.widthPx,
      })),
    };
    const res = await this.fetchImpl(this.url("/jobs"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!res.ok) {
      // surface the gateway error verbatim so the user can see what to fix
      throw new Error(`gateway rejected job (${res.status}): ${await res.text()}`);
    }
    const data = (await res.json()) as JobStatus;
    return data.job_id;
  }

  async status(jobId: string): Promise<JobStatus> {
    const res = await this.fetchImpl(this.url(`/jobs/${jobId}`));
    if (!res.ok) throw new Error(`status failed (${res.status}): ${await res.text()}`);
    return (await res.json()) as JobStatus;
  }

  /** Poll at 1 s with exponential backoff until the job settles. */
  async waitForJob(
    jobId: string,
    sleep: (ms: number) => Promise<void> = (ms) => new Promise((r) => setTimeout(r, ms)),
  ): Promise<JobStatus> {
    let interval = this.pollIntervalMs;
    for (;;) {
      const body = await this.status(jobId);
      if (body.status === "done" || body.status === "failed") return body;
      await sleep(interval);
      interval = Math.min(interval * 2, this.maxPollIntervalMs);
    }
  }

  async fetchLayers(status: JobStatus): Promise<ResultLayers> {
    if (status.status !== "done" || !status.result) {
      throw new Error(`job ${status.job_id} is not done`);
    }
    const layers = status.result.layers;
    const [image, hc, ec] = await Promise.all([
      this.fetchBytes(layers["image"]),
      this.fetchBytes(layers["height_classes"]),
      this.fetchBytes(layers["energy_classes"]),
    ]);
    const heightRaster = await decodeFloatRaster(hc);
    const energyRaster = await decodeFloatRaster(ec);
    if (heightRaster.width !== energyRaster.width || heightRaster.height !== energyRaster.height) {
      throw new Error("gateway returned misaligned layers");
    }
    return {
      image,
      heightClasses: heightRaster.data,
      energyClasses: energyRaster.data,
      size: heightRaster.width,
    };
  }

  private async fetchBytes(path: string): Promise<Uint8Array> {
    const res = await this.fetchImpl(this.url(path));
    if (!res.ok) throw new Error(`layer fetch failed (${res.status})`);
    return new Uint8Array(await res.arrayBuffer());
  }
}
