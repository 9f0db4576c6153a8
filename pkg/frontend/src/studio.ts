/**
 * Studio controller: ties the sketch document, the API client, and the
 * history store together, independent of any DOM. The DOM layer (main.ts)
 * only reflects this state.
 */

import { ApiClient, ApiError } from "./api.js";
import { GenerationRecord, HistoryStore, RequestEcho } from "./history.js";
import { bytesToBase64, encodeGrayPng } from "./png.js";
import { rasterize, SketchDocument } from "./raster.js";

export const DEFAULT_PREFIX = "a color photograph of";
export const DEFAULT_SEED = 0;

export interface StudioSettings {
  prefix: string;
  baseCaption: string;
  guidanceScale: number;
  steps: number;
  seed: number;
}

export function defaultSettings(): StudioSettings {
  return { prefix: DEFAULT_PREFIX, baseCaption: "", guidanceScale: 7.5, steps: 50, seed: DEFAULT_SEED };
}

export function buildPrompt(prefix: string, baseCaption: string): string {
  return `${prefix} ${baseCaption}`.trim();
}

/** Export the sketch as deterministic black-on-white PNG bytes. */
export function exportSketch(doc: SketchDocument): Uint8Array {
  return encodeGrayPng(rasterize(doc), doc.width, doc.height);
}

export interface ComparePanel {
  kind: "sketch" | "result";
  image: string | null; // base64 PNG, null for failed results
  label: string;
  errorCode: string | null;
}

/** Side-by-side gallery model: the sketch panel plus one panel per record. */
export function compareView(records: GenerationRecord[]): ComparePanel[] {
  if (records.length === 0) throw new Error("compare view needs at least one record");
  const panels: ComparePanel[] = [
    { kind: "sketch", image: records[0].sketchPng, label: "sketch", errorCode: null },
  ];
  for (const record of records) {
    panels.push({
      kind: "result",
      image: record.status === "done" ? record.imagePng : null,
      label: record.request.prompt,
      errorCode: record.status === "failed" ? record.errorCode : null,
    });
  }
  return panels;
}

interface QueuedJob {
  recordId: number;
  params: { sketch_png: string; prompt: string; guidance_scale: number; steps: number; seed: number };
}

export class Studio {
  settings: StudioSettings = defaultSettings();
  private inFlight = 0;
  private queue: QueuedJob[] = [];
  private idleWaiters: (() => void)[] = [];

  constructor(
    private readonly api: ApiClient,
    readonly history: HistoryStore,
    private readonly maxInFlight: number = 1,
  ) {}

  /**
   * Submit the current sketch + settings. The record enters history as
   * pending immediately; at most `maxInFlight` requests run at once and
   * further submissions queue in order.
   */
  requestGeneration(doc: SketchDocument): GenerationRecord {
    const prompt = buildPrompt(this.settings.prefix, this.settings.baseCaption);
    const request: RequestEcho = {
      prompt,
      prefix: this.settings.prefix,
      baseCaption: this.settings.baseCaption,
      guidanceScale: this.settings.guidanceScale,
      steps: this.settings.steps,
      seed: this.settings.seed,
    };
    const sketchPng = bytesToBase64(exportSketch(doc));
    const record = this.history.append(request, sketchPng);
    this.queue.push({
      recordId: record.id,
      params: {
        sketch_png: sketchPng,
        prompt,
        guidance_scale: request.guidanceScale,
        steps: request.steps,
        seed: request.seed,
      },
    });
    this.pump();
    return record;
  }

  private pump(): void {
    while (this.inFlight < this.maxInFlight && this.queue.length > 0) {
      const job = this.queue.shift()!;
      this.inFlight++;
      void this.run(job);
    }
  }

  private async run(job: QueuedJob): Promise<void> {
    try {
      const result = await this.api.generate(job.params);
      // stored exactly as received: no client-side mutation of image bytes
      this.history.resolve(job.recordId, result.image_png);
    } catch (err) {
      const code = err instanceof ApiError ? err.code : "unknown_error";
      this.history.fail(job.recordId, code);
    } finally {
      this.inFlight--;
      this.pump();
      if (this.inFlight === 0 && this.queue.length === 0) {
        const waiters = this.idleWaiters;
        this.idleWaiters = [];
        for (const wake of waiters) wake();
      }
    }
  }

  /** Resolves once every submitted generation has settled. */
  async settle(): Promise<void> {
    while (this.inFlight > 0 || this.queue.length > 0) {
      await new Promise<void>((resolve) => this.idleWaiters.push(resolve));
    }
  }

  /** Repopulate the controls exactly from a history record. */
  reuseSettings(record: GenerationRecord): void {
    this.settings = {
      prefix: record.request.prefix,
      baseCaption: record.request.baseCaption,
      guidanceScale: record.request.guidanceScale,
      steps: record.request.steps,
      seed: record.request.seed,
    };
  }

  randomizeSeed(random: () => number = Math.random): number {
    this.settings.seed = Math.floor(random() * 2 ** 31);
    return this.settings.seed;
  }
}
