import { describe, expect, it } from "vitest";
import { ApiClient } from "../src/api.js";
import { HistoryStore, MemoryStorage } from "../src/history.js";
import { emptyDocument } from "../src/raster.js";
import {
  buildPrompt,
  compareView,
  DEFAULT_PREFIX,
  DEFAULT_SEED,
  defaultSettings,
  exportSketch,
  Studio,
} from "../src/studio.js";

function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), { status });
}

/** Deterministic fake service: the "image" is a hash of the request body. */
function deterministicFetch(log: string[] = [], gate?: () => Promise<void>) {
  return async (url: string, init?: RequestInit): Promise<Response> => {
    log.push(url);
    if (gate) await gate();
    const body = init?.body as string;
    let h = 0;
    for (let i = 0; i < body.length; i++) h = (h * 31 + body.charCodeAt(i)) >>> 0;
    return jsonResponse(200, { image_png: `img-${h}`, elapsed_ms: 1, config: {} });
  };
}

function makeStudio(fetchImpl: (url: string, init?: RequestInit) => Promise<Response>) {
  return new Studio(new ApiClient("", fetchImpl), new HistoryStore(new MemoryStorage()));
}

describe("prompt composition", () => {
  it("prefixes the caption", () => {
    expect(buildPrompt("an oil painting of", "a mountain")).toBe("an oil painting of a mountain");
  });

  it("empty caption yields the bare prefix", () => {
    expect(buildPrompt(DEFAULT_PREFIX, "")).toBe(DEFAULT_PREFIX);
  });

  it("defaults to the photographic prefix and a fixed seed", () => {
    const settings = defaultSettings();
    expect(settings.prefix).toBe("a color photograph of");
    expect(settings.seed).toBe(DEFAULT_SEED);
  });
});

describe("exportSketch", () => {
  it("is byte-identical for the same document", () => {
    const doc = emptyDocument(64, 64);
    doc.strokes.push({ points: [{ x: 5, y: 5 }, { x: 60, y: 40 }], width: 2, erase: false });
    expect(exportSketch(doc)).toEqual(exportSketch(doc));
  });

  it("an empty canvas exports as a valid (all-white) PNG", () => {
    const png = exportSketch(emptyDocument(64, 64));
    expect(Array.from(png.subarray(1, 4))).toEqual([0x50, 0x4e, 0x47]);
  });
});

describe("generation flow", () => {
  it("resolves a record with the service's exact bytes", async () => {
    const studio = makeStudio(async () =>
      jsonResponse(200, { image_png: "ZXhhY3Q=", elapsed_ms: 5, config: {} }),
    );
    studio.settings.baseCaption = "a mountain";
    const record = studio.requestGeneration(emptyDocument(64, 64));
    expect(record.status).toBe("pending");
    await studio.settle();
    const done = studio.history.get(record.id);
    expect(done.status).toBe("done");
    expect(done.imagePng).toBe("ZXhhY3Q=");
    expect(done.request.prompt).toBe("a color photograph of a mountain");
  });

  it("same inputs and seed produce identical result images", async () => {
    const studio = makeStudio(deterministicFetch());
    studio.settings = { ...defaultSettings(), baseCaption: "a river", seed: 7 };
    const doc = emptyDocument(64, 64);
    doc.strokes.push({ points: [{ x: 10, y: 10 }, { x: 50, y: 50 }], width: 2, erase: false });
    const a = studio.requestGeneration(doc);
    const b = studio.requestGeneration(doc);
    await studio.settle();
    expect(studio.history.get(a.id).imagePng).toBe(studio.history.get(b.id).imagePng);
    expect(studio.history.get(a.id).imagePng).not.toBeNull();
  });

  it("replaying a session's requests reproduces every done image", async () => {
    const doc = emptyDocument(64, 64);
    doc.strokes.push({ points: [{ x: 3, y: 3 }, { x: 40, y: 20 }], width: 2, erase: false });
    const run = async () => {
      const studio = makeStudio(deterministicFetch());
      studio.settings = { ...defaultSettings(), baseCaption: "a tower", seed: 11 };
      studio.requestGeneration(doc);
      studio.settings.seed = 12;
      studio.requestGeneration(doc);
      await studio.settle();
      return studio.history.list().map((r) => r.imagePng);
    };
    expect(await run()).toEqual(await run());
  });

  it("keeps at most one generation in flight and queues the rest", async () => {
    let inFlight = 0;
    let maxSeen = 0;
    const waiters: (() => void)[] = [];
    const gate = () =>
      new Promise<void>((resolve) => {
        inFlight++;
        maxSeen = Math.max(maxSeen, inFlight);
        waiters.push(() => {
          inFlight--;
          resolve();
        });
      });
    const studio = makeStudio(deterministicFetch([], gate));
    const doc = emptyDocument(64, 64);
    const records = [studio.requestGeneration(doc), studio.requestGeneration(doc), studio.requestGeneration(doc)];
    // release jobs as they arrive; queued jobs must not start early
    while (waiters.length < 1) await Promise.resolve();
    expect(maxSeen).toBe(1);
    for (let released = 0; released < 3; released++) {
      await new Promise((r) => setTimeout(r, 0));
      waiters.shift()!();
    }
    await studio.settle();
    expect(maxSeen).toBe(1);
    for (const record of records) {
      expect(studio.history.get(record.id).status).toBe("done");
    }
  });

  it("service failure marks the record failed and leaves the studio usable", async () => {
    let fail = true;
    const studio = makeStudio(async (url, init) => {
      if (fail) throw new TypeError("connection refused");
      return deterministicFetch()(url, init);
    });
    const doc = emptyDocument(64, 64);
    const bad = studio.requestGeneration(doc);
    await studio.settle();
    expect(studio.history.get(bad.id).status).toBe("failed");
    expect(studio.history.get(bad.id).errorCode).toBe("network_error");

    fail = false;
    const good = studio.requestGeneration(doc);
    await studio.settle();
    expect(studio.history.get(good.id).status).toBe("done");
  });

  it("surfaces service error codes on the failed record", async () => {
    const studio = makeStudio(async () =>
      jsonResponse(429, { code: "queue_full", detail: "busy" }),
    );
    const record = studio.requestGeneration(emptyDocument(64, 64));
    await studio.settle();
    expect(studio.history.get(record.id).errorCode).toBe("queue_full");
  });
});

describe("reuse and compare", () => {
  it("reuseSettings repopulates the controls exactly", async () => {
    const studio = makeStudio(deterministicFetch());
    studio.settings = {
      prefix: "a graffiti of",
      baseCaption: "a harbor",
      guidanceScale: 3.5,
      steps: 20,
      seed: 99,
    };
    const record = studio.requestGeneration(emptyDocument(64, 64));
    await studio.settle();
    studio.settings = defaultSettings();
    studio.reuseSettings(studio.history.get(record.id));
    expect(studio.settings).toEqual({
      prefix: "a graffiti of",
      baseCaption: "a harbor",
      guidanceScale: 3.5,
      steps: 20,
      seed: 99,
    });
  });

  it("randomizeSeed updates the seed deterministically from the rng", () => {
    const studio = makeStudio(deterministicFetch());
    const seed = studio.randomizeSeed(() => 0.5);
    expect(seed).toBe(2 ** 30);
    expect(studio.settings.seed).toBe(seed);
  });

  it("selecting two records yields two result panels plus the sketch panel", async () => {
    const studio = makeStudio(deterministicFetch());
    const doc = emptyDocument(64, 64);
    const a = studio.requestGeneration(doc);
    studio.settings.seed = 5;
    const b = studio.requestGeneration(doc);
    await studio.settle();
    const panels = compareView([studio.history.get(a.id), studio.history.get(b.id)]);
    expect(panels).toHaveLength(3);
    expect(panels[0].kind).toBe("sketch");
    expect(panels.slice(1).every((p) => p.kind === "result" && p.image !== null)).toBe(true);
  });

  it("a failed record renders a placeholder with its error code", async () => {
    const studio = makeStudio(async () => jsonResponse(500, { code: "sampling_failed", detail: "x" }));
    const record = studio.requestGeneration(emptyDocument(64, 64));
    await studio.settle();
    const panels = compareView([studio.history.get(record.id)]);
    expect(panels[1].image).toBeNull();
    expect(panels[1].errorCode).toBe("sampling_failed");
  });

  it("rejects an empty selection", () => {
    expect(() => compareView([])).toThrow();
  });
});
