/**
 * DOM wiring for the sketch studio. All logic lives in studio.ts and
 * friends; this file only reflects state into the page.
 */

import { ApiClient } from "./api.js";
import { GenerationRecord, HistoryStore } from "./history.js";
import { compareView, DEFAULT_SEED, Studio } from "./studio.js";
import { DEFAULT_STROKE_WIDTH, emptyDocument, rasterize, SketchDocument, Stroke } from "./raster.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const DISPLAY_SCALE = 4;

class CanvasView {
  doc: SketchDocument;
  private drawing: Stroke | null = null;

  constructor(
    private readonly canvas: HTMLCanvasElement,
    resolution: number,
    private readonly erase: () => boolean,
  ) {
    this.doc = emptyDocument(resolution, resolution);
    canvas.width = resolution * DISPLAY_SCALE;
    canvas.height = resolution * DISPLAY_SCALE;
    canvas.addEventListener("pointerdown", (e) => this.start(e));
    canvas.addEventListener("pointermove", (e) => this.move(e));
    canvas.addEventListener("pointerup", () => this.end());
    canvas.addEventListener("pointerleave", () => this.end());
    this.render();
  }

  private toDocPoint(e: PointerEvent): { x: number; y: number } {
    const rect = this.canvas.getBoundingClientRect();
    return {
      x: ((e.clientX - rect.left) / rect.width) * this.doc.width,
      y: ((e.clientY - rect.top) / rect.height) * this.doc.height,
    };
  }

  private start(e: PointerEvent): void {
    this.drawing = { points: [this.toDocPoint(e)], width: DEFAULT_STROKE_WIDTH, erase: this.erase() };
    this.doc.strokes.push(this.drawing);
    this.render();
  }

  private move(e: PointerEvent): void {
    if (!this.drawing) return;
    this.drawing.points.push(this.toDocPoint(e));
    this.render();
  }

  private end(): void {
    this.drawing = null;
  }

  clear(): void {
    this.doc = emptyDocument(this.doc.width, this.doc.height);
    this.render();
  }

  render(): void {
    const gray = rasterize(this.doc);
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    ctx.imageSmoothingEnabled = false;
    const image = ctx.createImageData(this.doc.width, this.doc.height);
    for (let i = 0; i < gray.length; i++) {
      image.data[i * 4] = gray[i];
      image.data[i * 4 + 1] = gray[i];
      image.data[i * 4 + 2] = gray[i];
      image.data[i * 4 + 3] = 255;
    }
    const off = new OffscreenCanvas(this.doc.width, this.doc.height);
    const offCtx = off.getContext("2d");
    if (!offCtx) return;
    offCtx.putImageData(image, 0, 0);
    ctx.clearRect(0, 0, this.canvas.width, this.canvas.height);
    ctx.drawImage(off, 0, 0, this.canvas.width, this.canvas.height);
  }
}

function renderHistory(history: HistoryStore, container: HTMLElement, onSelect: (r: GenerationRecord) => void): void {
  container.replaceChildren();
  for (const record of history.list()) {
    const item = document.createElement("button");
    item.className = `history-item ${record.status}`;
    item.textContent = `#${record.id} [${record.status}] seed=${record.request.seed} ${record.request.prompt}`;
    item.addEventListener("click", () => onSelect(record));
    container.appendChild(item);
  }
}

function renderCompare(records: GenerationRecord[], container: HTMLElement): void {
  container.replaceChildren();
  if (records.length === 0) return;
  for (const panel of compareView(records)) {
    const cell = document.createElement("figure");
    cell.className = `panel ${panel.kind}`;
    if (panel.image !== null) {
      const img = document.createElement("img");
      // bytes displayed = bytes received: the base64 payload is used as-is
      img.src = `data:image/png;base64,${panel.image}`;
      cell.appendChild(img);
    } else {
      const placeholder = document.createElement("div");
      placeholder.className = "placeholder";
      placeholder.textContent = panel.errorCode ?? "pending";
      cell.appendChild(placeholder);
    }
    const caption = document.createElement("figcaption");
    caption.textContent = panel.label;
    cell.appendChild(caption);
    container.appendChild(cell);
  }
}

async function init(): Promise<void> {
  const api = new ApiClient("");
  const history = new HistoryStore(window.localStorage);
  const studio = new Studio(api, history);

  const statusLine = el<HTMLElement>("status");
  let resolution = 64;
  let styles: string[] = [];
  try {
    const health = await api.health();
    resolution = health.resolution;
    styles = await api.styles();
    statusLine.textContent = `connected: ${health.variant} @ ${health.resolution}px`;
  } catch {
    statusLine.textContent = "service unreachable — sketching still works; generate will record failures";
  }

  const styleSelect = el<HTMLSelectElement>("style");
  for (const style of styles) {
    const option = document.createElement("option");
    option.value = style;
    option.textContent = style;
    styleSelect.appendChild(option);
  }

  const eraseBox = el<HTMLInputElement>("erase");
  const view = new CanvasView(el<HTMLCanvasElement>("sketch"), resolution, () => eraseBox.checked);

  const caption = el<HTMLInputElement>("caption");
  const scale = el<HTMLInputElement>("scale");
  const steps = el<HTMLInputElement>("steps");
  const seed = el<HTMLInputElement>("seed");
  seed.value = String(DEFAULT_SEED);

  const selected: GenerationRecord[] = [];
  const historyBox = el<HTMLElement>("history");
  const compareBox = el<HTMLElement>("compare");

  const refresh = () => {
    renderHistory(history, historyBox, (record) => {
      selected.push(record);
      if (selected.length > 4) selected.shift();
      renderCompare(selected, compareBox);
    });
    renderCompare(selected, compareBox);
  };

  el<HTMLButtonElement>("clear").addEventListener("click", () => view.clear());
  el<HTMLButtonElement>("randomize").addEventListener("click", () => {
    seed.value = String(studio.randomizeSeed());
  });
  el<HTMLButtonElement>("reuse").addEventListener("click", () => {
    const last = selected[selected.length - 1];
    if (!last) return;
    studio.reuseSettings(last);
    styleSelect.value = studio.settings.prefix;
    caption.value = studio.settings.baseCaption;
    scale.value = String(studio.settings.guidanceScale);
    steps.value = String(studio.settings.steps);
    seed.value = String(studio.settings.seed);
  });
  el<HTMLButtonElement>("generate").addEventListener("click", () => {
    studio.settings = {
      prefix: styleSelect.value || studio.settings.prefix,
      baseCaption: caption.value,
      guidanceScale: Number(scale.value),
      steps: Number(steps.value),
      seed: Number(seed.value),
    };
    const record = studio.requestGeneration(view.doc);
    refresh();
    void studio.settle().then(refresh);
    selected.push(record);
    if (selected.length > 4) selected.shift();
  });

  refresh();
}

void init();
