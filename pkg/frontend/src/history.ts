/**
 * Append-only session history, persisted as JSON to a localStorage-like
 * store. Records are never removed or reordered within a session; status
 * transitions pending -> done | failed are the only mutations.
 */

export interface RequestEcho {
  prompt: string;
  prefix: string;
  baseCaption: string;
  guidanceScale: number;
  steps: number;
  seed: number;
}

export type RecordStatus = "pending" | "done" | "failed";

export interface GenerationRecord {
  id: number;
  request: RequestEcho;
  sketchPng: string; // base64, as sent
  imagePng: string | null; // base64, exactly as received
  errorCode: string | null;
  timestamp: number;
  status: RecordStatus;
}

export interface StorageLike {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
}

export class MemoryStorage implements StorageLike {
  private data = new Map<string, string>();
  getItem(key: string): string | null {
    return this.data.get(key) ?? null;
  }
  setItem(key: string, value: string): void {
    this.data.set(key, value);
  }
}

const STORAGE_KEY = "sketch-studio-history";

export class HistoryStore {
  private records: GenerationRecord[] = [];
  private nextId = 1;

  constructor(
    private readonly storage: StorageLike,
    private readonly now: () => number = () => Date.now(),
  ) {
    const saved = storage.getItem(STORAGE_KEY);
    if (saved !== null) {
      try {
        const parsed = JSON.parse(saved) as { records: GenerationRecord[]; nextId: number };
        this.records = parsed.records;
        this.nextId = parsed.nextId;
      } catch {
        // corrupt storage: start a fresh session rather than failing
      }
    }
  }

  private persist(): void {
    this.storage.setItem(STORAGE_KEY, JSON.stringify({ records: this.records, nextId: this.nextId }));
  }

  append(request: RequestEcho, sketchPng: string): GenerationRecord {
    const record: GenerationRecord = {
      id: this.nextId++,
      request,
      sketchPng,
      imagePng: null,
      errorCode: null,
      timestamp: this.now(),
      status: "pending",
    };
    this.records.push(record);
    this.persist();
    return record;
  }

  resolve(id: number, imagePng: string): void {
    const record = this.get(id);
    record.status = "done";
    record.imagePng = imagePng;
    this.persist();
  }

  fail(id: number, errorCode: string): void {
    const record = this.get(id);
    record.status = "failed";
    record.errorCode = errorCode;
    this.persist();
  }

  get(id: number): GenerationRecord {
    const record = this.records.find((r) => r.id === id);
    if (!record) throw new Error(`no record with id ${id}`);
    return record;
  }

  list(): readonly GenerationRecord[] {
    return this.records;
  }
}
