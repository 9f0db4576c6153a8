/**
 * Typed client for the generation service. Talks only HTTP/JSON; the fetch
 * implementation is injectable for tests.
 */

export interface HealthInfo {
  status: string;
  variant: string;
  resolution: number;
}

export interface GenerateParams {
  sketch_png: string;
  prompt: string;
  guidance_scale: number;
  steps: number;
  seed: number;
  raw_sketch?: boolean;
}

export interface GenerateResult {
  image_png: string;
  elapsed_ms: number;
  config: Record<string, unknown>;
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    detail: string,
  ) {
    super(`${code}: ${detail}`);
    this.name = "ApiError";
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    } catch (err) {
      throw new ApiError(0, "network_error", err instanceof Error ? err.message : String(err));
    }
    let body: unknown = null;
    try {
      body = await response.json();
    } catch {
      // fall through: non-JSON body handled below
    }
    if (!response.ok) {
      const rec = (body ?? {}) as Record<string, unknown>;
      const code = typeof rec.code === "string" ? rec.code : `http_${response.status}`;
      const detail = typeof rec.detail === "string" ? rec.detail : response.statusText;
      throw new ApiError(response.status, code, detail);
    }
    if (body === null) {
      throw new ApiError(response.status, "bad_response", "response body is not JSON");
    }
    return body as T;
  }

  health(): Promise<HealthInfo> {
    return this.request<HealthInfo>("/health");
  }

  async styles(): Promise<string[]> {
    const body = await this.request<{ styles: string[] }>("/styles");
    return body.styles;
  }

  generate(params: GenerateParams): Promise<GenerateResult> {
    return this.request<GenerateResult>("/generate", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(params),
    });
  }
}
