import type {
  ApiErrorBody,
  Label,
  MetricsPayload,
  ProcessSummary,
  RunManifest,
  RunPayload,
} from "./types.js";

/**
 * Thin client over the /api/v1 JSON API.
 *
 * Every method issues exactly one HTTP request and either returns the
 * decoded payload or throws ApiRequestError carrying the service's stable
 * machine code. The fetch implementation is injected so tests can replay
 * recorded responses without a network.
 */

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiRequestError extends Error {
  readonly status: number;
  readonly code: string;

  constructor(status: number, code: string, message: string) {
    super(message);
    this.name = "ApiRequestError";
    this.status = status;
    this.code = code;
  }
}

export interface ApiClientOptions {
  baseUrl?: string;
  token?: string;
  fetchFn?: FetchLike;
}

async function decodeError(response: Response): Promise<ApiRequestError> {
  // The service wraps failures as {"error": {"code", "message"}}; anything
  // else (proxy pages, truncated bodies) degrades to the status code.
  try {
    const body = (await response.json()) as ApiErrorBody;
    if (body && body.error && typeof body.error.code === "string") {
      return new ApiRequestError(response.status, body.error.code, body.error.message);
    }
  } catch {
    // fall through
  }
  return new ApiRequestError(response.status, `HTTP_${response.status}`, response.statusText);
}

export class ApiClient {
  private readonly baseUrl: string;
  private readonly token: string;
  private readonly fetchFn: FetchLike;

  constructor(options: ApiClientOptions = {}) {
    this.baseUrl = (options.baseUrl ?? "").replace(/\/+$/, "");
    this.token = options.token ?? "";
    if (options.fetchFn) {
      this.fetchFn = options.fetchFn;
    } else if (typeof fetch === "function") {
      this.fetchFn = fetch.bind(globalThis);
    } else {
      throw new Error("no fetch implementation available");
    }
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = { Accept: "application/json" };
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    const init: RequestInit = { method, headers };
    if (body !== undefined) {
      headers["Content-Type"] = "application/json";
      init.body = JSON.stringify(body);
    }
    const response = await this.fetchFn(`${this.baseUrl}/api/v1${path}`, init);
    if (!response.ok) throw await decodeError(response);
    return (await response.json()) as T;
  }

  async listProcesses(): Promise<ProcessSummary[]> {
    const data = await this.request<{ processes: ProcessSummary[] }>("GET", "/processes");
    return data.processes;
  }

  async listRuns(processId?: string): Promise<RunManifest[]> {
    const query = processId ? `?process_id=${encodeURIComponent(processId)}` : "";
    const data = await this.request<{ runs: RunManifest[] }>("GET", `/runs${query}`);
    return data.runs;
  }

  getRun(runId: string): Promise<RunPayload> {
    return this.request<RunPayload>("GET", `/runs/${encodeURIComponent(runId)}`);
  }

  /** Analyst label override. The response is the new child revision. */
  overrideLabel(runId: string, stepId: string, label: Label, note = ""): Promise<RunPayload> {
    return this.request<RunPayload>(
      "PATCH",
      `/runs/${encodeURIComponent(runId)}/classifications/${encodeURIComponent(stepId)}`,
      { label, note },
    );
  }

  /** Analyst step rewording. The response is the new child revision. */
  editStep(runId: string, stepId: string, text: string, note = ""): Promise<RunPayload> {
    return this.request<RunPayload>(
      "PATCH",
      `/runs/${encodeURIComponent(runId)}/steps/${encodeURIComponent(stepId)}`,
      { text, note },
    );
  }

  /** Re-run both analysis phases for one activity of the run. */
  reanalyze(runId: string, activityId: string, note = ""): Promise<RunPayload> {
    return this.request<RunPayload>(
      "POST",
      `/runs/${encodeURIComponent(runId)}/activities/${encodeURIComponent(activityId)}/reanalyze`,
      { note },
    );
  }

  getMetrics(runId: string): Promise<MetricsPayload> {
    return this.request<MetricsPayload>("GET", `/runs/${encodeURIComponent(runId)}/metrics`);
  }

  exportUrl(runId: string, format: "json" | "csv"): string {
    return `${this.baseUrl}/api/v1/runs/${encodeURIComponent(runId)}/export?format=${format}`;
  }
}
