/** Typed HTTP client for the review service /api endpoints. */

import type {
  Correction,
  CorrectionsResponse,
  FinalizeResponse,
  ImageListDoc,
  PredictionDoc,
  RecordDoc,
  RegistryDoc,
} from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export interface ClientOptions {
  baseUrl: string;
  token?: string;
  fetchFn?: FetchLike;
}

interface ErrorDetail {
  error?: string;
  current_revision?: number;
  unresolved?: string[];
  reasons?: string[];
  [key: string]: unknown;
}

/**
 * Non-2xx response from the service. The server wraps its error object in
 * a "detail" envelope; this unwraps it so callers see {error, ...} directly.
 */
export class ApiError extends Error {
  readonly status: number;
  readonly detail: ErrorDetail;

  constructor(status: number, detail: ErrorDetail) {
    super(`${status}: ${detail.error ?? "request failed"}`);
    this.name = "ApiError";
    this.status = status;
    this.detail = detail;
  }

  get isStaleRevision(): boolean {
    return this.status === 409 && this.detail.error === "stale_revision";
  }

  get currentRevision(): number | null {
    return typeof this.detail.current_revision === "number" ? this.detail.current_revision : null;
  }

  get isCurationIncomplete(): boolean {
    return this.status === 422 && this.detail.error === "curation_incomplete";
  }

  /** Class codes still unresolved when finalize was rejected. */
  get unresolved(): string[] {
    return Array.isArray(this.detail.unresolved) ? this.detail.unresolved : [];
  }

  /** Per-field messages from a rejected corrections batch. */
  get reasons(): string[] {
    return Array.isArray(this.detail.reasons) ? this.detail.reasons : [];
  }
}

export class ReviewClient {
  private readonly baseUrl: string;
  private readonly token: string;
  private readonly fetchFn: FetchLike;

  constructor(options: ClientOptions) {
    this.baseUrl = options.baseUrl.replace(/\/+$/, "");
    this.token = options.token ?? "";
    this.fetchFn = options.fetchFn ?? ((input, init) => fetch(input, init));
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = {};
    if (this.token) headers["X-Api-Token"] = this.token;
    if (body !== undefined) headers["Content-Type"] = "application/json";
    const response = await this.fetchFn(this.baseUrl + path, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!response.ok) {
      throw new ApiError(response.status, await unwrapDetail(response));
    }
    return (await response.json()) as T;
  }

  listImages(page = 1, pageSize = 200): Promise<ImageListDoc> {
    return this.request("GET", `/api/images?page=${page}&page_size=${pageSize}`);
  }

  getRegistry(): Promise<RegistryDoc> {
    return this.request("GET", "/api/registry");
  }

  getRecord(imageId: string): Promise<RecordDoc> {
    return this.request("GET", `/api/images/${encodeURIComponent(imageId)}/record`);
  }

  getPredictions(imageId: string): Promise<PredictionDoc> {
    return this.request("GET", `/api/images/${encodeURIComponent(imageId)}/predictions`);
  }

  /** Fetches the rendered radiograph as a Blob; img src cannot carry the token header. */
  async fetchRender(imageId: string): Promise<Blob> {
    const headers: Record<string, string> = {};
    if (this.token) headers["X-Api-Token"] = this.token;
    const response = await this.fetchFn(
      `${this.baseUrl}/api/images/${encodeURIComponent(imageId)}/render`,
      { method: "GET", headers },
    );
    if (!response.ok) {
      throw new ApiError(response.status, await unwrapDetail(response));
    }
    return response.blob();
  }

  postCorrections(
    imageId: string,
    baseRevision: number,
    corrections: Record<string, Correction>,
    reviewer: string,
  ): Promise<CorrectionsResponse> {
    return this.request("POST", `/api/images/${encodeURIComponent(imageId)}/corrections`, {
      base_revision: baseRevision,
      corrections,
      reviewer,
    });
  }

  finalize(imageId: string, baseRevision: number, reviewer: string): Promise<FinalizeResponse> {
    return this.request("POST", `/api/images/${encodeURIComponent(imageId)}/finalize`, {
      base_revision: baseRevision,
      reviewer,
    });
  }

  exportTrainingPool(): Promise<unknown> {
    return this.request("POST", "/api/export/training-pool", {});
  }
}

async function unwrapDetail(response: Response): Promise<ErrorDetail> {
  let parsed: unknown = null;
  try {
    parsed = await response.json();
  } catch {
    return { error: "unreadable_response" };
  }
  if (parsed && typeof parsed === "object") {
    const detail = (parsed as { detail?: unknown }).detail;
    if (detail && typeof detail === "object") return detail as ErrorDetail;
    return parsed as ErrorDetail;
  }
  return { error: "unreadable_response" };
}
