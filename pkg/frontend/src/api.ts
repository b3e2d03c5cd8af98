/**
 * Service client. One /compare may be in flight at a time: starting a new
 * one aborts the previous (latest wins). `fetchImpl` is injectable so tests
 * run without a network.
 */

import { parseCompareResponse, type CompareResponse, type ClickRequest, type KnobParams } from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(message: string, readonly status: number | null = null) {
    super(message);
  }
}

export class ApiClient {
  private inflight: AbortController | null = null;

  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async post(path: string, body: unknown, signal?: AbortSignal): Promise<unknown> {
    let response: Response;
    try {
      response = await this.fetchImpl(`${this.baseUrl}${path}`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(body),
        signal,
      });
    } catch (err) {
      if ((err as Error).name === "AbortError") throw err;
      throw new ApiError(`network failure talking to ${path}: ${(err as Error).message}`);
    }
    let doc: unknown = null;
    try {
      doc = await response.json();
    } catch {
      throw new ApiError(`non-JSON response from ${path}`, response.status);
    }
    if (!response.ok) {
      const detail = (doc as { error?: string })?.error ?? `status ${response.status}`;
      throw new ApiError(detail, response.status);
    }
    return doc;
  }

  /** Fetch all rankers for a message; aborts any previous compare. */
  async compare(message: string, knobs: KnobParams): Promise<CompareResponse> {
    this.inflight?.abort();
    const controller = new AbortController();
    this.inflight = controller;
    try {
      const doc = await this.post("/compare", { message, params: knobsToParams(knobs) }, controller.signal);
      return parseCompareResponse(doc);
    } finally {
      if (this.inflight === controller) this.inflight = null;
    }
  }

  /** Fire-and-forget click logging (errors surface to the caller). */
  async click(request: ClickRequest): Promise<void> {
    await this.post("/click", request);
  }

  async config(): Promise<Record<string, unknown>> {
    const response = await this.fetchImpl(`${this.baseUrl}/config`);
    if (!response.ok) throw new ApiError(`config fetch failed`, response.status);
    return (await response.json()) as Record<string, unknown>;
  }
}

export function knobsToParams(knobs: KnobParams): Record<string, unknown> {
  const params: Record<string, unknown> = {
    alpha: knobs.alpha,
    beta: knobs.beta,
    k: knobs.k,
    s: knobs.s,
    seed: knobs.seed,
  };
  if (knobs.use_mmr_preselect) params.use_mmr_preselect = true;
  return params;
}
