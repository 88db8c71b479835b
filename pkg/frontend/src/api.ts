// Typed JSON client for the recommendation service, with retry/backoff.

import type {
  FeedbackAck,
  FeedbackRequest,
  MetricsResponse,
  RecommendationList,
  RunResponse,
} from "./types";

export type FetchFn = (input: string, init?: RequestInit) => Promise<Response>;

export interface RequestOptions {
  retries?: number;
  backoffMs?: number;
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

export class ApiError extends Error {
  constructor(
    message: string,
    readonly status?: number,
  ) {
    super(message);
  }
}

export async function fetchJson<T>(
  fetchFn: FetchFn,
  url: string,
  init?: RequestInit,
  opts: RequestOptions = {},
): Promise<T> {
  const { retries = 2, backoffMs = 200 } = opts;
  let attempt = 0;
  for (;;) {
    let failure: ApiError;
    try {
      const res = await fetchFn(url, init);
      if (res.ok) {
        return (await res.json()) as T;
      }
      failure = new ApiError(`request to ${url} failed with status ${res.status}`, res.status);
      // client errors are not retryable; the request itself is wrong
      if (res.status < 500) throw failure;
    } catch (err) {
      if (err instanceof ApiError && err.status !== undefined && err.status < 500) throw err;
      failure = err instanceof ApiError ? err : new ApiError(String(err));
    }
    if (attempt >= retries) throw failure;
    await sleep(backoffMs * Math.pow(2, attempt));
    attempt += 1;
  }
}

export class ServiceClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchFn = (input, init) => fetch(input, init),
  ) {}

  getRecommendations(repId: string, opts?: RequestOptions): Promise<RecommendationList> {
    return fetchJson(
      this.fetchFn,
      `${this.baseUrl}/reps/${encodeURIComponent(repId)}/recommendations`,
      undefined,
      opts,
    );
  }

  postFeedback(body: FeedbackRequest, opts?: RequestOptions): Promise<FeedbackAck> {
    return fetchJson(
      this.fetchFn,
      `${this.baseUrl}/feedback`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(body),
      },
      opts,
    );
  }

  getMetrics(opts?: RequestOptions): Promise<MetricsResponse> {
    return fetchJson(this.fetchFn, `${this.baseUrl}/metrics`, undefined, opts);
  }

  triggerRun(opts?: RequestOptions): Promise<RunResponse> {
    return fetchJson(this.fetchFn, `${this.baseUrl}/runs`, { method: "POST" }, opts);
  }
}
