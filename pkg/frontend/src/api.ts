/**
 * Thin typed client over the service HTTP API.
 *
 * Every method maps one-to-one onto an endpoint; the console never touches
 * models, stores, or files directly. Service errors arrive as
 * {error, detail} bodies and are rethrown as ApiError so the UI can render
 * the stable code inline.
 */

import type {
  ErrorBody,
  ExplainRequestBody,
  ExplainResponse,
  FollowupResponse,
  HealthResponse,
  KbPageResponse,
  PlanPairWire,
  RetrieveResponse,
  ReviewResponse,
  ReviewVerdict,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    readonly detail: string,
  ) {
    super(detail.startsWith(code) ? detail : `${code}: ${detail}`);
    this.name = "ApiError";
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(this.baseUrl + path, init);
    if (!response.ok) {
      let body: ErrorBody | null = null;
      try {
        body = (await response.json()) as ErrorBody;
      } catch {
        // non-JSON error body; fall through to the status line
      }
      throw new ApiError(
        response.status,
        body?.error ?? `HTTP ${response.status}`,
        body?.detail ?? response.statusText,
      );
    }
    return (await response.json()) as T;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  health(): Promise<HealthResponse> {
    return this.request<HealthResponse>("/api/health");
  }

  explain(body: ExplainRequestBody): Promise<ExplainResponse> {
    return this.post<ExplainResponse>("/api/explain", body);
  }

  followup(resultId: string, question: string): Promise<FollowupResponse> {
    return this.post<FollowupResponse>("/api/followup", {
      result_id: resultId,
      question,
    });
  }

  review(
    resultId: string,
    verdict: ReviewVerdict,
    reviewer: string,
    correctedText?: string,
  ): Promise<ReviewResponse> {
    return this.post<ReviewResponse>("/api/review", {
      result_id: resultId,
      verdict,
      reviewer,
      ...(correctedText === undefined ? {} : { corrected_text: correctedText }),
    });
  }

  retrieve(pair: PlanPairWire, k: number): Promise<RetrieveResponse> {
    return this.post<RetrieveResponse>(`/api/retrieve?k=${k}`, {
      plan_pair: pair,
    });
  }

  kbPage(offset: number, limit: number): Promise<KbPageResponse> {
    return this.request<KbPageResponse>(`/api/kb?offset=${offset}&limit=${limit}`);
  }
}
