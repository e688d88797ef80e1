/** Thin typed client for the service's adjudication endpoints. */

import type { CaseListResponse, CaseView, StatsResponse } from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class ConflictError extends ApiError {
  constructor(message: string) {
    super(409, message);
  }
}

export class NotFoundError extends ApiError {
  constructor(message: string) {
    super(404, message);
  }
}

async function raise(resp: Response): Promise<never> {
  let detail = resp.statusText;
  try {
    const body = await resp.json();
    if (body && typeof body.detail === "string") detail = body.detail;
  } catch {
    /* non-JSON error body */
  }
  if (resp.status === 409) throw new ConflictError(detail);
  if (resp.status === 404) throw new NotFoundError(detail);
  throw new ApiError(resp.status, detail);
}

export class ApiClient {
  constructor(
    private baseUrl: string = "",
    private fetchImpl: typeof fetch = fetch,
  ) {}

  private async get<T>(path: string): Promise<T> {
    const resp = await this.fetchImpl(this.baseUrl + path);
    if (!resp.ok) await raise(resp);
    return (await resp.json()) as T;
  }

  async listCases(
    state: string | null = "Pending",
    cursor: string | null = null,
    pageSize = 20,
  ): Promise<CaseListResponse> {
    const params = new URLSearchParams();
    if (state) params.set("state", state);
    if (cursor) params.set("cursor", cursor);
    params.set("page_size", String(pageSize));
    return this.get(`/v1/adjudication/cases?${params.toString()}`);
  }

  async getCase(caseId: string): Promise<CaseView> {
    return this.get(`/v1/adjudication/cases/${encodeURIComponent(caseId)}`);
  }

  async submitDecision(
    caseId: string,
    decision: "Duplicate" | "Unique",
    adjudicator: string,
  ): Promise<CaseView> {
    const resp = await this.fetchImpl(
      `${this.baseUrl}/v1/adjudication/cases/${encodeURIComponent(caseId)}/decision`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ decision, adjudicator }),
      },
    );
    if (!resp.ok) await raise(resp);
    return (await resp.json()) as CaseView;
  }

  async stats(): Promise<StatsResponse> {
    return this.get("/v1/stats");
  }
}
