// Thin typed client for the screening service. The fetch implementation is
// injectable so tests can run against an in-memory fixture backend.

import type {
  ClassificationStats,
  Consistency,
  MatchingRates,
  QueueFilters,
  ReportDoc,
  ReportListPage,
  SessionDoc,
} from './types.js';

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message);
    this.name = 'ApiError';
  }

  get isAuthError(): boolean {
    return this.status === 401;
  }
}

export interface ApiClientOptions {
  apiBase: string;
  token: string;
  fetchFn?: typeof fetch;
}

export class ApiClient {
  private apiBase: string;
  private token: string;
  private fetchFn: typeof fetch;

  constructor(options: ApiClientOptions) {
    this.apiBase = options.apiBase.replace(/\/+$/, '');
    this.token = options.token;
    this.fetchFn = options.fetchFn ?? fetch;
  }

  private async request<T>(path: string, init: RequestInit = {}): Promise<T> {
    const headers: Record<string, string> = {
      Authorization: `Bearer ${this.token}`,
      ...((init.headers as Record<string, string>) ?? {}),
    };
    let response: Response;
    try {
      response = await this.fetchFn(`${this.apiBase}${path}`, { ...init, headers });
    } catch (err) {
      throw new ApiError(0, 'network_error', String(err));
    }
    if (!response.ok) {
      let code = 'http_error';
      let message = `HTTP ${response.status}`;
      try {
        const body = (await response.json()) as { code?: string; message?: string };
        code = body.code ?? code;
        message = body.message ?? message;
      } catch {
        // keep the generic message when the body is not our error shape
      }
      throw new ApiError(response.status, code, message);
    }
    return (await response.json()) as T;
  }

  listReports(filters: QueueFilters): Promise<ReportListPage> {
    const params = new URLSearchParams();
    if (filters.risk) params.set('risk', filters.risk);
    if (filters.annotated !== undefined) params.set('annotated', String(filters.annotated));
    params.set('page', String(filters.page));
    return this.request<ReportListPage>(`/v1/reports?${params.toString()}`);
  }

  getReport(reportId: string): Promise<ReportDoc> {
    return this.request<ReportDoc>(`/v1/reports/${encodeURIComponent(reportId)}`);
  }

  getSession(sessionId: string): Promise<SessionDoc> {
    return this.request<SessionDoc>(`/v1/sessions/${encodeURIComponent(sessionId)}`);
  }

  annotate(
    reportId: string,
    consistency: Consistency,
    annotatorId: string,
    comment: string,
  ): Promise<unknown> {
    return this.request(`/v1/reports/${encodeURIComponent(reportId)}/annotations`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ consistency, annotator_id: annotatorId, comment }),
    });
  }

  classification(): Promise<ClassificationStats> {
    return this.request<ClassificationStats>('/v1/stats/classification');
  }

  matchingRates(): Promise<MatchingRates> {
    return this.request<MatchingRates>('/v1/stats/matching-rates');
  }

  imageUrl(submissionId: string): string {
    return `${this.apiBase}/v1/submissions/${encodeURIComponent(submissionId)}/image`;
  }
}
