// Typed HTTP client for the engine. Every write the dashboard performs goes
// through one of these documented endpoints.

import type {
  ApiErrorDoc,
  InstanceStatusDoc,
  RankEntryDoc,
  ReportDoc,
  ScenarioDoc,
  ScenarioListEntry,
  ViolationDoc,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly body: ApiErrorDoc,
  ) {
    super(`${body.code}: ${body.message}`);
  }
}

export interface ReportFilters {
  participant?: string;
  from?: number;
  to?: number;
  bbox?: string;
  label?: string;
  include_excluded?: boolean;
  page?: number;
  page_size?: number;
}

type FetchLike = typeof fetch;

export class ApiClient {
  constructor(
    public readonly base: string,
    private readonly token?: string,
    private readonly fetchImpl: FetchLike = fetch,
  ) {}

  private headers(): Record<string, string> {
    const h: Record<string, string> = { "content-type": "application/json" };
    if (this.token) h["authorization"] = `Bearer ${this.token}`;
    return h;
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const res = await this.fetchImpl(`${this.base}${path}`, {
      method,
      headers: this.headers(),
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!res.ok) {
      const errBody = (await res.json().catch(() => ({
        code: "transport", message: res.statusText, path: "",
      }))) as ApiErrorDoc;
      throw new ApiError(res.status, errBody);
    }
    return (await res.json()) as T;
  }

  deploy(doc: ScenarioDoc) {
    return this.request<{ scenario_id: string; status: InstanceStatusDoc }>(
      "POST", "/scenarios", doc);
  }

  validate(doc: ScenarioDoc) {
    return this.request<{ violations: ViolationDoc[] }>("POST", "/scenarios/validate", doc);
  }

  list() {
    return this.request<ScenarioListEntry[]>("GET", "/scenarios");
  }

  scenario(sid: string) {
    return this.request<{ scenario: ScenarioDoc; status: InstanceStatusDoc }>(
      "GET", `/scenarios/${encodeURIComponent(sid)}`);
  }

  remove(sid: string) {
    return this.request<{ deleted: boolean }>("DELETE", `/scenarios/${encodeURIComponent(sid)}`);
  }

  start(sid: string) {
    return this.request<{ status: InstanceStatusDoc }>(
      "POST", `/scenarios/${encodeURIComponent(sid)}/start`);
  }

  stop(sid: string) {
    return this.request<{ status: InstanceStatusDoc }>(
      "POST", `/scenarios/${encodeURIComponent(sid)}/stop`);
  }

  status(sid: string) {
    return this.request<{ status: InstanceStatusDoc; participants: number }>(
      "GET", `/scenarios/${encodeURIComponent(sid)}/status`);
  }

  joincode(sid: string, endpoint: string) {
    return this.request<{ payload: string }>(
      "GET",
      `/scenarios/${encodeURIComponent(sid)}/joincode?endpoint=${encodeURIComponent(endpoint)}`);
  }

  reports(sid: string, filters: ReportFilters = {}) {
    const params = new URLSearchParams();
    for (const [key, value] of Object.entries(filters)) {
      if (value !== undefined) params.set(key, String(value));
    }
    const qs = params.toString();
    return this.request<{ total: number; page: number; page_size: number; reports: ReportDoc[] }>(
      "GET", `/scenarios/${encodeURIComponent(sid)}/reports${qs ? "?" + qs : ""}`);
  }

  edit(sid: string, op: { kind: string; target: string; arg?: unknown; op_id?: string }) {
    return this.request<{ ops: number; target: string; labels: string[]; excluded: boolean }>(
      "POST", `/scenarios/${encodeURIComponent(sid)}/edits`, op);
  }

  restore(sid: string) {
    return this.request<{ reverted: number }>(
      "POST", `/scenarios/${encodeURIComponent(sid)}/restore`);
  }

  exportUrl(sid: string, format: "csv" | "json" | "gpx" | "kml"): string {
    return `${this.base}/scenarios/${encodeURIComponent(sid)}/export?format=${format}`;
  }

  ranking(sid: string) {
    return this.request<{ ranking: RankEntryDoc[] }>(
      "GET", `/scenarios/${encodeURIComponent(sid)}/ranking`);
  }

  simRun(sid: string, config: Record<string, unknown>) {
    return this.request<Record<string, unknown>>(
      "POST", "/sim/run", { scenario_id: sid, config });
  }

  streamUrl(sid: string): string {
    const ws = this.base.replace(/^http/, "ws");
    const tokenPart = this.token ? `?token=${encodeURIComponent(this.token)}` : "";
    return `${ws}/scenarios/${encodeURIComponent(sid)}/stream${tokenPart}`;
  }
}
