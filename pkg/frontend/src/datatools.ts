// Data-tools actions: the edit table talks to the edits endpoint only, and
// export buttons are plain links to the export endpoint.

import type { ApiClient } from "./api.js";
import type { ReportDoc } from "./types.js";

export const EXPORT_FORMATS = ["csv", "json", "gpx", "kml"] as const;

export interface TableRow {
  report: ReportDoc;
  pendingLabel: string | null; // optimistic label awaiting server confirmation
}

export class DataTools {
  rows: TableRow[] = [];

  constructor(
    private readonly api: ApiClient,
    private readonly scenarioId: string,
  ) {}

  async refresh(includeExcluded = true): Promise<void> {
    const res = await this.api.reports(this.scenarioId, {
      include_excluded: includeExcluded,
      page_size: 100,
    });
    this.rows = res.reports.map((report) => ({ report, pendingLabel: null }));
  }

  async addLabel(reportId: string, label: string): Promise<void> {
    const row = this.rows.find((r) => r.report.report_id === reportId);
    if (row) row.pendingLabel = label; // optimistic, reconciled below
    const res = await this.api.edit(this.scenarioId, {
      kind: "add_label", target: reportId, arg: label,
    });
    if (row) {
      row.report.labels = res.labels;
      row.pendingLabel = null;
    }
  }

  async removeLabel(reportId: string, label: string): Promise<void> {
    const res = await this.api.edit(this.scenarioId, {
      kind: "remove_label", target: reportId, arg: label,
    });
    const row = this.rows.find((r) => r.report.report_id === reportId);
    if (row) row.report.labels = res.labels;
  }

  async setExcluded(reportId: string, excluded: boolean): Promise<void> {
    const res = await this.api.edit(this.scenarioId, {
      kind: excluded ? "exclude" : "include", target: reportId,
    });
    const row = this.rows.find((r) => r.report.report_id === reportId);
    if (row) row.report.excluded = res.excluded;
  }

  async annotate(reportId: string, patch: Record<string, unknown>): Promise<void> {
    await this.api.edit(this.scenarioId, { kind: "annotate", target: reportId, arg: patch });
    await this.refresh();
  }

  async restoreAll(): Promise<number> {
    const { reverted } = await this.api.restore(this.scenarioId);
    await this.refresh();
    return reverted;
  }

  exportUrl(format: (typeof EXPORT_FORMATS)[number]): string {
    return this.api.exportUrl(this.scenarioId, format);
  }
}
