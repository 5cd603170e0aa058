// Live-monitor state: map pins, timeline feed, reward counters, and the
// blue/gray status colors of the scenario list. Frames arrive from the WS
// stream; a re-query after reconnect merges without duplicates.

import type { EnvelopeFrame, RankEntryDoc, ReportDoc } from "./types.js";

export interface MapPin {
  reportId: string;
  lat: number;
  lon: number;
  kind: string;
  participantId: string;
  receivedAt: number;
}

export interface TimelineEntry {
  text: string;
  photoRef: string | null;
  capturedAt: number;
  participantId: string;
}

export interface RewardSeen {
  participantId: string;
  pointsAwarded: number;
  newLevel: number;
  coupon: string | null;
}

export function statusColor(state: string): "blue" | "gray" {
  return state === "running" ? "blue" : "gray";
}

export class MonitorStore {
  pins: MapPin[] = [];
  timeline: TimelineEntry[] = [];
  rewards: RewardSeen[] = [];
  ranking: RankEntryDoc[] = [];
  rankingStale = false;

  private pinIds = new Set<string>();
  private now: () => number;

  constructor(now: () => number = Date.now) {
    this.now = now;
  }

  applyFrame(frame: EnvelopeFrame): void {
    if (frame.kind === "timeline_entry") {
      const p = frame.payload;
      if (p["feedback"] === "map_pin") {
        const pos = p["position"] as { lat: number; lon: number } | null;
        const reportId = String(p["report_id"]);
        if (pos && !this.pinIds.has(reportId)) {
          this.pinIds.add(reportId);
          this.pins.push({
            reportId,
            lat: pos.lat,
            lon: pos.lon,
            kind: String(p["kind"]),
            participantId: String(p["participant_id"]),
            receivedAt: this.now(),
          });
        }
      } else if (p["feedback"] === "timeline") {
        this.timeline.push({
          text: String(p["text"] ?? ""),
          photoRef: (p["photo_ref"] as string | null) ?? null,
          capturedAt: Number(p["captured_at"] ?? 0),
          participantId: String(p["participant_id"]),
        });
      }
    } else if (frame.kind === "reward_event") {
      const p = frame.payload;
      this.rewards.push({
        participantId: String(p["participant_id"]),
        pointsAwarded: Number(p["points_awarded"]),
        newLevel: Number(p["new_level"]),
        coupon: (p["coupon"] as string | null) ?? null,
      });
      this.rankingStale = true;
    }
  }

  setRanking(entries: RankEntryDoc[]): void {
    this.ranking = entries;
    this.rankingStale = false;
  }

  /** After a WS drop, merge a fresh report query; existing pins stay put. */
  reconcile(reports: ReportDoc[]): void {
    for (const r of reports) {
      if (r.position && !this.pinIds.has(r.report_id)) {
        this.pinIds.add(r.report_id);
        this.pins.push({
          reportId: r.report_id,
          lat: r.position.lat,
          lon: r.position.lon,
          kind: r.kind,
          participantId: r.participant_id,
          receivedAt: this.now(),
        });
      }
    }
  }
}
