// Scenario form model: form state that maps losslessly to and from the
// engine's scenario document, with per-field validation messages keyed the
// way the engine reports them. Submit stays disabled until a dry-run
// validation comes back clean.

import type { ApiClient } from "./api.js";
import type {
  CheckpointDoc,
  CouponDoc,
  DynamicRuleDoc,
  QuestionnaireGraphDoc,
  ScenarioDoc,
  SensorSettingDoc,
  ViolationDoc,
} from "./types.js";

export const SENSOR_NAMES = [
  "position", "light", "barometer", "accelerometer", "gyroscope",
  "heart_rate", "ble_scan",
] as const;

export const MAX_CHOICE_OPTIONS = 4;

export interface CheckpointRow {
  checkpointId: string;
  name: string;
  lat: number;
  lon: number;
  radiusM: number;
  basePoints: number;
  task: "photo" | "questionnaire" | "sensor-sample";
  contributionLimit: number | null;
  questionnaireId: string | null;
}

export interface SensorRow {
  sensor: string;
  intervalMs: number;
  background: boolean;
}

export interface DynamicRuleRow {
  lat: number;
  lon: number;
  radiusM: number;
  task: "photo" | "questionnaire" | "sensor-sample";
  message: string;
}

export interface ScenarioFormState {
  scenarioId: string;
  name: string;
  description: string;
  areaLat: number;
  areaLon: number;
  areaRadiusM: number;
  periodStart: number;
  periodEnd: number;
  sensors: SensorRow[];
  checkpoints: CheckpointRow[];
  dynamicRules: DynamicRuleRow[];
  pointsEnabled: boolean;
  demandWeightingEnabled: boolean;
  weightingAlpha: number;
  coupons: CouponDoc[];
  levelThresholdPoints: number;
  rankingEnabled: boolean;
  mapPins: boolean;
  timeline: boolean;
  scorePanel: boolean;
  editing: boolean;
  browsing: boolean;
  exportEnabled: boolean;
  questionnaires: Record<string, QuestionnaireGraphDoc>;
}

export function emptyForm(): ScenarioFormState {
  const now = Date.now();
  return {
    scenarioId: "",
    name: "",
    description: "",
    areaLat: 0,
    areaLon: 0,
    areaRadiusM: 1000,
    periodStart: now,
    periodEnd: now + 24 * 3600 * 1000,
    sensors: [{ sensor: "position", intervalMs: 5000, background: true }],
    checkpoints: [],
    dynamicRules: [],
    pointsEnabled: true,
    demandWeightingEnabled: false,
    weightingAlpha: 1.0,
    coupons: [],
    levelThresholdPoints: 100,
    rankingEnabled: true,
    mapPins: true,
    timeline: true,
    scorePanel: true,
    editing: true,
    browsing: true,
    exportEnabled: true,
    questionnaires: {},
  };
}

export function toDocument(form: ScenarioFormState): ScenarioDoc {
  const sensors: Record<string, SensorSettingDoc> = {};
  for (const row of form.sensors) {
    sensors[row.sensor] = { interval_ms: row.intervalMs, background: row.background };
  }
  const checkpoints: CheckpointDoc[] = form.checkpoints.map((c) => ({
    checkpoint_id: c.checkpointId,
    name: c.name,
    fence: { center: { lat: c.lat, lon: c.lon }, radius_m: c.radiusM },
    base_points: c.basePoints,
    task: c.task,
    contribution_limit: c.contributionLimit,
    questionnaire_id: c.questionnaireId,
  }));
  const rules: DynamicRuleDoc[] = form.dynamicRules.map((r) => ({
    fence: { center: { lat: r.lat, lon: r.lon }, radius_m: r.radiusM },
    task: r.task,
    message: r.message,
  }));
  return {
    schema_version: 1,
    scenario_id: form.scenarioId,
    name: form.name,
    description: form.description,
    area: {
      center: { lat: form.areaLat, lon: form.areaLon },
      radius_m: form.areaRadiusM,
    },
    period: { start: form.periodStart, end: form.periodEnd },
    sensing: { sensors },
    motivation: {
      static_requests: checkpoints,
      dynamic_rules: rules,
      reward: {
        points_enabled: form.pointsEnabled,
        demand_weighting_enabled: form.demandWeightingEnabled,
        weighting_alpha: form.weightingAlpha,
        coupons: form.coupons,
        level_threshold_points: form.levelThresholdPoints,
        ranking_enabled: form.rankingEnabled,
      },
      feedback: {
        map_pins: form.mapPins,
        timeline: form.timeline,
        score_panel: form.scorePanel,
      },
    },
    questionnaires: form.questionnaires,
    processing: {
      editing: form.editing,
      browsing: form.browsing,
      export: form.exportEnabled,
    },
  };
}

export function fromDocument(doc: ScenarioDoc): ScenarioFormState {
  return {
    scenarioId: doc.scenario_id,
    name: doc.name,
    description: doc.description,
    areaLat: doc.area.center.lat,
    areaLon: doc.area.center.lon,
    areaRadiusM: doc.area.radius_m,
    periodStart: doc.period.start,
    periodEnd: doc.period.end,
    sensors: Object.entries(doc.sensing.sensors).map(([sensor, s]) => ({
      sensor,
      intervalMs: s.interval_ms,
      background: s.background,
    })),
    checkpoints: doc.motivation.static_requests.map((c) => ({
      checkpointId: c.checkpoint_id,
      name: c.name,
      lat: c.fence.center.lat,
      lon: c.fence.center.lon,
      radiusM: c.fence.radius_m,
      basePoints: c.base_points,
      task: c.task,
      contributionLimit: c.contribution_limit,
      questionnaireId: c.questionnaire_id,
    })),
    dynamicRules: doc.motivation.dynamic_rules.map((r) => ({
      lat: r.fence.center.lat,
      lon: r.fence.center.lon,
      radiusM: r.fence.radius_m,
      task: r.task,
      message: r.message,
    })),
    pointsEnabled: doc.motivation.reward.points_enabled,
    demandWeightingEnabled: doc.motivation.reward.demand_weighting_enabled,
    weightingAlpha: doc.motivation.reward.weighting_alpha,
    coupons: doc.motivation.reward.coupons,
    levelThresholdPoints: doc.motivation.reward.level_threshold_points,
    rankingEnabled: doc.motivation.reward.ranking_enabled,
    mapPins: doc.motivation.feedback.map_pins,
    timeline: doc.motivation.feedback.timeline,
    scorePanel: doc.motivation.feedback.score_panel,
    editing: doc.processing.editing,
    browsing: doc.processing.browsing,
    exportEnabled: doc.processing.export,
    questionnaires: doc.questionnaires,
  };
}

// Instant feedback the form can show before asking the engine. Message keys
// match the document paths the engine uses, so dry-run violations land on
// the same fields.
export function localMessages(form: ScenarioFormState): Map<string, string> {
  const messages = new Map<string, string>();
  if (!form.scenarioId) messages.set("$.scenario_id", "scenario id is required");
  if (form.periodStart >= form.periodEnd) messages.set("$.period", "period must not be empty");
  for (const [qname, graph] of Object.entries(form.questionnaires)) {
    graph.nodes.forEach((node, i) => {
      if (node.kind === "choice" && (node.options?.length ?? 0) > MAX_CHOICE_OPTIONS) {
        messages.set(`$.questionnaires.${qname}.nodes[${i}].options`, "up to 4 options");
      }
    });
  }
  form.checkpoints.forEach((c, i) => {
    if (c.basePoints < 0) {
      messages.set(`$.motivation.static_requests[${i}].base_points`,
        "base points must be non-negative");
    }
  });
  return messages;
}

export interface EditorState {
  form: ScenarioFormState;
  fieldMessages: Map<string, string>;
  submitEnabled: boolean;
}

export class ScenarioEditor {
  state: EditorState = {
    form: emptyForm(),
    fieldMessages: new Map(),
    submitEnabled: false,
  };

  constructor(private readonly api: ApiClient) {}

  load(doc: ScenarioDoc): void {
    this.state.form = fromDocument(doc);
  }

  document(): ScenarioDoc {
    return toDocument(this.state.form);
  }

  /** Dry-run validation; submit unlocks only when no violation remains. */
  async refreshValidation(): Promise<Map<string, string>> {
    const messages = localMessages(this.state.form);
    if (messages.size === 0) {
      const { violations } = await this.api.validate(this.document());
      for (const v of violations) messages.set(v.path, violationText(v));
    }
    this.state.fieldMessages = messages;
    this.state.submitEnabled = messages.size === 0;
    return messages;
  }

  /** Deploy; a scenario already running must be stopped before editing. */
  async submit(): Promise<{ scenarioId: string; joinCodePayload: string; endpoint: string }> {
    if (!this.state.submitEnabled) {
      throw new Error("submit disabled: validation has not passed");
    }
    const doc = this.document();
    const existing = await this.api.list();
    const entry = existing.find((e) => e.scenario_id === doc.scenario_id);
    if (entry) {
      if (entry.status.state === "running") {
        throw new Error("stop scenario first");
      }
      await this.api.remove(doc.scenario_id);
    }
    const res = await this.api.deploy(doc);
    const endpoint = new URL(this.api.base).host;
    const { payload } = await this.api.joincode(res.scenario_id, endpoint);
    return { scenarioId: res.scenario_id, joinCodePayload: payload, endpoint };
  }
}

export function violationText(v: ViolationDoc): string {
  if (v.code === "options exceed 4") return "up to 4 options";
  return v.code;
}
