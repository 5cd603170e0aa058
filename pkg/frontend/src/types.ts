// Document shapes exchanged with the engine's HTTP/WS API.

export interface GeoPointDoc {
  lat: number;
  lon: number;
}

export interface GeofenceDoc {
  center: GeoPointDoc;
  radius_m: number;
}

export interface CheckpointDoc {
  checkpoint_id: string;
  name: string;
  fence: GeofenceDoc;
  base_points: number;
  task: "photo" | "questionnaire" | "sensor-sample";
  contribution_limit: number | null;
  questionnaire_id: string | null;
}

export interface DynamicRuleDoc {
  fence: GeofenceDoc;
  task: "photo" | "questionnaire" | "sensor-sample";
  message: string;
}

export interface CouponDoc {
  coupon_id: string;
  title: string;
  trigger: { kind: "points" | "checkpoint"; value: number | string };
}

export interface RewardDoc {
  points_enabled: boolean;
  demand_weighting_enabled: boolean;
  weighting_alpha: number;
  coupons: CouponDoc[];
  level_threshold_points: number;
  ranking_enabled: boolean;
}

export interface SensorSettingDoc {
  interval_ms: number;
  background: boolean;
}

export interface QuestionnaireNodeDoc {
  node_id: string;
  prompt: string;
  kind: "binary" | "choice" | "photo-with-text";
  options: string[] | null;
  next: Record<string, string | null>;
}

export interface QuestionnaireGraphDoc {
  entry: string;
  nodes: QuestionnaireNodeDoc[];
}

export interface ScenarioDoc {
  schema_version: 1;
  scenario_id: string;
  name: string;
  description: string;
  area: GeofenceDoc;
  period: { start: number; end: number };
  sensing: { sensors: Record<string, SensorSettingDoc> };
  motivation: {
    static_requests: CheckpointDoc[];
    dynamic_rules: DynamicRuleDoc[];
    reward: RewardDoc;
    feedback: { map_pins: boolean; timeline: boolean; score_panel: boolean };
  };
  questionnaires: Record<string, QuestionnaireGraphDoc>;
  processing: { editing: boolean; browsing: boolean; export: boolean };
}

export interface ViolationDoc {
  code: string;
  path: string;
  message: string;
}

export interface InstanceStatusDoc {
  state: "created" | "running" | "stopped" | "failed";
  since: number;
  restarts: number;
}

export interface ScenarioListEntry {
  scenario_id: string;
  name: string;
  status: InstanceStatusDoc;
  participants: number;
}

export interface ReportDoc {
  report_id: string;
  scenario_id: string;
  participant_id: string;
  kind: "sensor_sample" | "photo" | "questionnaire_answer";
  captured_at: number;
  payload: Record<string, unknown>;
  position: GeoPointDoc | null;
  labels: string[];
  excluded: boolean;
}

export interface EnvelopeFrame {
  message_id: string;
  topic: string;
  seq: number;
  sent_at: number;
  kind: "report" | "task_request" | "reward_event" | "timeline_entry" | "status";
  payload: Record<string, unknown>;
}

export interface RankEntryDoc {
  participant_id: string;
  points: number;
  rank: number;
}

export interface ApiErrorDoc {
  code: string;
  message: string;
  path: string;
}
