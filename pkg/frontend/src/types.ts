/**
 * Wire types for the /api/v1 JSON contract.
 *
 * The service owns every number in these payloads. The UI renders them
 * verbatim; the only client-side arithmetic anywhere is percentage
 * formatting for display.
 */

export type Label = "VA" | "BVA" | "NVA";

export const LABELS: readonly Label[] = ["VA", "BVA", "NVA"];

export interface ConfigPayload {
  phase: string;
  assignment: Record<string, string>;
  label: string;
}

export interface StepView {
  step_id: string;
  ordinal: number;
  text: string;
  // null while the classification phase has not produced a label
  label: Label | null;
  justification: string;
}

export interface ActivityView {
  activity_id: string;
  activity_name: string;
  status: string;
  steps: StepView[];
}

export interface DistributionEntry {
  count: number;
  fraction: number;
}

export interface RunPayload {
  run_id: string;
  process_id: string;
  process_name: string;
  revision: number;
  parent_run: string | null;
  child_run: string | null;
  created_at: string;
  provider_label: string;
  breakdown_config: ConfigPayload | null;
  vaa_config: ConfigPayload | null;
  review_note: string;
  statuses: Record<string, string>;
  steps: { step_id: string; activity_id: string; ordinal: number; text: string }[];
  classifications: { step_id: string; label: Label; justification: string }[];
  activities: ActivityView[];
  distribution: Record<string, DistributionEntry>;
}

export interface ProcessSummary {
  process_id: string;
  name: string;
  domain_tag: string;
  activity_count: number;
  activities: { activity_id: string; name: string; lane: string }[];
  has_gold: boolean;
  warnings: string[];
}

export interface RunManifest {
  run_id: string;
  process_id: string;
  revision: number;
  parent_run: string | null;
  created_at: string;
  breakdown_label: string;
  vaa_label: string;
  provider_label: string;
  activities_ok: number;
  activities_total: number;
}

export interface ConfusionPayload {
  labels: string[];
  counts: number[][];
  row_percentages: number[][];
  zero_rows: number[];
}

export interface ClassLinePayload {
  precision: number;
  recall: number;
  f1: number;
  support: number;
}

export interface MetricsPayload {
  run_id: string;
  process_id: string;
  scored_steps: number;
  unmatched_steps: number;
  ambiguous_steps: number;
  confusion: ConfusionPayload;
  f1: { macro: number; per_class: Record<string, ClassLinePayload> };
  alignment: {
    counts: Record<string, number>;
    percentages: Record<string, number>;
    total_generated: number;
    total_ground_truth: number;
  };
}

export interface ApiErrorBody {
  error: { code: string; message: string };
}
