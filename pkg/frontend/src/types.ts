// Payload shapes for the gateway's v1 JSON API. Field names mirror the
// wire format exactly; the console renders these fields and never
// derives its own scores, flags, or gaps.

export type ControlRef = {
  id: string;
  title: string;
};

export type TriageCandidate = {
  technique_id: string;
  name: string;
  score: number;
  flagged: boolean;
  controls: ControlRef[];
  warning?: string;
};

export type TriageResult = {
  schema: 'triage.v1';
  incident_text: string;
  model: string;
  k: number;
  threshold: number;
  flagged_overall: boolean;
  ranked: TriageCandidate[];
};

export type MetricRef = {
  spec_index: number;
  formula: string;
};

export type GapEntry = {
  control: ControlRef;
  techniques: string[];
  metrics: MetricRef[];
};

export type GapReport = {
  schema: 'gap.v1';
  observed_techniques: string[];
  required_controls: string[];
  implemented_controls: string[];
  include_flagged: boolean;
  gaps: GapEntry[];
  warnings: string[];
};

export type HealthInfo = {
  status: string;
  controls: number;
  safeguards: number;
  techniques: number;
  metric_specs: number;
  models: string[];
  default_model: string;
  catalog_warnings: string[];
};

export type CatalogControl = {
  id: string;
  title: string;
  description: string;
};

export type TriageRequest = {
  text: string;
  k?: number;
  threshold?: number;
  model?: string;
};

export type GapRequest = {
  technique_ids: string[];
  implemented_controls: string[];
  include_flagged?: boolean;
};

export type ApiErrorBody = {
  code: string;
  message: string;
  detail: unknown;
};

export type Verdict = 'confirmed' | 'rejected' | 'pending';
