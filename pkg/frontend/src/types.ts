// View-model types mirroring the screening service API payloads.
// Deliberately minimal: there are no identity fields here at all, so the UI
// has no rendering path for personal information.

export type Risk = 'warning' | 'observation';
export type Consistency = 'high' | 'moderate' | 'low';
export type Tendency = 'positive' | 'negative' | 'neutral';
export type SeverityLevel = 'none' | 'mild' | 'severe';

export interface QueueItem {
  report_id: string;
  risk: Risk;
  escalated: boolean;
  created_at: string;
  annotated: boolean;
  submission_id: string;
  grade_tag: string | null;
}

export interface ReportListPage {
  items: QueueItem[];
  page: number;
  page_size: number;
  total: number;
}

export interface Observation {
  feature_id: string;
  aspect: string;
  value: string;
  evidence: string;
  confidence?: number;
}

export interface Factor {
  observation: Observation;
  tendency: Tendency;
  severity: SeverityLevel;
  rationale: string;
}

export interface AspectSection {
  aspect: string;
  observations: Observation[];
  interpretation: string;
  produced_at: string;
  model_trace_id: string;
}

export interface ReportBody {
  submission_id: string;
  risk: Risk;
  summary: string;
  positive_factors: Factor[];
  negative_factors: Factor[];
  neutral_factors: Factor[];
  aspect_reports: AspectSection[];
  created_at: string;
  escalation_notice?: string;
}

export interface ReportDoc {
  report_id: string;
  escalated: boolean;
  annotated: boolean;
  rule: Record<string, unknown>;
  report: ReportBody;
}

export interface SessionDoc {
  session_id: string;
  submission_id: string;
  phase: string;
  aspect_status: Record<string, string>;
  event_count: number;
  report_id?: string;
  report_url?: string;
  failure_reason?: string;
}

export interface StatsCell {
  count: number;
  percentage: string;
}

export interface ClassificationStats {
  total: number;
  warning: StatsCell;
  observation: StatsCell;
}

export interface GroupRates {
  size: number;
  high: StatsCell;
  moderate: StatsCell;
  low: StatsCell;
}

export interface MatchingRates {
  reduction_mode: string;
  generated_at?: string;
  total: GroupRates;
  warning: GroupRates;
  observation: GroupRates;
}

export interface QueueFilters {
  risk?: Risk;
  annotated?: boolean;
  page: number;
}

export const TERMINAL_PHASES = ['completed', 'escalated_harm', 'failed'];
