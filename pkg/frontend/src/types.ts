/** Wire types mirroring the service's adjudication JSON, verbatim.
 *
 * The console never recomputes biometric math: every score shown comes
 * straight from these payloads, and no template vectors ever reach the
 * browser (ids, scores and quality indicators only).
 */

export type CaseStateName = "Pending" | "Duplicate" | "Unique";

export interface CandidateRow {
  gallery_id: number;
  score: number;
  per_segment?: Record<string, number>;
  effective_weight_sum?: number;
  raw_dot?: number;
}

export interface ProbeSummary {
  presence: Record<string, boolean>;
  quality: Record<string, number>;
}

export interface CaseView {
  case_id: string;
  state: CaseStateName;
  created_at: number;
  decided_at: number | null;
  adjudicator: string | null;
  packet_id: string;
  top_score: number | null;
  probe: ProbeSummary;
  candidates: CandidateRow[];
  linked_candidate_id: number | null;
  enrolled_id: number | null;
}

export interface CaseListResponse {
  cases: CaseView[];
  next_cursor: string | null;
}

export interface StatsResponse {
  gallery_size: number;
  pending_cases: number;
  total_cases: number;
  [key: string]: number;
}

export const SEGMENT_NAMES: readonly string[] = [
  "finger_1", "finger_2", "finger_3", "finger_4", "finger_5",
  "finger_6", "finger_7", "finger_8", "finger_9", "finger_10",
  "face", "iris_left", "iris_right",
];
