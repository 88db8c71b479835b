// API contract types, mirroring the service's pydantic schemas field-for-field.

export type ActionType = "BoostEngagement" | "PreventChurn" | "PromoteUpsell";

export type FeedbackKind = "DeepLinkClicked" | "NotificationDismissed" | "NoClick";

export interface Recommendation {
  account_id: string;
  rep_id: string;
  action: ActionType;
  g_rank: number;
  r_rank: number;
  a_value: number;
  explanation: string;
  created_at: number;
}

export interface RecommendationList {
  rep_id: string;
  day: number | null;
  recommendations: Recommendation[];
}

export interface FeedbackRequest {
  rep_id: string;
  account_id: string;
  feedback: FeedbackKind;
}

export interface FeedbackAck {
  accepted: boolean;
  rep_id: string;
  account_id: string;
  action: ActionType;
  feedback: FeedbackKind;
  reward: number;
  day: number;
}

export interface DayMetrics {
  day: number;
  served: number;
  reward: number;
  actions: Record<string, number>;
  feedback: Record<string, number>;
}

export interface MetricsResponse {
  cumulative_reward: number;
  feedback_counts: Record<string, number>;
  selection_shares: Record<string, number>;
  days: DayMetrics[];
}

export interface RunResponse {
  run_id: string;
  day: number;
  n_recommendations: number;
}
