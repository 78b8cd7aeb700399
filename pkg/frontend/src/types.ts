// JSON shapes of the review service API, field names verbatim.

export type SubmissionStatus =
  | "REJECTED_UNUSABLE"
  | "PENDING_REVIEW"
  | "DECIDED";

export type FinalLabel = "SAFE" | "UNSAFE" | "UNUSABLE";

export interface Submission {
  id: string;
  image_path: string;
  received_at: string;
  stage1_verdict: "USABLE" | "UNUSABLE";
  stage1_confidence: number;
  stage2_suggestion: FinalLabel | null;
  stage2_confidence: number | null;
  status: SubmissionStatus;
}

export interface ClaimResponse {
  submission: Submission | null;
  lease_expires_at: string | null;
}

export interface Metrics {
  counts: Record<SubmissionStatus, number>;
  total_submissions: number;
  stage1_rejection_rate: number;
  pending_review: number;
}

export interface ExportResult {
  destination: string;
  manifest: string;
  records: number;
}
