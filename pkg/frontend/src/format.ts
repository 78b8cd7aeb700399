import type { Submission } from "./types.js";

/**
 * Confidence values are rendered exactly as the service reported them,
 * rounded for display only.  The client never recomputes or reranks.
 */
export function formatConfidence(value: number): string {
  return value.toFixed(2);
}

export function suggestionText(submission: Submission): string {
  if (submission.stage2_suggestion === null) {
    return "no model suggestion (needs review)";
  }
  const conf =
    submission.stage2_confidence === null
      ? ""
      : ` (${formatConfidence(submission.stage2_confidence)})`;
  return `model suggests ${submission.stage2_suggestion}${conf}`;
}

export function stage1Text(submission: Submission): string {
  return `stage 1: ${submission.stage1_verdict} (${formatConfidence(
    submission.stage1_confidence,
  )})`;
}

/** Remaining lease time as m:ss, clamped at zero. */
export function leaseCountdown(
  leaseExpiresAt: string,
  now: Date,
): { text: string; expired: boolean } {
  const remainingMs = new Date(leaseExpiresAt).getTime() - now.getTime();
  if (remainingMs <= 0) return { text: "lease expired", expired: true };
  const totalSeconds = Math.floor(remainingMs / 1000);
  const minutes = Math.floor(totalSeconds / 60);
  const seconds = totalSeconds % 60;
  return {
    text: `${minutes}:${String(seconds).padStart(2, "0")} left`,
    expired: false,
  };
}

export function rejectionRateText(rate: number): string {
  return `${(rate * 100).toFixed(1)}% rejected at stage 1`;
}
