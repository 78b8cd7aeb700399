import { describe, expect, it } from "vitest";
import {
  formatConfidence,
  leaseCountdown,
  rejectionRateText,
  suggestionText,
} from "../src/format.js";
import type { Submission } from "../src/types.js";

function submissionWith(
  suggestion: Submission["stage2_suggestion"],
  confidence: number | null,
): Submission {
  return {
    id: "sub-000001",
    image_path: "incoming/sub-000001.ppm",
    received_at: "2024-05-01T10:00:00+00:00",
    stage1_verdict: "USABLE",
    stage1_confidence: 0.97,
    stage2_suggestion: suggestion,
    stage2_confidence: confidence,
    status: "PENDING_REVIEW",
  };
}

describe("formatting", () => {
  it("renders the suggestion text from the exact API confidence", () => {
    const text = suggestionText(submissionWith("UNSAFE", 0.91));
    expect(text).toBe("model suggests UNSAFE (0.91)");
  });

  it("says so when the model made no suggestion", () => {
    expect(suggestionText(submissionWith(null, null))).toBe(
      "no model suggestion (needs review)",
    );
  });

  it("does not rescale confidences, only rounds for display", () => {
    expect(formatConfidence(0.953)).toBe("0.95");
    expect(formatConfidence(1.0)).toBe("1.00");
    expect(formatConfidence(0.5)).toBe("0.50");
  });

  it("counts down the lease and flags expiry", () => {
    const expires = "2024-05-01T10:05:00.000Z";
    expect(leaseCountdown(expires, new Date("2024-05-01T10:00:30.000Z"))).toEqual({
      text: "4:30 left",
      expired: false,
    });
    expect(
      leaseCountdown(expires, new Date("2024-05-01T10:05:00.001Z")).expired,
    ).toBe(true);
  });

  it("shows the rejection rate exactly as reported", () => {
    expect(rejectionRateText(0.25)).toBe("25.0% rejected at stage 1");
    expect(rejectionRateText(0.0)).toBe("0.0% rejected at stage 1");
  });
});
