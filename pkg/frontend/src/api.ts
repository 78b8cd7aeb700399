import type {
  ClaimResponse,
  ExportResult,
  FinalLabel,
  Metrics,
  Submission,
  SubmissionStatus,
} from "./types.js";

export type FetchLike = (
  input: string,
  init?: RequestInit,
) => Promise<Response>;

/** Non-2xx reply; `status` distinguishes conflict (409) from the rest. */
export class ApiError extends Error {
  readonly status: number;

  constructor(status: number, detail: string) {
    super(detail);
    this.status = status;
  }

  get isConflict(): boolean {
    return this.status === 409;
  }
}

/** fetch itself failed: the service is unreachable, not merely unhappy. */
export class ServiceUnreachableError extends Error {
  constructor(cause: unknown) {
    super(`service unreachable: ${String(cause)}`);
  }
}

async function errorDetail(response: Response): Promise<string> {
  try {
    const body = (await response.json()) as { detail?: string };
    if (body && typeof body.detail === "string") return body.detail;
  } catch {
    // fall through to the status line
  }
  return `HTTP ${response.status}`;
}

/**
 * Thin typed wrapper over the service endpoints.  The operator id is set
 * once and sent as the X-Operator-Id header on every request; `fetch` is
 * injectable for tests.
 */
export class ApiClient {
  private readonly base: string;
  private readonly fetchFn: FetchLike;
  readonly operatorId: string;

  constructor(baseUrl: string, operatorId: string, fetchFn?: FetchLike) {
    if (!operatorId) throw new Error("operator id is required");
    this.base = baseUrl.replace(/\/$/, "");
    this.operatorId = operatorId;
    this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
  }

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const headers = {
      "X-Operator-Id": this.operatorId,
      ...(init?.headers ?? {}),
    };
    let response: Response;
    try {
      response = await this.fetchFn(this.base + path, { ...init, headers });
    } catch (cause) {
      throw new ServiceUnreachableError(cause);
    }
    if (!response.ok) {
      throw new ApiError(response.status, await errorDetail(response));
    }
    return response;
  }

  async queue(status?: SubmissionStatus, limit?: number): Promise<Submission[]> {
    const params = new URLSearchParams();
    if (status !== undefined) params.set("status", status);
    if (limit !== undefined) params.set("limit", String(limit));
    const qs = params.toString();
    const response = await this.request(`/queue${qs ? `?${qs}` : ""}`);
    return (await response.json()) as Submission[];
  }

  async metrics(): Promise<Metrics> {
    const response = await this.request("/metrics");
    return (await response.json()) as Metrics;
  }

  async claimNext(): Promise<ClaimResponse> {
    const response = await this.request("/queue/claim", { method: "POST" });
    return (await response.json()) as ClaimResponse;
  }

  /** Posts the operator's label verbatim; resolves only on a 2xx reply. */
  async decide(submissionId: string, label: FinalLabel): Promise<Submission> {
    const response = await this.request(
      `/submissions/${submissionId}/decision`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ label }),
      },
    );
    return (await response.json()) as Submission;
  }

  imageUrl(submissionId: string): string {
    return `${this.base}/submissions/${submissionId}/image`;
  }

  async exportLabels(destination: string): Promise<ExportResult> {
    const response = await this.request("/export", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ destination }),
    });
    return (await response.json()) as ExportResult;
  }
}
