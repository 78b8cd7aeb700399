import { describe, expect, it } from "vitest";
import { ApiClient, ApiError, ServiceUnreachableError } from "../src/api.js";
import type { FetchLike } from "../src/api.js";
import { FakeService } from "./fake_service.js";

function captureFetch(status = 200, body: unknown = []) {
  const calls: Array<{ input: string; init?: RequestInit }> = [];
  const fetchFn: FetchLike = async (input, init) => {
    calls.push({ input, init });
    return new Response(JSON.stringify(body), { status });
  };
  return { calls, fetchFn };
}

describe("ApiClient", () => {
  it("requires an operator id", () => {
    expect(() => new ApiClient("http://svc", "")).toThrow(/operator id/);
  });

  it("sends the operator header on every request", async () => {
    const { calls, fetchFn } = captureFetch();
    const client = new ApiClient("http://svc", "op-7", fetchFn);
    await client.queue();
    await client.metrics();
    await client.claimNext();
    expect(calls).toHaveLength(3);
    for (const call of calls) {
      const headers = call.init?.headers as Record<string, string>;
      expect(headers["X-Operator-Id"]).toBe("op-7");
    }
  });

  it("builds queue query strings from the filters", async () => {
    const { calls, fetchFn } = captureFetch();
    const client = new ApiClient("http://svc/", "op", fetchFn);
    await client.queue("PENDING_REVIEW", 5);
    expect(calls[0].input).toBe("http://svc/queue?status=PENDING_REVIEW&limit=5");
    await client.queue();
    expect(calls[1].input).toBe("http://svc/queue");
  });

  it("posts the decision label verbatim as JSON", async () => {
    const { calls, fetchFn } = captureFetch(200, { id: "sub-000001" });
    const client = new ApiClient("http://svc", "op", fetchFn);
    await client.decide("sub-000001", "UNSAFE");
    expect(calls[0].input).toBe("http://svc/submissions/sub-000001/decision");
    expect(calls[0].init?.method).toBe("POST");
    expect(JSON.parse(String(calls[0].init?.body))).toEqual({ label: "UNSAFE" });
  });

  it("maps 409 responses to conflict errors with the service detail", async () => {
    const { fetchFn } = captureFetch(409, { detail: "sub-000001 already decided" });
    const client = new ApiClient("http://svc", "op", fetchFn);
    const err = await client.decide("sub-000001", "SAFE").catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).isConflict).toBe(true);
    expect((err as ApiError).message).toBe("sub-000001 already decided");
  });

  it("falls back to the status line when the error body is not JSON", async () => {
    const fetchFn: FetchLike = async () => new Response("boom", { status: 500 });
    const client = new ApiClient("http://svc", "op", fetchFn);
    const err = await client.metrics().catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).message).toBe("HTTP 500");
  });

  it("wraps network failures as service-unreachable", async () => {
    const fetchFn: FetchLike = async () => {
      throw new TypeError("fetch failed");
    };
    const client = new ApiClient("http://svc", "op", fetchFn);
    await expect(client.queue()).rejects.toBeInstanceOf(ServiceUnreachableError);
  });

  it("builds image URLs without fetching", () => {
    const client = new ApiClient("http://svc", "op", async () => {
      throw new Error("should not fetch");
    });
    expect(client.imageUrl("sub-000002")).toBe(
      "http://svc/submissions/sub-000002/image",
    );
  });

  it("round-trips a claim against the fake service", async () => {
    const service = new FakeService();
    const seeded = service.addPending("UNSAFE", 0.91);
    const client = new ApiClient("http://svc", "op-1", service.fetch);
    const claim = await client.claimNext();
    expect(claim.submission?.id).toBe(seeded.id);
    expect(claim.lease_expires_at).toBe(new Date(300_000).toISOString());
  });
});
