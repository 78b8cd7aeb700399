import { ApiClient } from "./api.js";
import { rejectionRateText, stage1Text, suggestionText } from "./format.js";
import type { Metrics, Submission } from "./types.js";

export interface QueueViewOptions {
  pollMs?: number;
}

/**
 * Read-only queue panel: pending submissions in arrival order plus the
 * service metrics line.  Polls; failures show a banner with a retry
 * button instead of wiping the last good render.
 */
export class QueueView {
  private readonly root: HTMLElement;
  private readonly client: ApiClient;
  private readonly pollMs: number;
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(root: HTMLElement, client: ApiClient, options?: QueueViewOptions) {
    this.root = root;
    this.client = client;
    this.pollMs = options?.pollMs ?? 5000;
    this.root.innerHTML = `
      <div data-testid="queue-error" class="error-banner" hidden>
        <span data-testid="queue-error-text"></span>
        <button type="button" data-testid="queue-retry">Retry</button>
      </div>
      <p data-testid="queue-metrics" class="metrics-line"></p>
      <p data-testid="queue-empty" hidden>No submissions waiting for review.</p>
      <ol data-testid="queue-list" class="queue-list"></ol>
    `;
    const retry = this.root.querySelector<HTMLButtonElement>(
      '[data-testid="queue-retry"]',
    );
    retry?.addEventListener("click", () => {
      void this.refresh();
    });
  }

  start(): void {
    if (this.timer !== null) return;
    this.timer = setInterval(() => {
      void this.refresh();
    }, this.pollMs);
    void this.refresh();
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  async refresh(): Promise<void> {
    let pending: Submission[];
    let metrics: Metrics;
    try {
      pending = await this.client.queue("PENDING_REVIEW");
      metrics = await this.client.metrics();
    } catch (err) {
      this.showError(err instanceof Error ? err.message : String(err));
      return;
    }
    this.hideError();
    this.renderMetrics(metrics);
    this.renderList(pending);
  }

  private element(testId: string): HTMLElement {
    const el = this.root.querySelector<HTMLElement>(`[data-testid="${testId}"]`);
    if (!el) throw new Error(`missing element ${testId}`);
    return el;
  }

  private showError(message: string): void {
    const banner = this.element("queue-error");
    banner.hidden = false;
    this.element("queue-error-text").textContent = message;
  }

  private hideError(): void {
    this.element("queue-error").hidden = true;
  }

  private renderMetrics(metrics: Metrics): void {
    const counts = Object.entries(metrics.counts)
      .map(([status, n]) => `${status}: ${n}`)
      .join(", ");
    this.element("queue-metrics").textContent =
      `${metrics.total_submissions} submissions (${counts}); ` +
      `${metrics.pending_review} pending; ` +
      rejectionRateText(metrics.stage1_rejection_rate);
  }

  private renderList(pending: Submission[]): void {
    const empty = this.element("queue-empty");
    const list = this.element("queue-list");
    list.textContent = "";
    empty.hidden = pending.length > 0;
    for (const submission of pending) {
      const item = document.createElement("li");
      item.dataset.submissionId = submission.id;
      item.textContent =
        `${submission.id} - received ${submission.received_at} - ` +
        `${stage1Text(submission)} - ${suggestionText(submission)}`;
      list.appendChild(item);
    }
  }
}
