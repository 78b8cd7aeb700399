import { ApiClient, ApiError } from "./api.js";
import { leaseCountdown, stage1Text, suggestionText } from "./format.js";
import type { FinalLabel, Submission } from "./types.js";

export const KEY_BINDINGS: Record<string, FinalLabel> = {
  s: "SAFE",
  u: "UNSAFE",
  x: "UNUSABLE",
};

const IGNORED_TAGS = new Set(["INPUT", "TEXTAREA", "SELECT"]);

export interface ReviewStationOptions {
  now?: () => Date;
  tickMs?: number;
}

/**
 * Claim-and-decide workstation.  One item at a time: claim, show the
 * photo full-size with the model's suggestion clearly marked as a
 * suggestion, take a single keypress (S/U/X), post it, move on.
 *
 * "Saved" is only ever shown after the service accepted the decision;
 * a conflict or lost lease abandons the item instead.
 */
export class ReviewStation {
  private readonly root: HTMLElement;
  private readonly client: ApiClient;
  private readonly now: () => Date;
  private readonly tickMs: number;
  private current: Submission | null = null;
  private leaseExpiresAt: string | null = null;
  private posting = false;
  private ticker: ReturnType<typeof setInterval> | null = null;
  private readonly keyListener: (event: KeyboardEvent) => void;

  constructor(
    root: HTMLElement,
    client: ApiClient,
    options?: ReviewStationOptions,
  ) {
    this.root = root;
    this.client = client;
    this.now = options?.now ?? (() => new Date());
    this.tickMs = options?.tickMs ?? 1000;
    this.root.innerHTML = `
      <div data-testid="review-notice" class="notice" hidden></div>
      <p data-testid="review-saved" class="saved" hidden></p>
      <div data-testid="review-idle">
        <p>Nothing claimed.</p>
        <button type="button" data-testid="claim-button">Claim next</button>
      </div>
      <div data-testid="review-item" hidden>
        <p data-testid="review-id"></p>
        <img data-testid="review-image" class="full-size" alt="submitted cargo photo" />
        <p data-testid="review-stage1"></p>
        <p data-testid="review-suggestion" class="suggestion">
          <span data-testid="review-suggestion-text"></span>
          <em> (suggestion only, not a decision)</em>
        </p>
        <p data-testid="review-lease"></p>
        <p>Keys: S = SAFE, U = UNSAFE, X = UNUSABLE</p>
      </div>
    `;
    this.element("claim-button").addEventListener("click", () => {
      this.hideNotice();
      void this.claimNext();
    });
    this.keyListener = (event) => {
      this.handleKey(event);
    };
  }

  attach(target: Document | HTMLElement = document): void {
    target.addEventListener("keydown", this.keyListener as EventListener);
    if (this.tickMs > 0) {
      this.ticker = setInterval(() => this.tick(), this.tickMs);
    }
  }

  detach(target: Document | HTMLElement = document): void {
    target.removeEventListener("keydown", this.keyListener as EventListener);
    if (this.ticker !== null) {
      clearInterval(this.ticker);
      this.ticker = null;
    }
  }

  get claimed(): Submission | null {
    return this.current;
  }

  handleKey(event: KeyboardEvent): void {
    if (event.ctrlKey || event.metaKey || event.altKey) return;
    const target = event.target as HTMLElement | null;
    if (target && (IGNORED_TAGS.has(target.tagName) || target.isContentEditable)) {
      return;
    }
    const label = KEY_BINDINGS[event.key.toLowerCase()];
    if (label === undefined) return;
    void this.decide(label);
  }

  async claimNext(): Promise<void> {
    let claimed;
    try {
      claimed = await this.client.claimNext();
    } catch (err) {
      this.showNotice(err instanceof Error ? err.message : String(err));
      return;
    }
    if (claimed.submission === null) {
      this.current = null;
      this.leaseExpiresAt = null;
      this.render();
      this.showNotice("Queue is empty; nothing to claim.");
      return;
    }
    this.current = claimed.submission;
    this.leaseExpiresAt = claimed.lease_expires_at;
    this.render();
  }

  /** Posts exactly `label`; never rewrites it from the suggestion. */
  async decide(label: FinalLabel): Promise<void> {
    if (this.current === null || this.posting) return;
    const id = this.current.id;
    this.posting = true;
    try {
      await this.client.decide(id, label);
    } catch (err) {
      if (err instanceof ApiError && err.isConflict) {
        // claim lost to another operator or expired server-side
        this.showNotice(`Claim on ${id} lost (${err.message}); moving on.`);
        this.current = null;
        this.leaseExpiresAt = null;
        this.render();
        await this.claimNext();
      } else {
        this.showNotice(err instanceof Error ? err.message : String(err));
      }
      return;
    } finally {
      this.posting = false;
    }
    this.hideNotice();
    this.showSaved(`Saved ${label} for ${id}.`);
    this.current = null;
    this.leaseExpiresAt = null;
    this.render();
    await this.claimNext();
  }

  /** Local countdown; a lapsed lease drops the item back to idle. */
  tick(): void {
    if (this.current === null || this.leaseExpiresAt === null) return;
    const { text, expired } = leaseCountdown(this.leaseExpiresAt, this.now());
    if (expired) {
      this.showNotice(
        `Lease on ${this.current.id} expired before a decision was posted.`,
      );
      this.current = null;
      this.leaseExpiresAt = null;
      this.render();
      return;
    }
    this.element("review-lease").textContent = text;
  }

  private element(testId: string): HTMLElement {
    const el = this.root.querySelector<HTMLElement>(`[data-testid="${testId}"]`);
    if (!el) throw new Error(`missing element ${testId}`);
    return el;
  }

  private showNotice(message: string): void {
    const notice = this.element("review-notice");
    notice.hidden = false;
    notice.textContent = message;
  }

  private hideNotice(): void {
    this.element("review-notice").hidden = true;
  }

  private showSaved(message: string): void {
    const saved = this.element("review-saved");
    saved.hidden = false;
    saved.textContent = message;
  }

  private render(): void {
    const idle = this.element("review-idle");
    const item = this.element("review-item");
    if (this.current === null) {
      idle.hidden = false;
      item.hidden = true;
      return;
    }
    idle.hidden = true;
    item.hidden = false;
    this.element("review-id").textContent = this.current.id;
    const image = this.element("review-image") as HTMLImageElement;
    image.src = this.client.imageUrl(this.current.id);
    this.element("review-stage1").textContent = stage1Text(this.current);
    this.element("review-suggestion-text").textContent = suggestionText(
      this.current,
    );
    if (this.leaseExpiresAt !== null) {
      const { text } = leaseCountdown(this.leaseExpiresAt, this.now());
      this.element("review-lease").textContent = text;
    } else {
      this.element("review-lease").textContent = "";
    }
  }
}
