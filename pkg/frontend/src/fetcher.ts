/**
 * Debounced render fetcher with stale-response discard.
 *
 * Interaction fires many view changes per second; only the settled one
 * should hit the server. Each accepted request gets a monotone id and a
 * response is applied only if no newer request has been applied, so a
 * slow old frame can never overwrite a fresh one.
 *
 * Failures raise a banner through `onBanner` but keep the last good
 * frame on screen; the next successful frame clears the banner.
 */

export type Frame =
  | { kind: "image"; bytes: ArrayBuffer; url: string }
  | { kind: "black" };

export interface RenderResponse {
  ok: boolean;
  status: number;
  arrayBuffer(): Promise<ArrayBuffer>;
}

export type FetchLike = (url: string) => Promise<RenderResponse>;

export interface FetcherOptions {
  fetchFn: FetchLike;
  onFrame: (frame: Frame) => void;
  onBanner: (message: string | null) => void;
  debounceMs?: number;
}

export class RenderFetcher {
  private readonly fetchFn: FetchLike;
  private readonly onFrame: (frame: Frame) => void;
  private readonly onBanner: (message: string | null) => void;
  private readonly debounceMs: number;

  private timer: ReturnType<typeof setTimeout> | null = null;
  private nextId = 0;
  private appliedId = 0;
  private lastGood: Frame | null = null;
  fetchCount = 0;

  constructor(options: FetcherOptions) {
    this.fetchFn = options.fetchFn;
    this.onFrame = options.onFrame;
    this.onBanner = options.onBanner;
    this.debounceMs = options.debounceMs ?? 100;
  }

  get lastGoodFrame(): Frame | null {
    return this.lastGood;
  }

  /**
   * Schedule a render. With every channel off the result is known to be
   * black, so the frame is produced locally and nothing is fetched; the
   * id still advances, invalidating any response already in flight.
   */
  request(url: string, allOff = false): void {
    if (this.timer !== null) clearTimeout(this.timer);
    if (allOff) {
      this.timer = null;
      this.appliedId = ++this.nextId;
      this.lastGood = { kind: "black" };
      this.onBanner(null);
      this.onFrame(this.lastGood);
      return;
    }
    this.timer = setTimeout(() => {
      this.timer = null;
      void this.issue(url);
    }, this.debounceMs);
  }

  cancel(): void {
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = null;
  }

  private async issue(url: string): Promise<void> {
    const id = ++this.nextId;
    this.fetchCount += 1;
    let frame: Frame;
    try {
      const response = await this.fetchFn(url);
      if (!response.ok) throw new Error(`render failed with status ${response.status}`);
      frame = { kind: "image", bytes: await response.arrayBuffer(), url };
    } catch (err) {
      if (id > this.appliedId) {
        this.onBanner(err instanceof Error ? err.message : String(err));
      }
      return;
    }
    if (id <= this.appliedId) return; // a newer frame already landed
    this.appliedId = id;
    this.lastGood = frame;
    this.onBanner(null);
    this.onFrame(frame);
  }
}
