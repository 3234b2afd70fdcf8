// Rate-limited, last-write-wins transform pipeline.
//
// Slider sweeps fire far faster than transforms should be requested; the
// scheduler coalesces them to at most one in-flight request per minimum
// interval and guarantees that (a) the final slider position is always sent
// (trailing edge) and (b) only the response to the most recently issued
// request ever reaches the preview: every send gets a sequence number and
// stale arrivals are dropped.

import type { TransformRequest, TransformResponse } from './api';

export type SendFn = (req: TransformRequest) => Promise<TransformResponse>;

export interface SchedulerCallbacks {
  onResult: (resp: TransformResponse, seq: number) => void;
  onError: (err: unknown, seq: number) => void;
}

export class TransformScheduler {
  private pending: TransformRequest | null = null;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private lastSendTime = -Infinity;
  private lastSentSeq = 0;
  private inFlight = 0;
  private idleResolvers: (() => void)[] = [];

  constructor(
    private readonly send: SendFn,
    private readonly callbacks: SchedulerCallbacks,
    readonly minIntervalMs = 200, // <= 5 requests per second
  ) {}

  /** Queue the latest desired request; earlier queued ones are superseded. */
  request(req: TransformRequest): void {
    this.pending = req;
    this.schedule();
  }

  private schedule(): void {
    if (this.timer !== null || this.pending === null) return;
    const wait = Math.max(0, this.lastSendTime + this.minIntervalMs - Date.now());
    this.timer = setTimeout(() => {
      this.timer = null;
      this.fire();
    }, wait);
  }

  private fire(): void {
    if (this.pending === null) return;
    const req = this.pending;
    this.pending = null;
    this.lastSendTime = Date.now();
    const seq = ++this.lastSentSeq;
    this.inFlight++;
    this.send(req)
      .then((resp) => {
        if (seq === this.lastSentSeq) this.callbacks.onResult(resp, seq);
      })
      .catch((err) => {
        if (seq === this.lastSentSeq) this.callbacks.onError(err, seq);
      })
      .finally(() => {
        this.inFlight--;
        this.schedule(); // trailing edge: send whatever arrived meanwhile
        this.notifyIfIdle();
      });
  }

  get busy(): boolean {
    return this.pending !== null || this.timer !== null || this.inFlight > 0;
  }

  private notifyIfIdle(): void {
    if (!this.busy) {
      const resolvers = this.idleResolvers;
      this.idleResolvers = [];
      resolvers.forEach((resolve) => resolve());
    }
  }

  /** Resolves once nothing is queued or in flight (test helper). */
  settled(): Promise<void> {
    if (!this.busy) return Promise.resolve();
    return new Promise((resolve) => this.idleResolvers.push(resolve));
  }
}
