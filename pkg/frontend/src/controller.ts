// Headless UI core: owns the edit state, issues transform requests through
// the scheduler, and exposes the current previews. The DOM layer renders
// whatever lives here and nothing else, which keeps the request invariants
// testable without a browser.

import type { TransformRequest, TransformResponse } from './api';
import { TransformScheduler } from './scheduler';
import {
  Direction,
  EditState,
  initialState,
  withDirection,
  withJ,
  withK,
  withM,
} from './state';

/** The slice of the service API the controller needs (structurally typed so
 * tests can substitute fakes). */
export interface TransformApi {
  uploadImage(bytes: ArrayBuffer | Uint8Array | Blob): Promise<string>;
  transform(req: TransformRequest): Promise<TransformResponse>;
}

export interface ControllerEvents {
  onPreview?: (pngBase64: string) => void;
  onBaseline?: (pngBase64: string) => void;
  onError?: (message: string) => void;
}

export class UiController {
  state: EditState = initialState();
  imageId: string | null = null;
  /** Most recent preview accepted from the service (base64 PNG). */
  preview: string | null = null;
  /** Unedited transform of the current image in the current direction. */
  baseline: string | null = null;
  lastError: string | null = null;

  private scheduler: TransformScheduler;

  constructor(
    private readonly api: TransformApi,
    private readonly events: ControllerEvents = {},
    minIntervalMs = 200,
  ) {
    this.scheduler = new TransformScheduler(
      (req) => this.api.transform(req),
      {
        onResult: (resp) => this.acceptPreview(resp),
        onError: (err) => this.acceptError(err),
      },
      minIntervalMs,
    );
  }

  private acceptPreview(resp: TransformResponse): void {
    this.preview = resp.png_base64;
    this.lastError = null;
    this.events.onPreview?.(resp.png_base64);
  }

  private acceptError(err: unknown): void {
    // previous preview is retained; only the error surface updates
    this.lastError = err instanceof Error ? err.message : String(err);
    this.events.onError?.(this.lastError);
  }

  /** Upload a tile, then fetch its unedited transform as the baseline. */
  async loadImage(bytes: ArrayBuffer | Uint8Array | Blob): Promise<void> {
    this.imageId = await this.api.uploadImage(bytes);
    await this.refreshBaseline();
    this.requestTransform();
  }

  async refreshBaseline(): Promise<void> {
    if (this.imageId === null) return;
    const resp = await this.api.transform({
      image_id: this.imageId,
      direction: this.state.direction,
      j: null,
      k: null,
      m: null,
    });
    this.baseline = resp.png_base64;
    this.events.onBaseline?.(resp.png_base64);
  }

  /** Push the current state through the rate-limited pipeline. */
  requestTransform(): void {
    if (this.imageId === null) return;
    this.scheduler.request({
      image_id: this.imageId,
      direction: this.state.direction,
      j: this.state.j,
      k: this.state.k,
      m: this.state.m,
    });
  }

  setJ(value: number): void {
    this.state = withJ(this.state, value);
    this.requestTransform();
  }

  setK(value: number): void {
    this.state = withK(this.state, value);
    this.requestTransform();
  }

  setM(value: number): void {
    this.state = withM(this.state, value);
    this.requestTransform();
  }

  async setDirection(direction: Direction): Promise<void> {
    this.state = withDirection(this.state, direction);
    if (this.imageId !== null) {
      await this.refreshBaseline();
      this.requestTransform();
    }
  }

  /** Resolves when no transform is queued or in flight. */
  settled(): Promise<void> {
    return this.scheduler.settled();
  }
}
