// Thin typed client for the editing service HTTP API.

import type { Direction } from './state';

export interface TransformRequest {
  image_id: string;
  direction: Direction;
  j: number | null;
  k: number | null;
  m: number | null;
}

export interface TransformResponse {
  png_base64: string;
  ms: number;
  applied: TransformRequest;
}

export interface HealthResponse {
  status: string;
  model_loaded: boolean;
}

export type BasisResponse = Record<string, number[]>;

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

async function parseError(resp: Response): Promise<never> {
  let message = `${resp.status} ${resp.statusText}`;
  try {
    const body = await resp.json();
    const detail = body?.detail;
    if (typeof detail === 'string') message = detail;
    else if (detail?.error) message = detail.error;
  } catch {
    // non-JSON error body; keep the status line
  }
  throw new ApiError(resp.status, message);
}

export class ApiClient {
  constructor(private readonly baseUrl: string = '') {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  async health(): Promise<HealthResponse> {
    const resp = await fetch(this.url('/health'));
    if (!resp.ok) await parseError(resp);
    return resp.json();
  }

  async basis(): Promise<BasisResponse> {
    const resp = await fetch(this.url('/basis'));
    if (!resp.ok) await parseError(resp);
    return resp.json();
  }

  async uploadImage(bytes: ArrayBuffer | Uint8Array | Blob): Promise<string> {
    const resp = await fetch(this.url('/images'), {
      method: 'POST',
      headers: { 'Content-Type': 'application/octet-stream' },
      body: bytes as BodyInit,
    });
    if (!resp.ok) await parseError(resp);
    return (await resp.json()).image_id;
  }

  async transform(req: TransformRequest): Promise<TransformResponse> {
    const resp = await fetch(this.url('/transform'), {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(req),
    });
    if (!resp.ok) await parseError(resp);
    return resp.json();
  }
}
