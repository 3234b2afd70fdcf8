// Edit-control state and the clamping rules that keep every request valid
// before it reaches the network.

export const RANK_MIN = 1;
export const RANK_MAX = 16;
export const MULTIPLIER_MIN = -10;
export const MULTIPLIER_MAX = 10;
export const MULTIPLIER_STEP = 0.1;

export type Direction = 'he2p63' | 'p632he';

export interface EditState {
  direction: Direction;
  j: number;
  k: number;
  m: number;
}

export function clampRank(value: number): number {
  if (!Number.isFinite(value)) return RANK_MIN;
  return Math.min(RANK_MAX, Math.max(RANK_MIN, Math.round(value)));
}

export function clampMultiplier(value: number): number {
  if (!Number.isFinite(value)) return 0;
  const snapped = Math.round(value / MULTIPLIER_STEP) * MULTIPLIER_STEP;
  const clamped = Math.min(MULTIPLIER_MAX, Math.max(MULTIPLIER_MIN, snapped));
  // keep one decimal so 0.30000000000000004 never leaks into requests
  return Math.round(clamped * 10) / 10;
}

export function initialState(): EditState {
  return { direction: 'he2p63', j: RANK_MIN, k: RANK_MAX, m: 0 };
}

/** Set j; k is auto-raised when the lower bound passes it. */
export function withJ(state: EditState, j: number): EditState {
  const jc = clampRank(j);
  return { ...state, j: jc, k: Math.max(jc, state.k) };
}

/** Set k; j is auto-lowered when the upper bound passes it. */
export function withK(state: EditState, k: number): EditState {
  const kc = clampRank(k);
  return { ...state, k: kc, j: Math.min(kc, state.j) };
}

export function withM(state: EditState, m: number): EditState {
  return { ...state, m: clampMultiplier(m) };
}

export function withDirection(state: EditState, direction: Direction): EditState {
  return { ...state, direction };
}
