// Pure view computations, kept out of the DOM layer so they are testable.

export interface Bar {
  /** Height as a percentage of the tallest bar, floored for visibility. */
  heightPct: number;
  label: string;
}

/** One bar per significance, proportional to the top value, order preserved. */
export function barHeights(significances: number[]): Bar[] {
  const top = significances[0] || 1;
  return significances.map((sigma, index) => ({
    heightPct: Math.max(4, (sigma / top) * 100),
    label: `rank ${index + 1}: ${sigma.toFixed(3)}`,
  }));
}
