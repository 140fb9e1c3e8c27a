/** Linear axis scales with 1-2-5 tick placement. */

export interface LinearScale {
  readonly domainMin: number;
  readonly domainMax: number;
  readonly rangeMin: number;
  readonly rangeMax: number;
  map(value: number): number;
}

/**
 * Map [d0, d1] onto pixel range [r0, r1].  A degenerate domain is widened
 * symmetrically so constant series still land mid-panel instead of dividing
 * by zero.
 */
export function linearScale(d0: number, d1: number, r0: number, r1: number): LinearScale {
  let lo = d0;
  let hi = d1;
  if (lo === hi) {
    const pad = lo === 0 ? 1 : Math.abs(lo) * 0.1;
    lo -= pad;
    hi += pad;
  }
  const k = (r1 - r0) / (hi - lo);
  return {
    domainMin: lo,
    domainMax: hi,
    rangeMin: r0,
    rangeMax: r1,
    map: (value: number) => r0 + (value - lo) * k,
  };
}

/** Extend [lo, hi] by the given fraction on each side. */
export function padDomain(lo: number, hi: number, fraction: number): [number, number] {
  if (lo === hi) return [lo, hi];
  const pad = (hi - lo) * fraction;
  return [lo - pad, hi + pad];
}

/** Largest 1/2/5-style step not exceeding the raw spacing for ~count ticks. */
function tickStep(lo: number, hi: number, count: number): number {
  const raw = (hi - lo) / Math.max(1, count);
  const mag = Math.pow(10, Math.floor(Math.log10(raw)));
  const norm = raw / mag;
  if (norm >= 5) return 5 * mag;
  if (norm >= 2) return 2 * mag;
  return mag;
}

/** Tick positions inside [lo, hi] at nice round values. */
export function niceTicks(lo: number, hi: number, count = 4): number[] {
  if (!(hi > lo)) return [lo];
  const step = tickStep(lo, hi, count);
  const first = Math.ceil(lo / step) * step;
  const ticks: number[] = [];
  for (let v = first; v <= hi + step * 1e-9; v += step) {
    // Snap to the step grid to avoid 0.30000000000000004-style labels.
    ticks.push(Math.abs(v) < step * 1e-9 ? 0 : v);
  }
  return ticks;
}

/** Format a tick value with just enough digits for the given step size. */
export function formatTick(value: number, step: number): string {
  if (value === 0) return "0";
  const abs = Math.abs(value);
  if (abs >= 1e5 || abs < 1e-4) {
    return value.toExponential(1).replace("e+", "e");
  }
  const decimals = Math.max(0, -Math.floor(Math.log10(step) + 1e-9));
  return value.toFixed(Math.min(decimals, 10));
}
