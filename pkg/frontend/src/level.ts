/**
 * Mip-level selection, mirroring the server's rule: clamp the display
 * scale, push it out of any excluded band in the direction of travel,
 * then pick the largest advertised level whose reduction factor does
 * not exceed 1/scale. The advertised levels come from the slide header
 * (`mip_levels`).
 */

export interface ZoomPolicy {
  levels: number[];
  /** Open (lo, hi) scale intervals the UI must not settle inside. */
  excluded?: [number, number][];
  minScale?: number;
  maxScale?: number;
}

export function snapScale(policy: ZoomPolicy, scale: number, direction = 0): number {
  if (!(scale > 0)) throw new Error("scale must be positive");
  const lo = policy.minScale ?? 1e-6;
  const hi = policy.maxScale ?? 64.0;
  let s = Math.min(Math.max(scale, lo), hi);
  for (const [a, b] of policy.excluded ?? []) {
    if (a < s && s < b) {
      if (direction > 0) s = b;
      else if (direction < 0) s = a;
      else s = s - a <= b - s ? a : b;
      break;
    }
  }
  return Math.min(Math.max(s, lo), hi);
}

export function chooseLevel(policy: ZoomPolicy, scale: number, direction = 0): number {
  const s = snapScale(policy, scale, direction);
  const fits = policy.levels.filter((lvl) => lvl <= 1.0 / s);
  return fits.length > 0 ? Math.max(...fits) : 1;
}
