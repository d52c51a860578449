/** Hole indicator: fraction of pixels with accumulated alpha below 0.5. */

export const HOLE_ALPHA_THRESHOLD = 0.5;

export function holeFraction(alpha: ArrayLike<number>, threshold = HOLE_ALPHA_THRESHOLD): number {
  let holes = 0;
  for (let i = 0; i < alpha.length; i++) {
    if (alpha[i] < threshold) holes++;
  }
  return alpha.length ? holes / alpha.length : 0;
}

/** RGBA8 framebuffer variant (alpha in [0,255]). */
export function holeFractionRgba8(pixels: Uint8Array, threshold = HOLE_ALPHA_THRESHOLD): number {
  let holes = 0;
  const n = pixels.length / 4;
  const cut = threshold * 255;
  for (let i = 0; i < n; i++) {
    if (pixels[i * 4 + 3] < cut) holes++;
  }
  return n ? holes / n : 0;
}
