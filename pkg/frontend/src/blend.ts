/**
 * Pixel math shared by the canvas view and the test suite.
 *
 * The server publishes two endpoint images per run — the model-inverted
 * estimate (`bm`) and the refinement output (`refined`) — and leaves the
 * final blend to the client, because it is pointwise linear in the blend
 * constant. Recomputing it here makes slider interaction instantaneous
 * and free of round trips.
 */

export interface PixelBuffer {
  width: number;
  height: number;
  /** RGBA, row-major, four bytes per pixel; alpha stays 255 throughout. */
  data: Uint8ClampedArray<ArrayBuffer>;
}

export function emptyBuffer(width: number, height: number): PixelBuffer {
  if (!Number.isInteger(width) || !Number.isInteger(height) || width <= 0 || height <= 0) {
    throw new Error(`invalid buffer dims ${width}x${height}`);
  }
  const data = new Uint8ClampedArray(width * height * 4);
  for (let i = 3; i < data.length; i += 4) {
    data[i] = 255;
  }
  return { width, height, data };
}

export function sameDims(a: PixelBuffer, b: PixelBuffer): boolean {
  return a.width === b.width && a.height === b.height;
}

export function assertSameDims(a: PixelBuffer, b: PixelBuffer): void {
  if (!sameDims(a, b)) {
    throw new Error(
      `buffer dims differ: ${a.width}x${a.height} vs ${b.width}x${b.height}`,
    );
  }
}

export function clamp01(x: number): number {
  if (Number.isNaN(x)) {
    return 0;
  }
  return Math.min(1, Math.max(0, x));
}

/**
 * Blend the two endpoint images at one constant:
 *
 *   out = floor(alpha * bm + (1 - alpha) * refined + 0.5)   per RGB channel
 *
 * i.e. half-up rounding of the pointwise convex combination, which is the
 * same quantization the server applies when it publishes 8-bit images.
 * alpha is clamped to [0, 1]; at the endpoints the result is byte-identical
 * to the corresponding source. Pass `out` to reuse an allocation.
 */
export function blendPixels(
  bm: PixelBuffer,
  refined: PixelBuffer,
  alpha: number,
  out?: PixelBuffer,
): PixelBuffer {
  assertSameDims(bm, refined);
  const a = clamp01(alpha);
  const b = 1 - a;
  const dst = out !== undefined && sameDims(out, bm) ? out : emptyBuffer(bm.width, bm.height);
  const src1 = bm.data;
  const src0 = refined.data;
  const d = dst.data;
  for (let i = 0; i < d.length; i += 4) {
    d[i] = Math.floor(a * src1[i] + b * src0[i] + 0.5);
    d[i + 1] = Math.floor(a * src1[i + 1] + b * src0[i + 1] + 0.5);
    d[i + 2] = Math.floor(a * src1[i + 2] + b * src0[i + 2] + 0.5);
    d[i + 3] = 255;
  }
  return dst;
}
