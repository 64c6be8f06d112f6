/**
 * Canvas painting for the three compare modes.
 *
 * blend         the current blend alone
 * side-by-side  input on the left, blend on the right
 * wipe          one canvas split at the cursor: input left, blend right
 */

import { PixelBuffer } from "./blend.js";
import { ViewerState } from "./state.js";

function toImageData(buf: PixelBuffer): ImageData {
  return new ImageData(buf.data, buf.width, buf.height);
}

function resize(canvas: HTMLCanvasElement, width: number, height: number): void {
  if (canvas.width !== width) {
    canvas.width = width;
  }
  if (canvas.height !== height) {
    canvas.height = height;
  }
}

/** Paint the state onto the canvas; wipeFraction in [0, 1] is the split. */
export function render(state: ViewerState, canvas: HTMLCanvasElement, wipeFraction = 0.5): void {
  const blend = state.blend;
  const input = state.input;
  if (!blend || !input) {
    return;
  }
  const ctx = canvas.getContext("2d");
  if (!ctx) {
    return;
  }
  const { width, height } = blend;

  if (state.mode === "side-by-side") {
    const gap = 2;
    resize(canvas, width * 2 + gap, height);
    ctx.fillStyle = "#14161a";
    ctx.fillRect(width, 0, gap, height);
    ctx.putImageData(toImageData(input), 0, 0);
    ctx.putImageData(toImageData(blend), width + gap, 0);
    return;
  }

  resize(canvas, width, height);
  if (state.mode === "wipe") {
    const split = Math.round(Math.min(1, Math.max(0, wipeFraction)) * width);
    ctx.putImageData(toImageData(input), 0, 0);
    if (split < width) {
      ctx.putImageData(toImageData(blend), 0, 0, split, 0, width - split, height);
    }
    ctx.fillStyle = "rgba(255, 255, 255, 0.85)";
    ctx.fillRect(Math.max(0, split - 1), 0, 2, height);
    return;
  }

  ctx.putImageData(toImageData(blend), 0, 0);
}
