/**
 * Viewer state and the upload/load flows that feed it.
 *
 * The state is deliberately free of DOM types: it holds the decoded pixel
 * buffers of the current run, the blend constant, the compare mode, and a
 * cached blend that is recomputed locally whenever the constant or the run
 * changes. Commits are atomic — a run replaces the previous one only after
 * every image has been fetched and decoded, so any failure leaves the
 * previous state intact.
 */

import { ApiClient, ResultName } from "./api.js";
import { assertSameDims, blendPixels, clamp01, PixelBuffer } from "./blend.js";

export type CompareMode = "blend" | "side-by-side" | "wipe";

/** Slider default; matches the constant the refinement was trained against. */
export const DEFAULT_ALPHA = 0.9;

/** Preset buttons offered by the UI. */
export const PRESET_ALPHAS: readonly number[] = [1.0, 0.6, 0.3, 0.0];

const PNG_MAGIC = [0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a];

export function isPng(bytes: Uint8Array): boolean {
  return bytes.length >= PNG_MAGIC.length && PNG_MAGIC.every((b, i) => bytes[i] === b);
}

export interface RunImages {
  input: PixelBuffer;
  bm: PixelBuffer;
  refined: PixelBuffer;
}

/** Decodes an encoded PNG into raw RGBA; the browser one rides on canvas. */
export type PngDecoder = (png: Blob) => Promise<PixelBuffer>;

export class ViewerState {
  private currentRunId: string | null = null;
  private currentAlpha = DEFAULT_ALPHA;
  private currentMode: CompareMode = "blend";
  private images: RunImages | null = null;
  private blended: PixelBuffer | null = null;

  get runId(): string | null {
    return this.currentRunId;
  }

  get alpha(): number {
    return this.currentAlpha;
  }

  get mode(): CompareMode {
    return this.currentMode;
  }

  get loaded(): boolean {
    return this.images !== null;
  }

  get input(): PixelBuffer | null {
    return this.images ? this.images.input : null;
  }

  get bm(): PixelBuffer | null {
    return this.images ? this.images.bm : null;
  }

  get refined(): PixelBuffer | null {
    return this.images ? this.images.refined : null;
  }

  /** The current blend, or null before the first run is loaded. */
  get blend(): PixelBuffer | null {
    return this.blended;
  }

  /** Clamp to [0, 1] and recompute the blend buffer; pure local math. */
  setAlpha(alpha: number): void {
    const a = clamp01(alpha);
    if (a === this.currentAlpha) {
      return;
    }
    this.currentAlpha = a;
    this.refresh();
  }

  setMode(mode: CompareMode): void {
    this.currentMode = mode;
  }

  /** Atomically replace the loaded run; buffers must agree in size. */
  commitRun(runId: string, images: RunImages): void {
    assertSameDims(images.input, images.bm);
    assertSameDims(images.bm, images.refined);
    this.currentRunId = runId;
    this.images = images;
    this.blended = null; // dims may have changed; drop the reused allocation
    this.refresh();
  }

  private refresh(): void {
    if (!this.images) {
      return;
    }
    this.blended = blendPixels(
      this.images.bm,
      this.images.refined,
      this.currentAlpha,
      this.blended ?? undefined,
    );
  }
}

async function fetchRunImages(api: ApiClient, runId: string, decode: PngDecoder): Promise<RunImages> {
  const names: ResultName[] = ["input", "bm", "refined"];
  const [input, bm, refined] = await Promise.all(
    names.map((name) => api.fetchResult(runId, name).then(decode)),
  );
  return { input, bm, refined };
}

/**
 * Upload a rainy PNG and load its results. Rejects non-PNG bytes before
 * any request is made; on any failure the state is left untouched.
 * Resolves to the new run id.
 */
export async function uploadAndLoad(
  state: ViewerState,
  api: ApiClient,
  png: ArrayBuffer,
  decode: PngDecoder,
): Promise<string> {
  if (!isPng(new Uint8Array(png))) {
    throw new Error("not a PNG file");
  }
  const runId = await api.upload(png);
  state.commitRun(runId, await fetchRunImages(api, runId, decode));
  return runId;
}

/** Load a run that already exists on the server (from the runs list). */
export async function loadExistingRun(
  state: ViewerState,
  api: ApiClient,
  runId: string,
  decode: PngDecoder,
): Promise<void> {
  state.commitRun(runId, await fetchRunImages(api, runId, decode));
}
