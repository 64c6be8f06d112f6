/**
 * Page bootstrap: wires the upload control, the blend slider and presets,
 * the compare-mode switch and the runs list to the viewer state, and keeps
 * the footer's request counter honest about what costs a round trip.
 */

import { ApiClient } from "./api.js";
import { PixelBuffer } from "./blend.js";
import {
  DEFAULT_ALPHA,
  PRESET_ALPHAS,
  CompareMode,
  ViewerState,
  loadExistingRun,
  uploadAndLoad,
} from "./state.js";
import { render } from "./render.js";

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) {
    throw new Error(`missing element #${id}`);
  }
  return el as T;
}

async function decodePng(blob: Blob): Promise<PixelBuffer> {
  const bitmap = await createImageBitmap(blob);
  try {
    const off = document.createElement("canvas");
    off.width = bitmap.width;
    off.height = bitmap.height;
    const ctx = off.getContext("2d");
    if (!ctx) {
      throw new Error("canvas 2d context unavailable");
    }
    ctx.drawImage(bitmap, 0, 0);
    const img = ctx.getImageData(0, 0, off.width, off.height);
    return { width: img.width, height: img.height, data: img.data };
  } finally {
    bitmap.close();
  }
}

class ViewerPage {
  private readonly api = new ApiClient();
  private readonly state = new ViewerState();

  private readonly canvas = byId<HTMLCanvasElement>("view");
  private readonly slider = byId<HTMLInputElement>("alpha-slider");
  private readonly readout = byId<HTMLSpanElement>("alpha-readout");
  private readonly banner = byId<HTMLDivElement>("error-banner");
  private readonly runsList = byId<HTMLUListElement>("runs");
  private readonly requestReadout = byId<HTMLSpanElement>("request-count");
  private readonly placeholder = byId<HTMLParagraphElement>("placeholder");

  private wipeFraction = 0.5;
  private framePending = false;

  constructor() {
    this.slider.value = String(DEFAULT_ALPHA);
    this.updateReadout();

    this.slider.addEventListener("input", () => {
      // pure client math: the readout updates in the same event tick and
      // the repaint coalesces into the next animation frame
      this.state.setAlpha(Number(this.slider.value));
      this.updateReadout();
      this.schedulePaint();
    });

    const presets = byId<HTMLDivElement>("presets");
    for (const alpha of PRESET_ALPHAS) {
      const button = document.createElement("button");
      button.textContent = `α = ${alpha.toFixed(1)}`;
      button.addEventListener("click", () => {
        this.state.setAlpha(alpha);
        this.slider.value = String(alpha);
        this.updateReadout();
        this.schedulePaint();
      });
      presets.appendChild(button);
    }

    for (const mode of ["blend", "side-by-side", "wipe"] as CompareMode[]) {
      byId<HTMLInputElement>(`mode-${mode}`).addEventListener("change", () => {
        this.state.setMode(mode);
        this.schedulePaint();
      });
    }

    this.canvas.addEventListener("pointermove", (ev) => {
      if (this.state.mode !== "wipe") {
        return;
      }
      const rect = this.canvas.getBoundingClientRect();
      this.wipeFraction = rect.width > 0 ? (ev.clientX - rect.left) / rect.width : 0.5;
      this.schedulePaint();
    });

    const fileInput = byId<HTMLInputElement>("file-input");
    byId<HTMLButtonElement>("upload-button").addEventListener("click", () => fileInput.click());
    fileInput.addEventListener("change", () => {
      const file = fileInput.files && fileInput.files[0];
      if (file) {
        void this.upload(file);
      }
      fileInput.value = "";
    });

    void this.refreshRuns();
  }

  private updateReadout(): void {
    this.readout.textContent = this.state.alpha.toFixed(2);
    this.requestReadout.textContent = String(this.api.requestCount);
  }

  private schedulePaint(): void {
    if (this.framePending) {
      return;
    }
    this.framePending = true;
    requestAnimationFrame(() => {
      this.framePending = false;
      render(this.state, this.canvas, this.wipeFraction);
      this.requestReadout.textContent = String(this.api.requestCount);
      this.placeholder.style.display = this.state.loaded ? "none" : "";
    });
  }

  private showError(message: string): void {
    this.banner.textContent = message;
    this.banner.style.display = "";
  }

  private clearError(): void {
    this.banner.style.display = "none";
  }

  private async upload(file: File): Promise<void> {
    try {
      this.clearError();
      const bytes = await file.arrayBuffer();
      await uploadAndLoad(this.state, this.api, bytes, decodePng);
      await this.refreshRuns();
      this.schedulePaint();
    } catch (err) {
      this.showError(err instanceof Error ? err.message : String(err));
      this.updateReadout();
    }
  }

  private async loadRun(runId: string): Promise<void> {
    try {
      this.clearError();
      await loadExistingRun(this.state, this.api, runId, decodePng);
      this.schedulePaint();
    } catch (err) {
      this.showError(err instanceof Error ? err.message : String(err));
    }
  }

  private async refreshRuns(): Promise<void> {
    try {
      const runs = await this.api.listRuns();
      this.runsList.textContent = "";
      for (const runId of runs.slice().reverse()) {
        const item = document.createElement("li");
        const link = document.createElement("button");
        link.textContent = runId;
        link.addEventListener("click", () => void this.loadRun(runId));
        item.appendChild(link);
        this.runsList.appendChild(item);
      }
    } catch {
      // the runs list is a convenience; uploads still work without it
    } finally {
      this.updateReadout();
    }
  }
}

window.addEventListener("DOMContentLoaded", () => {
  new ViewerPage();
});
