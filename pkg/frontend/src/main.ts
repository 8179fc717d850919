/** DOM wiring for the labeling app. Everything testable lives in the other
 * modules; this file only connects canvases, buttons, and file inputs to the
 * LabelApp store. Serve the compiled bundle next to a running service, e.g.
 * `terranav serve --checkpoint net.ckpt` with the API base configured below.
 */

import { ApiClient } from "./api.js";
import { LabelApp } from "./app.js";
import { BrushStroke } from "./brush.js";
import { classificationOverlay, costmapImage, pathPolyline } from "./overlay.js";
import type { TerrainClass } from "./types.js";
import { canvasToCell, type Viewport } from "./view.js";

const API_BASE =
  new URLSearchParams(window.location.search).get("api") ??
  "http://127.0.0.1:8321";
const OVERLAY_ALPHA = 0.45;
const COSTMAP_CELL_PX = 4;

const app = new LabelApp(new ApiClient(API_BASE));

const imageCanvas = document.getElementById("image") as HTMLCanvasElement;
const overlayCanvas = document.getElementById("overlay") as HTMLCanvasElement;
const mapCanvas = document.getElementById("costmap") as HTMLCanvasElement;
const statusLine = document.getElementById("status") as HTMLElement;
const historyList = document.getElementById("history") as HTMLElement;
const frameInput = document.getElementById("frame-input") as HTMLInputElement;
const cloudInput = document.getElementById("cloud-input") as HTMLInputElement;
const submitButton = document.getElementById("submit") as HTMLButtonElement;
const retrainButton = document.getElementById("retrain") as HTMLButtonElement;
const classSelect = document.getElementById("brush-class") as HTMLSelectElement;
const radiusInput = document.getElementById("brush-radius") as HTMLInputElement;
const zoomSelect = document.getElementById("zoom") as HTMLSelectElement;

let view: Viewport = { zoom: 1, width: 0, height: 0 };
let frame: ImageBitmap | null = null;
let activeStroke: BrushStroke | null = null;

function render(): void {
  statusLine.textContent = app.statusMessage;
  submitButton.disabled = !app.canSubmit;
  retrainButton.disabled = !app.canRetrain;
  historyList.innerHTML = app.history
    .map(
      (e) =>
        `<li>head v${e.headVersion}: ${e.trainingSetSize} examples, ` +
        `${e.durationSeconds.toFixed(2)}s</li>`,
    )
    .join("");

  if (frame !== null) {
    const ctx = imageCanvas.getContext("2d")!;
    imageCanvas.width = view.width * view.zoom;
    imageCanvas.height = view.height * view.zoom;
    ctx.imageSmoothingEnabled = false;
    ctx.drawImage(frame, 0, 0, imageCanvas.width, imageCanvas.height);
  }

  const labels = app.overlayLabels();
  const octx = overlayCanvas.getContext("2d")!;
  overlayCanvas.width = imageCanvas.width;
  overlayCanvas.height = imageCanvas.height;
  if (labels !== null && app.overlay !== null) {
    const { width, height } = app.overlay;
    const rgba = classificationOverlay(labels, width, height, OVERLAY_ALPHA);
    const off = new OffscreenCanvas(width, height);
    off.getContext("2d")!.putImageData(new ImageData(rgba, width, height), 0, 0);
    octx.imageSmoothingEnabled = false;
    octx.drawImage(off, 0, 0, overlayCanvas.width, overlayCanvas.height);
  }

  const cells = app.costmapLabels();
  if (cells !== null && app.costmap !== null) {
    const { rows, cols } = app.costmap;
    const rgba = costmapImage(cells, rows, cols);
    const off = new OffscreenCanvas(cols, rows);
    off.getContext("2d")!.putImageData(new ImageData(rgba, cols, rows), 0, 0);
    const mctx = mapCanvas.getContext("2d")!;
    mapCanvas.width = cols * COSTMAP_CELL_PX;
    mapCanvas.height = rows * COSTMAP_CELL_PX;
    mctx.imageSmoothingEnabled = false;
    mctx.drawImage(off, 0, 0, mapCanvas.width, mapCanvas.height);
    if (app.plannedPath !== null) {
      const line = pathPolyline(app.plannedPath, COSTMAP_CELL_PX);
      mctx.strokeStyle = "#1040ff";
      mctx.lineWidth = 2;
      mctx.beginPath();
      line.forEach(([x, y], i) => (i === 0 ? mctx.moveTo(x, y) : mctx.lineTo(x, y)));
      mctx.stroke();
    }
  }
}

async function loadFrame(): Promise<void> {
  const file = frameInput.files?.[0];
  if (!file) return;
  const bytes = new Uint8Array(await file.arrayBuffer());
  let binary = "";
  bytes.forEach((b) => (binary += String.fromCharCode(b)));
  const cloud = cloudInput.files?.[0];
  await app.start(btoa(binary), cloud ? await cloud.text() : undefined);
  frame = await createImageBitmap(file);
  view = { zoom: Number(zoomSelect.value), width: frame.width, height: frame.height };
  render();
}

overlayCanvas.addEventListener("pointerdown", (ev) => {
  activeStroke = new BrushStroke(
    classSelect.value as TerrainClass,
    Number(radiusInput.value),
    view,
  );
  app.pendingStrokes.push(activeStroke);
  activeStroke.paintAt(ev.offsetX, ev.offsetY);
  render();
});
overlayCanvas.addEventListener("pointermove", (ev) => {
  if (activeStroke === null) return;
  activeStroke.paintAt(ev.offsetX, ev.offsetY);
});
window.addEventListener("pointerup", () => {
  activeStroke = null;
  render();
});

mapCanvas.addEventListener("click", async (ev) => {
  if (app.costmap === null) return;
  const goal = canvasToCell(
    COSTMAP_CELL_PX,
    app.costmap.rows,
    app.costmap.cols,
    ev.offsetX,
    ev.offsetY,
  );
  if (goal !== null) {
    await app.planTo(goal);
    render();
  }
});

frameInput.addEventListener("change", () => void loadFrame());
zoomSelect.addEventListener("change", () => {
  view = { ...view, zoom: Number(zoomSelect.value) };
  render();
});
submitButton.addEventListener("click", async () => {
  await app.submitStrokes();
  render();
});
retrainButton.addEventListener("click", async () => {
  render(); // disable the button while in flight
  await app.retrainAndRefresh();
  try {
    await app.refreshCostmap();
  } catch {
    // frames without a point cloud have no cost map; leave the panel empty
  }
  render();
});
