/** Rendering helpers: run-length decoding and RGBA overlay buffers.
 *
 * Color convention: red = obstacle, green = drivable; unknown is transparent
 * in the classification overlay and neutral gray in the cost-map render.
 */

import { DRIVABLE, OBSTACLE, type PlannedPath, type Rle } from "./types.js";

export const OBSTACLE_RGB: [number, number, number] = [200, 30, 30];
export const DRIVABLE_RGB: [number, number, number] = [30, 180, 30];
export const UNKNOWN_RGB: [number, number, number] = [128, 128, 128];

/** Expand row-major [value, count] runs into a dense class array. */
export function decodeRle(rle: Rle, expectedLength: number): Int8Array {
  const out = new Int8Array(expectedLength);
  let at = 0;
  for (const [value, count] of rle) {
    if (count < 0 || at + count > expectedLength) {
      throw new Error(
        `run-length data overflows ${expectedLength} cells at offset ${at}`,
      );
    }
    out.fill(value, at, at + count);
    at += count;
  }
  if (at !== expectedLength) {
    throw new Error(`run-length data covers ${at} of ${expectedLength} cells`);
  }
  return out;
}

/** RGBA classification overlay: green drivable / red obstacle at the given
 * alpha, everything else fully transparent. Same dimensions as the image. */
export function classificationOverlay(
  labels: Int8Array,
  width: number,
  height: number,
  alpha: number,
): Uint8ClampedArray<ArrayBuffer> {
  if (labels.length !== width * height) {
    throw new Error(
      `label buffer length ${labels.length} != ${width}x${height}`,
    );
  }
  const a = Math.round(Math.min(1, Math.max(0, alpha)) * 255);
  const rgba = new Uint8ClampedArray(width * height * 4);
  for (let i = 0; i < labels.length; i++) {
    const color =
      labels[i] === OBSTACLE
        ? OBSTACLE_RGB
        : labels[i] === DRIVABLE
          ? DRIVABLE_RGB
          : null;
    if (color === null) continue; // unknown stays transparent
    rgba[i * 4] = color[0];
    rgba[i * 4 + 1] = color[1];
    rgba[i * 4 + 2] = color[2];
    rgba[i * 4 + 3] = a;
  }
  return rgba;
}

/** Opaque cost-map render: red obstacle, green drivable, gray unknown. */
export function costmapImage(
  labels: Int8Array,
  rows: number,
  cols: number,
): Uint8ClampedArray<ArrayBuffer> {
  if (labels.length !== rows * cols) {
    throw new Error(`label buffer length ${labels.length} != ${rows}x${cols}`);
  }
  const rgba = new Uint8ClampedArray(rows * cols * 4);
  for (let i = 0; i < labels.length; i++) {
    const color =
      labels[i] === OBSTACLE
        ? OBSTACLE_RGB
        : labels[i] === DRIVABLE
          ? DRIVABLE_RGB
          : UNKNOWN_RGB;
    rgba[i * 4] = color[0];
    rgba[i * 4 + 1] = color[1];
    rgba[i * 4 + 2] = color[2];
    rgba[i * 4 + 3] = 255;
  }
  return rgba;
}

/** Canvas polyline for a planned path over a cost map drawn at cellSize. */
export function pathPolyline(
  path: PlannedPath,
  cellSize: number,
): Array<[number, number]> {
  return path.cells.map(([row, col]) => [
    (col + 0.5) * cellSize,
    (row + 0.5) * cellSize,
  ]);
}
