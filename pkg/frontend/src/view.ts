/** Canvas <-> image coordinate mapping under integer zoom.
 *
 * The image is drawn scaled by `zoom`, so image pixel (row, col) covers the
 * canvas rectangle [col*zoom, (col+1)*zoom) x [row*zoom, (row+1)*zoom).
 * Mapping a canvas point back to the pixel that covers it is exact for any
 * zoom >= 1, which is what keeps painted strokes pixel-faithful.
 */

export interface Viewport {
  zoom: number; // canvas pixels per image pixel
  width: number; // image width in pixels
  height: number; // image height in pixels
}

/** Canvas position -> the image (row, col) whose footprint contains it. */
export function canvasToImage(
  view: Viewport,
  canvasX: number,
  canvasY: number,
): [number, number] | null {
  const col = Math.floor(canvasX / view.zoom);
  const row = Math.floor(canvasY / view.zoom);
  if (row < 0 || row >= view.height || col < 0 || col >= view.width) {
    return null;
  }
  return [row, col];
}

/** Center of an image pixel's footprint on the canvas. */
export function imageToCanvas(
  view: Viewport,
  row: number,
  col: number,
): [number, number] {
  return [(col + 0.5) * view.zoom, (row + 0.5) * view.zoom];
}

/** Cost-map cell -> canvas center, same footprint convention as pixels. */
export function cellToCanvas(
  cellSize: number,
  row: number,
  col: number,
): [number, number] {
  return [(col + 0.5) * cellSize, (row + 0.5) * cellSize];
}

export function canvasToCell(
  cellSize: number,
  rows: number,
  cols: number,
  canvasX: number,
  canvasY: number,
): [number, number] | null {
  const col = Math.floor(canvasX / cellSize);
  const row = Math.floor(canvasY / cellSize);
  if (row < 0 || row >= rows || col < 0 || col >= cols) {
    return null;
  }
  return [row, col];
}
