/** Brush rasterization: strokes are filled disks painted in canvas space and
 * submitted to the service as plain (row, col) pixel lists, so the label
 * format stays language-neutral.
 */

import type { LabelSubmission, Stroke, TerrainClass } from "./types.js";
import { canvasToImage, type Viewport } from "./view.js";

/** Image pixels within `radius` (in image pixels) of the given center,
 * clipped to the image bounds. Radius 0 paints the single center pixel. */
export function rasterizeDisk(
  view: Viewport,
  centerRow: number,
  centerCol: number,
  radius: number,
): Array<[number, number]> {
  const pixels: Array<[number, number]> = [];
  const r = Math.max(0, radius);
  const lo = Math.ceil(-r);
  const hi = Math.floor(r);
  for (let dr = lo; dr <= hi; dr++) {
    for (let dc = lo; dc <= hi; dc++) {
      if (dr * dr + dc * dc > r * r) continue;
      const row = centerRow + dr;
      const col = centerCol + dc;
      if (row < 0 || row >= view.height || col < 0 || col >= view.width) {
        continue;
      }
      pixels.push([row, col]);
    }
  }
  return pixels;
}

/** One in-progress stroke being painted on the canvas. */
export class BrushStroke {
  private readonly seen = new Set<number>();
  readonly pixels: Array<[number, number]> = [];

  constructor(
    readonly terrainClass: TerrainClass,
    readonly brushRadius: number,
    private readonly view: Viewport,
  ) {}

  /** Paint at a canvas position; duplicates and out-of-bounds pixels are
   * dropped so the submitted list is deduplicated and in-bounds. */
  paintAt(canvasX: number, canvasY: number): void {
    const center = canvasToImage(this.view, canvasX, canvasY);
    if (center === null) return;
    for (const [row, col] of rasterizeDisk(
      this.view,
      center[0],
      center[1],
      this.brushRadius,
    )) {
      const key = row * this.view.width + col;
      if (this.seen.has(key)) continue;
      this.seen.add(key);
      this.pixels.push([row, col]);
    }
  }

  toStroke(): Stroke {
    return { class: this.terrainClass, pixels: [...this.pixels] };
  }
}

/** Serialize finished strokes for POST /session/{id}/labels. Empty strokes
 * are dropped; an empty submission returns null (the submit action must be
 * disabled rather than posting nothing). */
export function toSubmission(strokes: BrushStroke[]): LabelSubmission | null {
  const nonEmpty = strokes
    .filter((s) => s.pixels.length > 0)
    .map((s) => s.toStroke());
  return nonEmpty.length > 0 ? { strokes: nonEmpty } : null;
}
