import { afterAll, describe, expect, it } from "vitest";

import { BrushStroke, toSubmission } from "../src/brush.js";
import {
  canvasToCell,
  canvasToImage,
  cellToCanvas,
  imageToCanvas,
  type Viewport,
} from "../src/view.js";

let criterion13 = "FAIL";
afterAll(() => {
  console.log(`\n[acceptance] criterion 13 stroke-pixel-fidelity: ${criterion13}`);
});

describe("canvas/image coordinate mapping", () => {
  const view: Viewport = { zoom: 2, width: 64, height: 48 };

  it("maps every canvas point inside a pixel footprint back to that pixel", () => {
    for (const [row, col] of [
      [0, 0],
      [47, 63],
      [10, 31],
    ] as const) {
      for (const fx of [0, 0.5, 1.9]) {
        for (const fy of [0, 0.5, 1.9]) {
          expect(
            canvasToImage(view, col * view.zoom + fx, row * view.zoom + fy),
          ).toEqual([row, col]);
        }
      }
    }
  });

  it("rejects canvas points outside the image", () => {
    expect(canvasToImage(view, -1, 0)).toBeNull();
    expect(canvasToImage(view, 64 * 2, 0)).toBeNull();
    expect(canvasToImage(view, 0, 48 * 2)).toBeNull();
  });

  it("imageToCanvas lands in the pixel's own footprint", () => {
    for (let row = 0; row < 48; row += 7) {
      for (let col = 0; col < 64; col += 9) {
        const [x, y] = imageToCanvas(view, row, col);
        expect(canvasToImage(view, x, y)).toEqual([row, col]);
      }
    }
  });

  it("cell mapping round-trips the same way", () => {
    const [x, y] = cellToCanvas(4, 20, 31);
    expect(canvasToCell(4, 150, 150, x, y)).toEqual([20, 31]);
    expect(canvasToCell(4, 150, 150, -1, 0)).toBeNull();
    expect(canvasToCell(4, 150, 150, 150 * 4, 0)).toBeNull();
  });
});

describe("stroke pixel fidelity round trip", () => {
  it("programmatic paint submits exact coordinates at zoom 1x and 2x", () => {
    for (const zoom of [1, 2]) {
      const view: Viewport = { zoom, width: 90, height: 90 };
      const targets: Array<[number, number]> = [
        [30, 30],
        [30, 31],
        [45, 60],
        [89, 0],
      ];
      const stroke = new BrushStroke("drivable", 0, view);
      for (const [row, col] of targets) {
        const [x, y] = imageToCanvas(view, row, col);
        stroke.paintAt(x, y);
      }
      const submission = toSubmission([stroke]);
      expect(submission).not.toBeNull();
      expect(submission!.strokes).toEqual([
        { class: "drivable", pixels: targets },
      ]);
    }
    criterion13 = "PASS";
  });
});
