import { describe, expect, it } from "vitest";

import { BrushStroke, rasterizeDisk, toSubmission } from "../src/brush.js";
import type { Viewport } from "../src/view.js";

const view: Viewport = { zoom: 1, width: 40, height: 40 };

function bruteForceDisk(
  centerRow: number,
  centerCol: number,
  radius: number,
): Set<string> {
  const out = new Set<string>();
  for (let row = 0; row < view.height; row++) {
    for (let col = 0; col < view.width; col++) {
      const dr = row - centerRow;
      const dc = col - centerCol;
      if (dr * dr + dc * dc <= radius * radius) out.add(`${row},${col}`);
    }
  }
  return out;
}

describe("rasterizeDisk", () => {
  it("matches the brute-force disk for several radii", () => {
    for (const radius of [0, 1, 2, 3.5, 5]) {
      const got = new Set(
        rasterizeDisk(view, 20, 17, radius).map(([r, c]) => `${r},${c}`),
      );
      expect(got).toEqual(bruteForceDisk(20, 17, radius));
    }
  });

  it("radius 0 paints exactly the center pixel", () => {
    expect(rasterizeDisk(view, 5, 6, 0)).toEqual([[5, 6]]);
  });

  it("clips to the image bounds", () => {
    for (const [r, c] of rasterizeDisk(view, 0, 39, 3)) {
      expect(r).toBeGreaterThanOrEqual(0);
      expect(c).toBeLessThan(40);
    }
    expect(new Set(rasterizeDisk(view, 0, 39, 3).map(String))).toEqual(
      bruteForceDisk(0, 39, 3),
    ); // same membership after clipping
  });
});

describe("BrushStroke", () => {
  it("deduplicates overlapping dabs", () => {
    const stroke = new BrushStroke("obstacle", 2, view);
    stroke.paintAt(10, 10);
    stroke.paintAt(10, 10);
    stroke.paintAt(11, 10);
    const seen = new Set(stroke.pixels.map(([r, c]) => `${r},${c}`));
    expect(seen.size).toBe(stroke.pixels.length);
  });

  it("ignores paints outside the canvas image area", () => {
    const stroke = new BrushStroke("drivable", 1, view);
    stroke.paintAt(-5, 10);
    stroke.paintAt(10, 400);
    expect(stroke.pixels).toEqual([]);
  });
});

describe("toSubmission", () => {
  it("serializes class and exact pixels", () => {
    const stroke = new BrushStroke("drivable", 0, view);
    stroke.paintAt(3, 7); // canvas (x=3, y=7) -> image (row 7, col 3)
    expect(toSubmission([stroke])).toEqual({
      strokes: [{ class: "drivable", pixels: [[7, 3]] }],
    });
  });

  it("returns null with no painted pixels so submit stays disabled", () => {
    expect(toSubmission([])).toBeNull();
    expect(toSubmission([new BrushStroke("obstacle", 1, view)])).toBeNull();
  });
});
