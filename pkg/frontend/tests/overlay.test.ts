import { describe, expect, it } from "vitest";

import {
  DRIVABLE_RGB,
  OBSTACLE_RGB,
  UNKNOWN_RGB,
  classificationOverlay,
  costmapImage,
  decodeRle,
  pathPolyline,
} from "../src/overlay.js";
import { DRIVABLE, OBSTACLE, UNKNOWN, type Rle } from "../src/types.js";

describe("decodeRle", () => {
  it("expands runs row-major", () => {
    const rle: Rle = [
      [DRIVABLE, 3],
      [OBSTACLE, 2],
      [UNKNOWN, 1],
    ];
    expect(Array.from(decodeRle(rle, 6))).toEqual([0, 0, 0, 1, 1, -1]);
  });

  it("round-trips a random label field", () => {
    const labels = Array.from({ length: 200 }, (_, i) =>
      [DRIVABLE, OBSTACLE, UNKNOWN][(i * 7919) % 3],
    );
    const rle: Rle = [];
    for (const v of labels) {
      const last = rle[rle.length - 1];
      if (last !== undefined && last[0] === v) last[1] += 1;
      else rle.push([v, 1]);
    }
    expect(Array.from(decodeRle(rle, 200))).toEqual(labels);
  });

  it("rejects short or overflowing run data", () => {
    expect(() => decodeRle([[DRIVABLE, 5]], 4)).toThrow(/overflow/);
    expect(() => decodeRle([[DRIVABLE, 3]], 4)).toThrow(/covers 3 of 4/);
  });
});

describe("classificationOverlay", () => {
  it("follows the red/green/transparent color convention", () => {
    const labels = new Int8Array([DRIVABLE, OBSTACLE, UNKNOWN, DRIVABLE]);
    const rgba = classificationOverlay(labels, 2, 2, 0.5);
    expect([rgba[0], rgba[1], rgba[2]]).toEqual(DRIVABLE_RGB);
    expect(rgba[3]).toBe(128);
    expect([rgba[4], rgba[5], rgba[6]]).toEqual(OBSTACLE_RGB);
    expect(rgba[11]).toBe(0); // unknown is fully transparent
    expect([rgba[12], rgba[13], rgba[14]]).toEqual(DRIVABLE_RGB);
  });

  it("keeps the overlay the size of the image", () => {
    const rgba = classificationOverlay(new Int8Array(12), 4, 3, 1);
    expect(rgba.length).toBe(4 * 3 * 4);
    expect(() => classificationOverlay(new Int8Array(11), 4, 3, 1)).toThrow();
  });
});

describe("costmapImage", () => {
  it("renders unknown as neutral gray and everything opaque", () => {
    const rgba = costmapImage(new Int8Array([UNKNOWN, OBSTACLE]), 1, 2);
    expect([rgba[0], rgba[1], rgba[2], rgba[3]]).toEqual([...UNKNOWN_RGB, 255]);
    expect([rgba[4], rgba[5], rgba[6], rgba[7]]).toEqual([...OBSTACLE_RGB, 255]);
  });
});

describe("pathPolyline", () => {
  it("maps cells to canvas centers", () => {
    const line = pathPolyline(
      { cells: [[0, 0], [1, 1]], total_cost: 1, heading: 0, at_goal: false },
      4,
    );
    expect(line).toEqual([
      [2, 2],
      [6, 6],
    ]);
  });
});
