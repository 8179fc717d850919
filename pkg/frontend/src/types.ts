/** Shared wire types for the terrain-labeling service API. */

export type TerrainClass = "drivable" | "obstacle";

/** Cell/pixel class codes used in run-length payloads. */
export const DRIVABLE = 0;
export const OBSTACLE = 1;
export const UNKNOWN = -1;

export interface Stroke {
  class: TerrainClass;
  pixels: Array<[number, number]>; // (row, col) image coordinates
}

export interface LabelSubmission {
  strokes: Stroke[];
}

export interface LabelReceipt {
  accepted_pixels: number;
  skipped_pixels: Array<{ pixel: [number, number]; reason: string }>;
}

export interface TrainResult {
  duration_seconds: number;
  training_set_size: number;
  head_version: number;
}

/** Row-major run-length encoding: list of [value, count] runs. */
export type Rle = Array<[number, number]>;

export interface Classification {
  width: number;
  height: number;
  rle: Rle;
  head_version: number;
}

export interface CostmapView {
  origin: [number, number];
  resolution: number;
  rows: number;
  cols: number;
  drivable_cells: number;
  obstacle_cells: number;
  unknown_cells: number;
  fused_rle: Rle;
}

export interface PlannedPath {
  cells: Array<[number, number]>;
  total_cost: number;
  heading: number;
  at_goal: boolean;
}

/** Structured error body returned by every failing endpoint. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
    readonly details?: unknown,
  ) {
    super(message);
    this.name = "ApiError";
  }
}
