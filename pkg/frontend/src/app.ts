/** UI state machine, kept free of DOM so the workflow is unit-testable.
 *
 * All state is reconstructable from the API; this store only caches the
 * latest responses and enforces the interaction rules: retrain needs one
 * stroke of each class, at most one train request is in flight, and the
 * previous overlay stays visible until its replacement has arrived.
 */

import type { ApiClient } from "./api.js";
import { toSubmission, type BrushStroke } from "./brush.js";
import { decodeRle } from "./overlay.js";
import {
  ApiError,
  type Classification,
  type CostmapView,
  type PlannedPath,
  type TrainResult,
} from "./types.js";

export interface TrainingEvent {
  headVersion: number;
  durationSeconds: number;
  trainingSetSize: number;
}

export class LabelApp {
  sessionId: string | null = null;
  frameLoaded = false;
  /** Counts of submitted stroke pixels per class, kept to gate retraining. */
  submittedByClass = { drivable: 0, obstacle: 0 };
  pendingStrokes: BrushStroke[] = [];
  skippedReport: Array<{ pixel: [number, number]; reason: string }> = [];
  trainInFlight = false;
  history: TrainingEvent[] = [];
  overlay: Classification | null = null;
  costmap: CostmapView | null = null;
  plannedPath: PlannedPath | null = null;
  statusMessage = "";

  constructor(private readonly api: ApiClient) {}

  async start(imageBase64: string, cloudCsv?: string): Promise<void> {
    this.sessionId = await this.api.createSession();
    await this.api.uploadFrame(this.sessionId, imageBase64, cloudCsv);
    this.frameLoaded = true;
  }

  private requireSession(): string {
    if (this.sessionId === null || !this.frameLoaded) {
      throw new Error("no frame loaded");
    }
    return this.sessionId;
  }

  get canSubmit(): boolean {
    return this.frameLoaded && toSubmission(this.pendingStrokes) !== null;
  }

  /** Retraining is enabled once both classes have submitted labels and no
   * train request is already running. */
  get canRetrain(): boolean {
    return (
      this.frameLoaded &&
      !this.trainInFlight &&
      this.submittedByClass.drivable > 0 &&
      this.submittedByClass.obstacle > 0
    );
  }

  get canPlan(): boolean {
    return this.costmap !== null;
  }

  /** Submit the pending strokes; a no-op when nothing is painted (the
   * submit action is disabled rather than issuing an empty request). */
  async submitStrokes(): Promise<boolean> {
    const submission = toSubmission(this.pendingStrokes);
    if (submission === null) return false;
    const receipt = await this.api.submitLabels(
      this.requireSession(),
      submission,
    );
    // only accepted pixels count toward the retrain gate
    const skipped = new Set(
      receipt.skipped_pixels.map((s) => `${s.pixel[0]},${s.pixel[1]}`),
    );
    for (const stroke of submission.strokes) {
      this.submittedByClass[stroke.class] += stroke.pixels.filter(
        ([r, c]) => !skipped.has(`${r},${c}`),
      ).length;
    }
    this.skippedReport = receipt.skipped_pixels;
    this.pendingStrokes = [];
    if (receipt.skipped_pixels.length > 0) {
      this.statusMessage = `${receipt.skipped_pixels.length} pixel(s) skipped: ${receipt.skipped_pixels[0].reason}`;
    }
    return true;
  }

  /** Train, then refresh the overlay; the old overlay is replaced only once
   * the new classification has been fetched. Returns the train result, or
   * null when the request was rejected (message left in statusMessage). */
  async retrainAndRefresh(): Promise<TrainResult | null> {
    if (!this.canRetrain) return null;
    const sid = this.requireSession();
    this.trainInFlight = true;
    try {
      const result = await this.api.train(sid);
      this.history.push({
        headVersion: result.head_version,
        durationSeconds: result.duration_seconds,
        trainingSetSize: result.training_set_size,
      });
      this.statusMessage = `trained on ${result.training_set_size} examples in ${result.duration_seconds.toFixed(2)}s`;
      this.overlay = await this.api.getClassification(sid);
      return result;
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        this.statusMessage = "a training run is already in progress";
        return null;
      }
      if (err instanceof ApiError && err.status === 422) {
        this.statusMessage = err.message;
        return null;
      }
      throw err;
    } finally {
      this.trainInFlight = false;
    }
  }

  overlayLabels(): Int8Array | null {
    if (this.overlay === null) return null;
    return decodeRle(
      this.overlay.rle,
      this.overlay.width * this.overlay.height,
    );
  }

  async refreshCostmap(): Promise<void> {
    this.costmap = await this.api.getCostmap(this.requireSession());
  }

  costmapLabels(): Int8Array | null {
    if (this.costmap === null) return null;
    return decodeRle(this.costmap.fused_rle, this.costmap.rows * this.costmap.cols);
  }

  /** Plan to a clicked goal cell. On unreachable goals the previous path is
   * kept and a message is surfaced instead. */
  async planTo(goal: [number, number]): Promise<PlannedPath | null> {
    if (!this.canPlan) return null;
    try {
      this.plannedPath = await this.api.plan(this.requireSession(), goal);
      this.statusMessage = `path of ${this.plannedPath.cells.length} cells, heading ${this.plannedPath.heading.toFixed(2)} rad`;
      return this.plannedPath;
    } catch (err) {
      if (err instanceof ApiError && err.code === "unreachable-goal") {
        this.statusMessage = "goal is unreachable";
        return null;
      }
      throw err;
    }
  }
}
