/** Thin typed client for the labeling/navigation HTTP API. Every failing
 * response is surfaced as an ApiError carrying the service's code/message;
 * nothing is swallowed.
 */

import {
  ApiError,
  type Classification,
  type CostmapView,
  type LabelReceipt,
  type LabelSubmission,
  type PlannedPath,
  type TrainResult,
} from "./types.js";

type FetchLike = typeof fetch;

export class ApiClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = fetch,
  ) {}

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<T> {
    let resp: Response;
    try {
      resp = await this.fetchImpl(`${this.baseUrl}${path}`, {
        method,
        headers: body === undefined ? {} : { "content-type": "application/json" },
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new ApiError(0, "network-error", String(err));
    }
    const text = await resp.text();
    let payload: unknown = null;
    try {
      payload = text ? JSON.parse(text) : null;
    } catch {
      payload = null;
    }
    if (!resp.ok) {
      const e = (payload ?? {}) as {
        code?: string;
        message?: string;
        details?: unknown;
      };
      throw new ApiError(
        resp.status,
        e.code ?? "unknown-error",
        e.message ?? `request failed with status ${resp.status}`,
        e.details,
      );
    }
    return payload as T;
  }

  async createSession(): Promise<string> {
    const body = await this.request<{ id: string }>("POST", "/session");
    return body.id;
  }

  uploadFrame(
    sessionId: string,
    imageBase64: string,
    cloudCsv?: string,
  ): Promise<{ frame_version: number; height: number; width: number }> {
    return this.request("POST", `/session/${sessionId}/frame`, {
      image_base64: imageBase64,
      ...(cloudCsv === undefined ? {} : { cloud_csv: cloudCsv }),
    });
  }

  submitLabels(
    sessionId: string,
    submission: LabelSubmission,
  ): Promise<LabelReceipt> {
    return this.request("POST", `/session/${sessionId}/labels`, submission);
  }

  train(sessionId: string): Promise<TrainResult> {
    return this.request("POST", `/session/${sessionId}/train`);
  }

  getClassification(sessionId: string): Promise<Classification> {
    return this.request("GET", `/session/${sessionId}/classification`);
  }

  getCostmap(sessionId: string): Promise<CostmapView> {
    return this.request("GET", `/session/${sessionId}/costmap`);
  }

  plan(
    sessionId: string,
    goal: [number, number],
    start?: [number, number],
  ): Promise<PlannedPath> {
    return this.request("POST", `/session/${sessionId}/plan`, {
      goal,
      ...(start === undefined ? {} : { start }),
    });
  }
}
