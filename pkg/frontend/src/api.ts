/** Typed client for the annotation service HTTP API. */

import type { Point } from "./geometry.js";
import type { Runs } from "./rle.js";

export interface ClickGuide {
  type: "click";
  point: Point;
}

export interface SquiggleGuide {
  type: "squiggle";
  points: Point[];
}

export type Guide = ClickGuide | SquiggleGuide;

export interface ObjectPayload {
  session_id: string;
  object_id: number;
  rle: Runs;
  empty: boolean;
  revision: number;
}

export interface ObjectEntry {
  object_id: number;
  guide: Guide;
  rle: Runs;
  empty: boolean;
}

export interface SessionState {
  session_id: string;
  model_id: string;
  revision: number;
  image_size: [number, number] | null;
  objects: ObjectEntry[];
}

export interface ModelInfo {
  id: string;
  kind: string;
  patch_size: number;
  parameters: number;
}

export class ApiError extends Error {
  constructor(readonly status: number, detail: string) {
    super(detail);
  }
}

async function parseError(res: Response): Promise<never> {
  let detail = res.statusText;
  try {
    const body = await res.json();
    if (typeof body.detail === "string") detail = body.detail;
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(res.status, detail);
}

export class Client {
  constructor(readonly base = "") {}

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await fetch(this.base + path, init);
    if (!res.ok) await parseError(res);
    return res.json() as Promise<T>;
  }

  private mutationHeaders(requestId?: string): Record<string, string> {
    const headers: Record<string, string> = {
      "Content-Type": "application/json",
    };
    if (requestId) headers["X-Request-Id"] = requestId;
    return headers;
  }

  listModels(): Promise<{ models: ModelInfo[] }> {
    return this.json("/api/models");
  }

  createSession(modelId: string, requestId?: string): Promise<{ session_id: string; revision: number }> {
    return this.json("/api/sessions", {
      method: "POST",
      headers: this.mutationHeaders(requestId),
      body: JSON.stringify({ model_id: modelId }),
    });
  }

  async putImage(sid: string, png: Blob | ArrayBuffer, requestId?: string): Promise<{ revision: number; image_size: [number, number] }> {
    const headers: Record<string, string> = { "Content-Type": "image/png" };
    if (requestId) headers["X-Request-Id"] = requestId;
    const res = await fetch(`${this.base}/api/sessions/${sid}/image`, {
      method: "PUT",
      headers,
      body: png,
    });
    if (!res.ok) await parseError(res);
    return res.json();
  }

  annotate(sid: string, guide: Guide, requestId?: string): Promise<ObjectPayload> {
    return this.json(`/api/sessions/${sid}/objects`, {
      method: "POST",
      headers: this.mutationHeaders(requestId),
      body: JSON.stringify(guide),
    });
  }

  revise(sid: string, objectId: number, guide: Guide, requestId?: string): Promise<ObjectPayload> {
    return this.json(`/api/sessions/${sid}/objects/${objectId}`, {
      method: "PATCH",
      headers: this.mutationHeaders(requestId),
      body: JSON.stringify(guide),
    });
  }

  deleteObject(sid: string, objectId: number, requestId?: string): Promise<{ object_id: number; revision: number }> {
    return this.json(`/api/sessions/${sid}/objects/${objectId}`, {
      method: "DELETE",
      headers: this.mutationHeaders(requestId),
    });
  }

  undo(sid: string): Promise<SessionState> {
    return this.json(`/api/sessions/${sid}/undo`, { method: "POST" });
  }

  getState(sid: string): Promise<SessionState> {
    return this.json(`/api/sessions/${sid}`);
  }

  labelmapUrl(sid: string): string {
    return `${this.base}/api/sessions/${sid}/labelmap`;
  }
}
