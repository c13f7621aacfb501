/**
 * Client-side session state. Pure reducers; the invariant throughout is
 * that `overlays` mirrors the server object list at the last acknowledged
 * revision, so any drift is fixable by re-rendering from GET state.
 */

import type { Guide, ObjectPayload, SessionState } from "./api.js";
import { colorFor, Rgb } from "./color.js";
import type { Runs } from "./rle.js";

export type Tool = "click" | "squiggle" | "revise" | "erase";

export interface Overlay {
  objectId: number;
  guide: Guide;
  rle: Runs;
  empty: boolean;
  color: Rgb;
}

export interface AppState {
  sessionId: string | null;
  modelId: string | null;
  revision: number;
  imageSize: [number, number] | null;
  overlays: Overlay[];
  tool: Tool;
  selected: number | null;
}

export function initialState(): AppState {
  return { sessionId: null, modelId: null, revision: 0, imageSize: null,
           overlays: [], tool: "click", selected: null };
}

/** Acknowledge a successful annotate (append) or revise (replace). */
export function ackObject(state: AppState, guide: Guide,
                          payload: ObjectPayload): AppState {
  const overlay: Overlay = {
    objectId: payload.object_id,
    guide,
    rle: payload.rle,
    empty: payload.empty,
    color: colorFor(payload.object_id),
  };
  const overlays = state.overlays.some(o => o.objectId === payload.object_id)
    ? state.overlays.map(o => (o.objectId === payload.object_id ? overlay : o))
    : [...state.overlays, overlay];
  return { ...state, overlays, revision: payload.revision };
}

export function ackDelete(state: AppState, objectId: number,
                          revision: number): AppState {
  return {
    ...state,
    revision,
    overlays: state.overlays.filter(o => o.objectId !== objectId),
    selected: state.selected === objectId ? null : state.selected,
  };
}

/** Rebuild from a GET-state response (session open, undo, reconnect). */
export function fromServer(state: AppState, server: SessionState): AppState {
  return {
    ...state,
    sessionId: server.session_id,
    modelId: server.model_id,
    revision: server.revision,
    imageSize: server.image_size,
    overlays: server.objects.map(o => ({
      objectId: o.object_id,
      guide: o.guide,
      rle: o.rle,
      empty: o.empty,
      color: colorFor(o.object_id),
    })),
    selected: state.selected !== null
      && server.objects.some(o => o.object_id === state.selected)
      ? state.selected : null,
  };
}

/** True when local overlays match the server object list exactly. */
export function matchesServer(state: AppState, server: SessionState): boolean {
  if (state.revision !== server.revision) return false;
  if (state.overlays.length !== server.objects.length) return false;
  return state.overlays.every((o, i) => {
    const s = server.objects[i];
    return o.objectId === s.object_id && o.empty === s.empty
      && o.rle.length === s.rle.length
      && o.rle.every((v, k) => v === s.rle[k]);
  });
}
