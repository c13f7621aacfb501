/** Browser entry point: wires the annotation service to the canvas UI. */

import { ApiError, Client, Guide, ModelInfo } from "./api.js";
import { downsampleStroke, Point, snapToImage } from "./geometry.js";
import { renderOverlay } from "./overlay.js";
import { decodeRle } from "./rle.js";
import {
  ackDelete, ackObject, AppState, fromServer, initialState, Tool,
} from "./state.js";

const client = new Client();
let state: AppState = initialState();
let stroke: Point[] = [];
let drawing = false;
const maskCache = new Map<number, Uint8Array>();

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

const modelSelect = el<HTMLSelectElement>("model");
const newSessionBtn = el<HTMLButtonElement>("new-session");
const fileInput = el<HTMLInputElement>("image-file");
const undoBtn = el<HTMLButtonElement>("undo");
const labelmapLink = el<HTMLAnchorElement>("labelmap");
const objectList = el<HTMLUListElement>("objects");
const baseCanvas = el<HTMLCanvasElement>("base");
const overlayCanvas = el<HTMLCanvasElement>("overlay");
const statusLine = el<HTMLElement>("status");
const toastBox = el<HTMLElement>("toast");

let toastTimer = 0;

function toast(message: string) {
  toastBox.textContent = message;
  toastBox.classList.add("show");
  window.clearTimeout(toastTimer);
  toastTimer = window.setTimeout(() => toastBox.classList.remove("show"), 4000);
}

function describe(err: unknown): string {
  if (err instanceof ApiError) return `${err.status}: ${err.message}`;
  return err instanceof Error ? err.message : String(err);
}

function currentTool(): Tool {
  const checked = document.querySelector<HTMLInputElement>(
    'input[name="tool"]:checked');
  return (checked ? checked.value : "click") as Tool;
}

function setStatus() {
  if (!state.sessionId) {
    statusLine.textContent = "no session";
  } else if (!state.imageSize) {
    statusLine.textContent = `session ${state.sessionId}: load an image`;
  } else {
    statusLine.textContent =
      `session ${state.sessionId} rev ${state.revision}, ` +
      `${state.overlays.length} object(s)`;
  }
  undoBtn.disabled = !state.sessionId;
  fileInput.disabled = !state.sessionId || state.overlays.length > 0;
  labelmapLink.classList.toggle("disabled", !state.sessionId);
}

/** Map a pointer event to image pixel coordinates. */
function eventPoint(ev: PointerEvent): Point {
  const rect = overlayCanvas.getBoundingClientRect();
  const x = (ev.clientX - rect.left) * (overlayCanvas.width / rect.width);
  const y = (ev.clientY - rect.top) * (overlayCanvas.height / rect.height);
  return snapToImage([x, y], overlayCanvas.width, overlayCanvas.height);
}

function redraw() {
  const ctx = overlayCanvas.getContext("2d")!;
  ctx.clearRect(0, 0, overlayCanvas.width, overlayCanvas.height);
  maskCache.clear();
  if (!state.imageSize) return;
  const [w, h] = state.imageSize;
  for (const o of state.overlays) {
    maskCache.set(o.objectId, decodeRle(o.rle, w, h));
    if (o.empty) continue;
    const buf = renderOverlay(o.rle, w, h, o.color,
                              o.objectId === state.selected ? 220 : 150);
    const layer = document.createElement("canvas");
    layer.width = w;
    layer.height = h;
    layer.getContext("2d")!.putImageData(new ImageData(buf, w, h), 0, 0);
    ctx.drawImage(layer, 0, 0);
  }
  if (stroke.length > 1) {
    ctx.strokeStyle = "#ffdd33";
    ctx.lineWidth = 2;
    ctx.beginPath();
    ctx.moveTo(stroke[0][0], stroke[0][1]);
    for (const [x, y] of stroke.slice(1)) ctx.lineTo(x, y);
    ctx.stroke();
  }
}

function refreshObjectList() {
  objectList.textContent = "";
  for (const o of state.overlays) {
    const item = document.createElement("li");
    const btn = document.createElement("button");
    btn.textContent = `#${o.objectId} ${o.guide.type}${o.empty ? " (empty)" : ""}`;
    btn.style.borderLeft = `6px solid rgb(${o.color.join(",")})`;
    if (o.objectId === state.selected) btn.classList.add("selected");
    btn.addEventListener("click", () => {
      state = { ...state,
                selected: state.selected === o.objectId ? null : o.objectId };
      refreshObjectList();
      redraw();
    });
    item.appendChild(btn);
    objectList.appendChild(item);
  }
}

function sync() {
  setStatus();
  refreshObjectList();
  redraw();
}

/** Topmost object whose mask covers the pixel, for the erase tool. */
function objectAt(p: Point): number | null {
  if (!state.imageSize) return null;
  const idx = p[1] * state.imageSize[0] + p[0];
  for (let i = state.overlays.length - 1; i >= 0; i--) {
    const mask = maskCache.get(state.overlays[i].objectId);
    if (mask && mask[idx]) return state.overlays[i].objectId;
  }
  return null;
}

async function loadModels() {
  const { models } = await client.listModels();
  modelSelect.textContent = "";
  for (const m of models as ModelInfo[]) {
    const opt = document.createElement("option");
    opt.value = m.id;
    opt.textContent = `${m.id} (${m.kind}, ${m.patch_size}px)`;
    modelSelect.appendChild(opt);
  }
  newSessionBtn.disabled = models.length === 0;
  if (models.length === 0) toast("no models on server");
}

async function startSession() {
  const created = await client.createSession(modelSelect.value,
                                             crypto.randomUUID());
  state = { ...initialState(), sessionId: created.session_id,
            modelId: modelSelect.value, revision: created.revision };
  labelmapLink.href = client.labelmapUrl(created.session_id);
  const ctx = baseCanvas.getContext("2d")!;
  ctx.clearRect(0, 0, baseCanvas.width, baseCanvas.height);
  sync();
}

async function loadImage(file: File) {
  const sid = state.sessionId;
  if (!sid) return;
  const bytes = await file.arrayBuffer();
  const ack = await client.putImage(sid, bytes, crypto.randomUUID());
  const [w, h] = ack.image_size;
  baseCanvas.width = overlayCanvas.width = w;
  baseCanvas.height = overlayCanvas.height = h;
  const bitmap = await createImageBitmap(new Blob([bytes], { type: "image/png" }));
  baseCanvas.getContext("2d")!.drawImage(bitmap, 0, 0);
  state = { ...state, revision: ack.revision, imageSize: [w, h] };
  sync();
}

async function submitGuide(guide: Guide) {
  const sid = state.sessionId;
  if (!sid) return;
  const tool = currentTool();
  if (tool === "revise") {
    if (state.selected === null) {
      toast("select an object to revise");
      return;
    }
    const payload = await client.revise(sid, state.selected, guide,
                                        crypto.randomUUID());
    state = ackObject(state, guide, payload);
  } else {
    const payload = await client.annotate(sid, guide, crypto.randomUUID());
    state = ackObject(state, guide, payload);
    if (payload.empty) toast(`object #${payload.object_id} came back empty`);
  }
  sync();
}

async function eraseAt(p: Point) {
  const sid = state.sessionId;
  const oid = objectAt(p);
  if (!sid || oid === null) return;
  const ack = await client.deleteObject(sid, oid, crypto.randomUUID());
  state = ackDelete(state, ack.object_id, ack.revision);
  sync();
}

async function undo() {
  const sid = state.sessionId;
  if (!sid) return;
  state = fromServer(state, await client.undo(sid));
  sync();
}

function guard<T extends unknown[]>(fn: (...args: T) => Promise<void>) {
  return (...args: T) => {
    fn(...args).catch(err => {
      toast(describe(err));
      sync();
    });
  };
}

overlayCanvas.addEventListener("pointerdown", ev => {
  if (!state.imageSize) return;
  const tool = currentTool();
  const p = eventPoint(ev);
  if (tool === "erase") {
    guard(eraseAt)(p);
    return;
  }
  drawing = true;
  stroke = [p];
  overlayCanvas.setPointerCapture(ev.pointerId);
  redraw();
});

overlayCanvas.addEventListener("pointermove", ev => {
  if (!drawing) return;
  stroke.push(eventPoint(ev));
  redraw();
});

overlayCanvas.addEventListener("pointerup", ev => {
  if (!drawing) return;
  drawing = false;
  stroke.push(eventPoint(ev));
  const thinned = downsampleStroke(stroke, 2);
  stroke = [];
  redraw();
  const tool = currentTool();
  const wantStroke = tool === "squiggle"
    || (tool === "revise" && thinned.length > 1);
  const guide: Guide = wantStroke && thinned.length > 1
    ? { type: "squiggle", points: thinned }
    : { type: "click", point: thinned[0] };
  guard(submitGuide)(guide);
});

newSessionBtn.addEventListener("click", guard(startSession));
undoBtn.addEventListener("click", guard(undo));
fileInput.addEventListener("change", () => {
  const file = fileInput.files && fileInput.files[0];
  if (file) guard(loadImage)(file);
});
toastBox.addEventListener("click", () => toastBox.classList.remove("show"));

guard(loadModels)();
sync();
