// Editor state machine. All mutations go through these functions so the
// interaction flow is testable headlessly; the DOM layer only dispatches
// gestures and repaints.

import { ServiceClient } from "./api.js";
import { EditorBox, defaultBoxAt, moveBox, resize, yawFromHandle } from "./boxes.js";
import { pollJob } from "./polling.js";
import { BevTransform, canvasToScene, insideView } from "./transform.js";
import { Tensor } from "./tensorfile.js";

export interface PreviewState {
  boxId: number;
  pixelCount: number;
  mask: Tensor;
  outOfView: boolean;
}

export interface TimelineFrame {
  jobId: string;
  boxIds: number[];
  bevAfter: Tensor;
}

export interface EditorState {
  sceneId: string | null;
  boxes: EditorBox[];
  selectedId: number | null;
  seed: number;
  preview: PreviewState | null;
  notice: string;
  jobId: string | null;
  jobStatus: string;
  layers: {
    sceneBev: Tensor | null;
    before: Tensor | null;
    after: Tensor | null;
    footprint: Tensor | null;
  };
  showDiff: boolean;
  timeline: TimelineFrame[];
}

export function initialState(): EditorState {
  return {
    sceneId: null,
    boxes: [],
    selectedId: null,
    seed: 0,
    preview: null,
    notice: "",
    jobId: null,
    jobStatus: "",
    layers: { sceneBev: null, before: null, after: null, footprint: null },
    showDiff: true,
    timeline: [],
  };
}

export async function loadScene(
  state: EditorState,
  client: ServiceClient,
  sceneId: string,
): Promise<EditorState> {
  const sceneBev = await client.sceneBev(sceneId);
  return {
    ...initialState(),
    sceneId,
    seed: state.seed,
    layers: { sceneBev, before: null, after: null, footprint: null },
  };
}

/** Click gesture: place a default car box at the canvas point. */
export function placeBox(
  state: EditorState,
  transform: BevTransform,
  px: number,
  py: number,
): EditorState {
  if (!state.sceneId) return { ...state, notice: "load a scene first" };
  const p = canvasToScene(transform, { px, py });
  if (!insideView(transform, p)) {
    return { ...state, notice: "placement outside the scene extent" };
  }
  const box = defaultBoxAt(p.x, p.y);
  return {
    ...state,
    boxes: [...state.boxes, box],
    selectedId: box.id,
    preview: null,
    notice: "",
  };
}

export function selectBox(state: EditorState, id: number | null): EditorState {
  return { ...state, selectedId: id };
}

function updateSelected(state: EditorState, fn: (b: EditorBox) => EditorBox): EditorState {
  if (state.selectedId === null) return { ...state, notice: "no box selected" };
  return {
    ...state,
    boxes: state.boxes.map((b) => (b.id === state.selectedId ? fn(b) : b)),
    preview: null,
    notice: "",
  };
}

export function dragSelected(
  state: EditorState,
  transform: BevTransform,
  fromPx: number,
  fromPy: number,
  toPx: number,
  toPy: number,
): EditorState {
  const a = canvasToScene(transform, { px: fromPx, py: fromPy });
  const b = canvasToScene(transform, { px: toPx, py: toPy });
  if (!insideView(transform, b)) return { ...state, notice: "placement outside the scene extent" };
  return updateSelected(state, (box) => moveBox(box, b.x - a.x, b.y - a.y));
}

/** Rotate-handle gesture at a canvas point. */
export function rotateSelected(
  state: EditorState,
  transform: BevTransform,
  px: number,
  py: number,
): EditorState {
  const p = canvasToScene(transform, { px, py });
  return updateSelected(state, (box) => yawFromHandle(box, p.x, p.y));
}

/** Extent handles: grow or shrink the selected box, clamped to sane car sizes. */
export function resizeSelected(
  state: EditorState,
  dLength: number,
  dWidth: number,
): EditorState {
  return updateSelected(state, (box) =>
    resize(
      box,
      Math.min(Math.max(box.length + dLength, 1.0), 15.0),
      Math.min(Math.max(box.width + dWidth, 0.5), 5.0),
    ),
  );
}

export function removeSelected(state: EditorState): EditorState {
  if (state.selectedId === null) return state;
  return {
    ...state,
    boxes: state.boxes.filter((b) => b.id !== state.selectedId),
    selectedId: null,
    preview: null,
  };
}

export function setSeed(state: EditorState, seed: number): EditorState {
  return { ...state, seed };
}

export async function previewSelectedMask(
  state: EditorState,
  client: ServiceClient,
): Promise<EditorState> {
  if (!state.sceneId) return { ...state, notice: "load a scene first" };
  const box = state.boxes.find((b) => b.id === state.selectedId);
  if (!box) return { ...state, notice: "no box selected" };
  try {
    const { pixelCount, mask } = await client.maskPreview(state.sceneId, box);
    return {
      ...state,
      preview: { boxId: box.id, pixelCount, mask, outOfView: pixelCount === 0 },
      notice: pixelCount === 0 ? "out of view" : "",
    };
  } catch (err) {
    return { ...state, notice: `preview failed: ${(err as Error).message}` };
  }
}

/** Submit the placed boxes as a job, poll to completion, fetch layers. */
export async function runAndCompare(
  state: EditorState,
  client: ServiceClient,
): Promise<EditorState> {
  if (!state.sceneId) return { ...state, notice: "load a scene first" };
  if (state.boxes.length === 0) return { ...state, notice: "place at least one box" };
  if (!Number.isInteger(state.seed)) return { ...state, notice: "seed required" };
  const jobId = await client.submitJob(state.sceneId, state.boxes, state.seed);
  const working: EditorState = { ...state, jobId, jobStatus: "queued", notice: "" };
  const status = await pollJob(client, jobId);
  if (status.status === "failed") {
    return { ...working, jobStatus: "failed", notice: status.error ?? "job failed" };
  }
  const [before, after, footprint] = await Promise.all([
    client.jobResultTensor(jobId, "bev_before"),
    client.jobResultTensor(jobId, "bev_after"),
    client.jobResultTensor(jobId, "bev_footprint"),
  ]);
  return {
    ...working,
    jobStatus: "done",
    layers: { ...working.layers, before, after, footprint },
  };
}

/** Append the completed job as a timeline frame; further edits chain on it
 * by keeping the accumulated box list (the service replays the sequence
 * deterministically under the same seed). */
export function appendTimelineFrame(state: EditorState): EditorState {
  if (state.jobStatus !== "done" || !state.jobId || !state.layers.after) {
    return { ...state, notice: "no completed job to append" };
  }
  if (state.timeline.some((f) => f.jobId === state.jobId)) {
    return { ...state, notice: "frame already appended" };
  }
  const frame: TimelineFrame = {
    jobId: state.jobId,
    boxIds: state.boxes.map((b) => b.id),
    bevAfter: state.layers.after,
  };
  return { ...state, timeline: [...state.timeline, frame], notice: "" };
}
