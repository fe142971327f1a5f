// Browser entry: wires the headless editor state to canvases and controls.
//
// Layout: a square BEV canvas for placing/rotating boxes over the scene
// raster, a wide strip canvas showing the previewed range-view mask, and a
// timeline list of completed frames. All geometry (masks, generations,
// rasters) comes from the service.

import { ServiceClient } from "./api.js";
import { containsPoint } from "./boxes.js";
import {
  drawBevDiff,
  drawBevLayer,
  drawBoxOutline,
  drawMaskStrip,
  FrameBuffer,
  makeFrame,
} from "./render.js";
import {
  appendTimelineFrame,
  EditorState,
  initialState,
  loadScene,
  placeBox,
  previewSelectedMask,
  removeSelected,
  resizeSelected,
  rotateSelected,
  dragSelected,
  runAndCompare,
  selectBox,
  setSeed,
} from "./state.js";
import { BevTransform, canvasToScene } from "./transform.js";

const CANVAS = 640;
const transform: BevTransform = { extentMeters: 40, canvasSize: CANVAS };

const serviceUrl =
  new URLSearchParams(location.search).get("service") ?? "http://127.0.0.1:8765";
const client = new ServiceClient(serviceUrl);

let state: EditorState = initialState();

const bevCanvas = document.getElementById("bev") as HTMLCanvasElement;
const stripCanvas = document.getElementById("strip") as HTMLCanvasElement;
const sceneSelect = document.getElementById("scene") as HTMLSelectElement;
const seedInput = document.getElementById("seed") as HTMLInputElement;
const noticeEl = document.getElementById("notice") as HTMLSpanElement;
const maskInfoEl = document.getElementById("mask-info") as HTMLSpanElement;
const timelineEl = document.getElementById("timeline") as HTMLUListElement;
const diffToggle = document.getElementById("diff-toggle") as HTMLInputElement;

function blit(canvas: HTMLCanvasElement, fb: FrameBuffer): void {
  canvas.width = fb.width;
  canvas.height = fb.height;
  const ctx = canvas.getContext("2d")!;
  ctx.putImageData(new ImageData(new Uint8ClampedArray(fb.data), fb.width, fb.height), 0, 0);
}

function repaint(): void {
  const fb = makeFrame(CANVAS, CANVAS);
  const base = state.layers.after ?? state.layers.sceneBev;
  if (base) drawBevLayer(fb, base);
  if (diffToggle.checked && state.layers.before && state.layers.after) {
    drawBevDiff(fb, state.layers.before, state.layers.after);
  }
  for (const box of state.boxes) {
    const previewed = state.preview?.boxId === box.id && !state.preview.outOfView;
    const selected = box.id === state.selectedId;
    drawBoxOutline(
      fb,
      transform,
      box,
      previewed ? [255, 190, 40, 255] : selected ? [120, 255, 120, 255] : [80, 200, 255, 255],
    );
  }
  blit(bevCanvas, fb);

  const strip = makeFrame(stripCanvas.clientWidth || 1024, stripCanvas.clientHeight || 96, [14, 14, 18, 255]);
  if (state.preview) drawMaskStrip(strip, state.preview.mask);
  blit(stripCanvas, strip);

  noticeEl.textContent = state.notice;
  maskInfoEl.textContent = state.preview
    ? state.preview.outOfView
      ? "mask: out of view"
      : `mask: ${state.preview.pixelCount} px`
    : "";
  timelineEl.replaceChildren(
    ...state.timeline.map((frame, i) => {
      const li = document.createElement("li");
      li.textContent = `frame ${i + 1}: ${frame.jobId} (${frame.boxIds.length} boxes)`;
      return li;
    }),
  );
}

function apply(next: EditorState): void {
  state = next;
  repaint();
}

async function refreshScenes(): Promise<void> {
  const ids = await client.scenes();
  sceneSelect.replaceChildren(
    ...ids.map((id) => {
      const opt = document.createElement("option");
      opt.value = id;
      opt.textContent = id;
      return opt;
    }),
  );
  if (ids.length > 0) apply(await loadScene(state, client, ids[0]));
}

// --- gestures ---------------------------------------------------------------

let dragging: { px: number; py: number } | null = null;
let rotating = false;

bevCanvas.addEventListener("mousedown", (ev) => {
  const rect = bevCanvas.getBoundingClientRect();
  const px = ((ev.clientX - rect.left) / rect.width) * CANVAS;
  const py = ((ev.clientY - rect.top) / rect.height) * CANVAS;
  const p = canvasToScene(transform, { px, py });
  const hit = [...state.boxes].reverse().find((b) => containsPoint(b, p.x, p.y));
  if (ev.shiftKey && state.selectedId !== null) {
    rotating = true;
    apply(rotateSelected(state, transform, px, py));
  } else if (hit) {
    dragging = { px, py };
    apply(selectBox(state, hit.id));
  } else {
    apply(placeBox(state, transform, px, py));
  }
});

bevCanvas.addEventListener("mousemove", (ev) => {
  if (!dragging && !rotating) return;
  const rect = bevCanvas.getBoundingClientRect();
  const px = ((ev.clientX - rect.left) / rect.width) * CANVAS;
  const py = ((ev.clientY - rect.top) / rect.height) * CANVAS;
  if (rotating) {
    apply(rotateSelected(state, transform, px, py));
  } else if (dragging) {
    apply(dragSelected(state, transform, dragging.px, dragging.py, px, py));
    dragging = { px, py };
  }
});

window.addEventListener("mouseup", () => {
  dragging = null;
  rotating = false;
});

window.addEventListener("keydown", (ev) => {
  if (ev.key === "Delete" || ev.key === "Backspace") apply(removeSelected(state));
  // extent handles: arrows scale the selected box
  const step = 0.1;
  if (ev.key === "ArrowUp") apply(resizeSelected(state, step, 0));
  if (ev.key === "ArrowDown") apply(resizeSelected(state, -step, 0));
  if (ev.key === "ArrowRight") apply(resizeSelected(state, 0, step));
  if (ev.key === "ArrowLeft") apply(resizeSelected(state, 0, -step));
});

// --- controls ------------------------------------------------------------------

sceneSelect.addEventListener("change", async () => {
  apply(await loadScene(state, client, sceneSelect.value));
});

seedInput.addEventListener("change", () => {
  apply(setSeed(state, Number(seedInput.value)));
});

document.getElementById("preview")!.addEventListener("click", async () => {
  apply(await previewSelectedMask(state, client));
});

document.getElementById("run")!.addEventListener("click", async () => {
  apply({ ...state, notice: "running..." });
  apply(await runAndCompare(state, client));
});

document.getElementById("append-frame")!.addEventListener("click", () => {
  apply(appendTimelineFrame(state));
});

diffToggle.addEventListener("change", repaint);

refreshScenes().catch((err) => {
  noticeEl.textContent = `service unreachable: ${err.message}`;
});
