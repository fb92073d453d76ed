/** Canvas annotation UI: loads pending images, draws polylines along
 * defects, previews the crop footprints the server will extract, submits
 * annotations, and marks images done. */

import { ApiClient, ImageInfo } from "./api.js";
import { imageToScreen, Point } from "./geometry.js";
import { AnnotationSession, ValidationError } from "./session.js";

const api = new ApiClient("");

const canvas = document.getElementById("canvas") as HTMLCanvasElement;
const ctx = canvas.getContext("2d") as CanvasRenderingContext2D;
const labelSelect = document.getElementById("label") as HTMLSelectElement;
const imageSelect = document.getElementById("image") as HTMLSelectElement;
const scaleInput = document.getElementById("scale") as HTMLInputElement;
const startButton = document.getElementById("start") as HTMLButtonElement;
const undoButton = document.getElementById("undo") as HTMLButtonElement;
const submitButton = document.getElementById("submit") as HTMLButtonElement;
const doneButton = document.getElementById("done") as HTMLButtonElement;
const statusLine = document.getElementById("status") as HTMLElement;
const toolbar = document.getElementById("tools") as HTMLElement;

let session: AnnotationSession | null = null;
let images: ImageInfo[] = [];
let bitmap: ImageBitmap | null = null;
let panning = false;
let panStart: Point = { x: 0, y: 0 };

function toast(message: string, isError = false): void {
  statusLine.textContent = message;
  statusLine.className = isError ? "error" : "";
}

function canvasPoint(ev: MouseEvent): Point {
  const rect = canvas.getBoundingClientRect();
  return { x: ev.clientX - rect.left, y: ev.clientY - rect.top };
}

function render(): void {
  ctx.fillStyle = "#202327";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  if (!session || !bitmap) return;
  const vp = session.viewport;
  ctx.save();
  ctx.setTransform(vp.zoom, 0, 0, vp.zoom, -vp.panX * vp.zoom, -vp.panY * vp.zoom);
  ctx.drawImage(bitmap, 0, 0);
  ctx.lineWidth = 2 / vp.zoom;
  ctx.strokeStyle = "#ffd54d";
  for (const rect of session.previewRects()) {
    ctx.strokeRect(rect.x, rect.y, rect.side, rect.side);
  }
  ctx.restore();
  ctx.strokeStyle = "#4dc3ff";
  ctx.fillStyle = "#4dc3ff";
  ctx.lineWidth = 2;
  const pts = session.polyline.map((p) => imageToScreen(p, vp));
  for (let i = 0; i + 1 < pts.length; i++) {
    ctx.beginPath();
    ctx.moveTo(pts[i].x, pts[i].y);
    ctx.lineTo(pts[i + 1].x, pts[i + 1].y);
    ctx.stroke();
  }
  for (const p of pts) {
    ctx.beginPath();
    ctx.arc(p.x, p.y, 4, 0, Math.PI * 2);
    ctx.fill();
  }
}

async function refreshImages(): Promise<void> {
  images = await api.images();
  imageSelect.innerHTML = "";
  for (const info of images) {
    const option = document.createElement("option");
    option.value = info.id;
    option.textContent = `${info.id} (${info.width}x${info.height})`;
    imageSelect.appendChild(option);
  }
}

async function openSelectedImage(): Promise<void> {
  if (!session) return;
  const info = images.find((i) => i.id === imageSelect.value);
  if (!info) {
    bitmap = null;
    toast("no pending images; all done");
    render();
    return;
  }
  const blob = await (await fetch(api.imageUrl(info.id))).blob();
  bitmap = await createImageBitmap(blob);
  session.openImage(info);
  session.viewport.zoom = Math.min(canvas.width / info.width,
                                   canvas.height / info.height);
  toast(`annotating ${info.id}; click along the defect, then submit`);
  render();
}

startButton.addEventListener("click", async () => {
  const scale = Number(scaleInput.value);
  if (!(scale > 0)) {
    toast("scale factor must be positive", true);
    return;
  }
  session = new AnnotationSession({ scaleFactor: scale });
  const labels = await api.labels();
  session.setLabels(labels);
  labelSelect.innerHTML = "";
  for (const label of labels) {
    const option = document.createElement("option");
    option.value = label;
    option.textContent = label;
    labelSelect.appendChild(option);
  }
  if (labels.length) {
    session.setActiveLabel(labels[0]);
  }
  await refreshImages();
  await openSelectedImage();
  toolbar.classList.remove("disabled");
});

labelSelect.addEventListener("change", () => session?.setActiveLabel(labelSelect.value));
imageSelect.addEventListener("change", () => void openSelectedImage());

canvas.addEventListener("click", (ev) => {
  if (!session || !bitmap) return;
  session.clickAt(canvasPoint(ev));
  render();
});

canvas.addEventListener("contextmenu", (ev) => ev.preventDefault());
canvas.addEventListener("mousedown", (ev) => {
  if (ev.button === 2) {
    panning = true;
    panStart = canvasPoint(ev);
  }
});
canvas.addEventListener("mousemove", (ev) => {
  if (!panning || !session) return;
  const p = canvasPoint(ev);
  session.viewport.panX -= (p.x - panStart.x) / session.viewport.zoom;
  session.viewport.panY -= (p.y - panStart.y) / session.viewport.zoom;
  panStart = p;
  render();
});
window.addEventListener("mouseup", () => {
  panning = false;
});

canvas.addEventListener("wheel", (ev) => {
  if (!session) return;
  ev.preventDefault();
  const vp = session.viewport;
  const at = canvasPoint(ev);
  const factor = ev.deltaY < 0 ? 1.2 : 1 / 1.2;
  // keep the pixel under the cursor fixed while zooming
  vp.panX += at.x / vp.zoom - at.x / (vp.zoom * factor);
  vp.panY += at.y / vp.zoom - at.y / (vp.zoom * factor);
  vp.zoom *= factor;
  render();
});

undoButton.addEventListener("click", () => {
  session?.undo();
  render();
});
window.addEventListener("keydown", (ev) => {
  if (ev.key === "z" && (ev.ctrlKey || ev.metaKey)) {
    session?.undo();
    render();
  }
});

submitButton.addEventListener("click", async () => {
  if (!session) return;
  try {
    const resp = await session.submit(api);
    toast(`${resp.cropsWritten} crops written `
          + `(session total ${session.totalCropsWritten})`);
  } catch (err) {
    const message = err instanceof ValidationError
      ? (err as Error).message
      : `submit failed: ${session.lastError}; polyline kept, retry when ready`;
    toast(message, true);
  }
  render();
});

doneButton.addEventListener("click", async () => {
  if (!session?.imageId) return;
  await api.markDone(session.imageId);
  toast(`${session.imageId} moved to DONE`);
  await refreshImages();
  await openSelectedImage();
});

toast("enter the scale factor for this session, then press start");
