/**
 * Single-page viewer app: loads a scene bundle (?bundle=<url> or local
 * directory pick), renders it with first-person controls, and shows the
 * layer panel, offset readout and live hole indicator.
 */

import { BundleError, SceneBundle, fileMapProvider, loadBundle, urlProvider } from "./bundle.js";
import { Intrinsics } from "./camera.js";
import { renderCpu } from "./cpuRenderer.js";
import { holeFraction, holeFractionRgba8 } from "./holeMeter.js";
import {
  ViewerState,
  applyLook,
  applyMove,
  enabledSplatCount,
  initialState,
  inspection20Pose,
  offsetFraction,
  toggleLayer,
} from "./viewerState.js";
import { WebglSplatRenderer } from "./webglRenderer.js";

const LAYER_NAMES: Record<number, string> = {
  0: "dynamic", 1: "foreground", 2: "background", 3: "sky",
};

const canvas = document.getElementById("view") as HTMLCanvasElement;
const cpuCanvas = document.getElementById("cpu-view") as HTMLCanvasElement;
const hud = document.getElementById("hud")!;
const panel = document.getElementById("layers")!;
const banner = document.getElementById("banner")!;

let bundle: SceneBundle | null = null;
let state: ViewerState | null = null;
let gpu: WebglSplatRenderer | null = null;
let dirty = true;
let frame = 0;
let lastHole = 0;

function intrinsics(): Intrinsics {
  return { width: canvas.width, height: canvas.height, fovX: Math.PI / 2, fovY: Math.PI / 2 };
}

function enabledLayers() {
  if (!bundle || !state) return [];
  return [...bundle.layers.keys()]
    .filter((k) => state!.enabled.has(k))
    .sort((a, b) => a - b)
    .map((k) => bundle!.layers.get(k)!);
}

function rebuildPanel() {
  if (!bundle || !state) return;
  panel.innerHTML = "<b>layers</b><br>";
  for (const [index, layer] of [...bundle.layers.entries()].sort((a, b) => a[0] - b[0])) {
    const row = document.createElement("label");
    row.className = "layer-row";
    const box = document.createElement("input");
    box.type = "checkbox";
    box.checked = state.enabled.has(index);
    box.disabled = layer.count === 0;
    box.onchange = () => {
      if (!toggleLayer(state!, index)) box.checked = true;
      rebuildPanel();
      dirty = true;
    };
    row.appendChild(box);
    row.appendChild(document.createTextNode(
      ` ${index} ${LAYER_NAMES[index] ?? "?"} (${layer.count.toLocaleString()} splats)`));
    panel.appendChild(row);
    panel.appendChild(document.createElement("br"));
  }
  const total = document.createElement("div");
  total.id = "enabled-count";
  total.textContent = `enabled: ${enabledSplatCount(state, bundle).toLocaleString()} splats`;
  panel.appendChild(total);
}

function drawHud() {
  if (!bundle || !state) return;
  const frac = offsetFraction(state, bundle);
  hud.textContent =
    `offset: ${(100 * frac).toFixed(1)}% of mean depth (${bundle.meanDepth.toFixed(1)} m)` +
    ` | holes: ${(100 * lastHole).toFixed(1)}%` +
    ` | tier: ${state.tier} | WASD move, QE lift, drag look, T tier, 2 = 20% pose`;
}

function renderFrame() {
  requestAnimationFrame(renderFrame);
  if (!bundle || !state || !dirty) return;
  dirty = false;
  frame++;
  const layers = enabledLayers();
  if (state.tier === "exact") {
    canvas.style.display = "none";
    cpuCanvas.style.display = "block";
    const intr: Intrinsics = {
      width: cpuCanvas.width, height: cpuCanvas.height,
      fovX: Math.PI / 2, fovY: Math.PI / 2,
    };
    const out = renderCpu(layers, state.pose, intr);
    const img = new ImageData(intr.width, intr.height);
    for (let p = 0; p < intr.width * intr.height; p++) {
      img.data[p * 4] = Math.min(255, Math.max(0, Math.round(out.color[p * 3] * 255)));
      img.data[p * 4 + 1] = Math.min(255, Math.max(0, Math.round(out.color[p * 3 + 1] * 255)));
      img.data[p * 4 + 2] = Math.min(255, Math.max(0, Math.round(out.color[p * 3 + 2] * 255)));
      img.data[p * 4 + 3] = 255;
    }
    cpuCanvas.getContext("2d")!.putImageData(img, 0, 0);
    lastHole = holeFraction(out.alpha);
  } else {
    canvas.style.display = "block";
    cpuCanvas.style.display = "none";
    if (!gpu) gpu = new WebglSplatRenderer(canvas);
    gpu.render(layers, state.pose, intrinsics());
    if (frame % 5 === 0) lastHole = holeFractionRgba8(gpu.readPixels());
  }
  drawHud();
}

function bindInput() {
  window.addEventListener("keydown", (e) => {
    if (!state || !bundle) return;
    const steps: Record<string, [number, number, number]> = {
      w: [1, 0, 0], s: [-1, 0, 0], a: [0, -1, 0], d: [0, 1, 0],
      q: [0, 0, -1], e: [0, 0, 1],
    };
    const k = e.key.toLowerCase();
    if (k in steps) {
      applyMove(state, ...steps[k]);
      dirty = true;
    } else if (k === "t") {
      state.tier = state.tier === "fast" ? "exact" : "fast";
      dirty = true;
    } else if (k === "2") {
      state.pose = inspection20Pose(bundle);
      dirty = true;
    } else if (k === "0") {
      state.pose = { yaw: 0, pitch: 0, position: [0, 0, 0] };
      dirty = true;
    }
  });
  let dragging = false;
  let last: [number, number] = [0, 0];
  const down = (x: number, y: number) => { dragging = true; last = [x, y]; };
  canvas.parentElement!.addEventListener("mousedown", (e) => down(e.clientX, e.clientY));
  window.addEventListener("mouseup", () => (dragging = false));
  window.addEventListener("mousemove", (e) => {
    if (!dragging || !state) return;
    applyLook(state, (e.clientX - last[0]) * 0.004, -(e.clientY - last[1]) * 0.004);
    last = [e.clientX, e.clientY];
    dirty = true;
  });
}

function showError(message: string) {
  banner.textContent = message;
  banner.style.display = "block";
}

async function boot() {
  bindInput();
  renderFrame();
  const url = new URLSearchParams(location.search).get("bundle");
  if (url) {
    try {
      adopt(await loadBundle(urlProvider(url)));
    } catch (e) {
      showError(e instanceof BundleError ? `bundle error: ${e.message}` : String(e));
    }
  }
  const picker = document.getElementById("picker") as HTMLInputElement;
  picker.onchange = async () => {
    const files = new Map<string, ArrayBuffer>();
    for (const f of picker.files ?? []) {
      files.set(f.name, await f.arrayBuffer());
    }
    try {
      adopt(await loadBundle(fileMapProvider(files)));
    } catch (e) {
      showError(e instanceof BundleError ? `bundle error: ${e.message}` : String(e));
    }
  };
}

function adopt(loaded: SceneBundle) {
  banner.style.display = "none";
  bundle = loaded;
  state = initialState(loaded);
  rebuildPanel();
  dirty = true;
}

boot();
