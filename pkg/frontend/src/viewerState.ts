/**
 * Viewer state and its transitions, kept DOM-free so tests can drive it.
 */

import { SceneBundle, layerCounts } from "./bundle.js";
import { CameraPose, moved, turned } from "./camera.js";

export type QualityTier = "fast" | "exact";

export interface ViewerState {
  pose: CameraPose;
  enabled: Set<number>;
  speed: number; // meters per keypress step
  tier: QualityTier;
}

export function initialState(bundle: SceneBundle): ViewerState {
  return {
    pose: { yaw: 0, pitch: 0, position: [0, 0, 0] },
    enabled: new Set(bundle.layers.keys()),
    speed: Math.max(bundle.meanDepth * 0.02, 0.01),
    tier: "fast",
  };
}

/** Layer toggles keep at least one layer enabled. */
export function toggleLayer(state: ViewerState, layer: number): boolean {
  if (state.enabled.has(layer)) {
    if (state.enabled.size === 1) return false;
    state.enabled.delete(layer);
  } else {
    state.enabled.add(layer);
  }
  return true;
}

/** Total splats currently enabled, from the manifest counts. */
export function enabledSplatCount(state: ViewerState, bundle: SceneBundle): number {
  let total = 0;
  for (const [index, count] of layerCounts(bundle)) {
    if (state.enabled.has(index)) total += count;
  }
  return total;
}

/** Offset from the scene center as a fraction of mean scene depth. */
export function offsetFraction(state: ViewerState, bundle: SceneBundle): number {
  const [x, y, z] = state.pose.position;
  const d = Math.hypot(x, y, z);
  return bundle.meanDepth > 0 ? d / bundle.meanDepth : 0;
}

export function applyMove(state: ViewerState, dF: number, dR: number, dU: number): void {
  state.pose = moved(state.pose, dF * state.speed, dR * state.speed, dU * state.speed);
}

export function applyLook(state: ViewerState, dYaw: number, dPitch: number): void {
  state.pose = turned(state.pose, dYaw, dPitch);
}

/** The 20-percent-of-mean-depth forward-left inspection pose. */
export function inspection20Pose(bundle: SceneBundle): CameraPose {
  const off = (0.2 * bundle.meanDepth) / Math.SQRT2;
  return { yaw: 0, pitch: 0, position: [off, 0, off] };
}
