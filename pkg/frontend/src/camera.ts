/**
 * First-person camera matching the engine's conventions: world +y is up,
 * yaw is longitude of the forward axis, pitch is elevation; camera space
 * is x right, y down, z forward; pixel centers at integer + 0.5.
 */

export interface CameraPose {
  yaw: number;
  pitch: number;
  position: [number, number, number];
}

export interface Intrinsics {
  width: number;
  height: number;
  fovX: number;
  fovY: number;
}

export function forward(pose: CameraPose): [number, number, number] {
  const cp = Math.cos(pose.pitch);
  return [cp * Math.cos(pose.yaw), Math.sin(pose.pitch), cp * Math.sin(pose.yaw)];
}

export function right(pose: CameraPose): [number, number, number] {
  return [Math.sin(pose.yaw), 0, -Math.cos(pose.yaw)];
}

function cross(a: number[], b: number[]): [number, number, number] {
  return [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
}

/** Row-major 3x3: world direction -> (right, down, forward) components. */
export function worldToCam(pose: CameraPose): Float64Array {
  const f = forward(pose);
  const r = right(pose);
  const u = cross(f, r);
  return new Float64Array([r[0], r[1], r[2], -u[0], -u[1], -u[2], f[0], f[1], f[2]]);
}

export function focal(intr: Intrinsics): { fx: number; fy: number; cx: number; cy: number } {
  return {
    fx: (0.5 * intr.width) / Math.tan(0.5 * intr.fovX),
    fy: (0.5 * intr.height) / Math.tan(0.5 * intr.fovY),
    cx: 0.5 * intr.width,
    cy: 0.5 * intr.height,
  };
}

/** Move in the horizontal look direction (W/S), strafe (A/D), lift (Q/E). */
export function moved(pose: CameraPose, dForward: number, dRight: number, dUp: number): CameraPose {
  const f = forward(pose);
  const r = right(pose);
  const flat = Math.hypot(f[0], f[2]) || 1;
  return {
    yaw: pose.yaw,
    pitch: pose.pitch,
    position: [
      pose.position[0] + (dForward * f[0]) / flat + dRight * r[0],
      pose.position[1] + dUp,
      pose.position[2] + (dForward * f[2]) / flat + dRight * r[2],
    ],
  };
}

export function turned(pose: CameraPose, dYaw: number, dPitch: number): CameraPose {
  const lim = Math.PI / 2 - 1e-3;
  return {
    yaw: pose.yaw + dYaw,
    pitch: Math.min(lim, Math.max(-lim, pose.pitch + dPitch)),
    position: pose.position,
  };
}
