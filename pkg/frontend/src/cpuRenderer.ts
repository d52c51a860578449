/**
 * Exact-tier renderer: the same projection and compositing math as the
 * engine's rasterizer, in plain JS doubles.
 *
 * Per splat: normalize the quaternion, form the world covariance
 * R S S^T R^T, transform to camera space, project with the clamped
 * first-order Jacobian, add the 0.3 px^2 low-pass dilation, then
 * composite front-to-back with alpha clamped at 0.999 and transmittance
 * early-out below 1e-4.  This is what the parity test runs against the
 * engine's golden renders.
 */

import { LayerBuffers } from "./bundle.js";
import { CameraPose, Intrinsics, focal, worldToCam } from "./camera.js";

export const NEAR_PLANE = 0.01;
export const ALPHA_CLAMP = 0.999;
export const T_EARLYOUT = 1e-4;
export const COV_DILATION = 0.3;
export const CULL_SIGMA = 3.0;
export const J_RATIO_LIMIT = 1.3;

export interface ProjectedSplats {
  n: number;
  meanX: Float64Array;
  meanY: Float64Array;
  conicA: Float64Array;
  conicB: Float64Array;
  conicC: Float64Array;
  depth: Float64Array;
  radius: Float64Array;
  opacity: Float64Array;
  colors: Float64Array; // (N*3) clamped to [0,1]
  order: Int32Array; // visible splats, ascending depth, stable by index
}

export function projectSplats(
  layers: LayerBuffers[],
  pose: CameraPose,
  intr: Intrinsics,
): ProjectedSplats {
  let n = 0;
  for (const l of layers) n += l.count;
  const meanX = new Float64Array(n);
  const meanY = new Float64Array(n);
  const conicA = new Float64Array(n);
  const conicB = new Float64Array(n);
  const conicC = new Float64Array(n);
  const depth = new Float64Array(n);
  const radius = new Float64Array(n);
  const opacity = new Float64Array(n);
  const colors = new Float64Array(n * 3);
  const valid = new Uint8Array(n);

  const M = worldToCam(pose);
  const { fx, fy, cx, cy } = focal(intr);
  const limX = J_RATIO_LIMIT * Math.tan(0.5 * intr.fovX);
  const limY = J_RATIO_LIMIT * Math.tan(0.5 * intr.fovY);
  const [px0, py0, pz0] = pose.position;

  let base = 0;
  for (const layer of layers) {
    for (let i = 0; i < layer.count; i++) {
      const k = base + i;
      const wx = layer.positions[i * 3] - px0;
      const wy = layer.positions[i * 3 + 1] - py0;
      const wz = layer.positions[i * 3 + 2] - pz0;
      const tx = M[0] * wx + M[1] * wy + M[2] * wz;
      const ty = M[3] * wx + M[4] * wy + M[5] * wz;
      const tz = M[6] * wx + M[7] * wy + M[8] * wz;
      if (!(tz > NEAR_PLANE)) continue;
      depth[k] = tz;
      meanX[k] = (fx * tx) / tz + cx;
      meanY[k] = (fy * ty) / tz + cy;

      // world covariance from quaternion and linear scales
      let qw = layer.rotations[i * 4];
      let qx = layer.rotations[i * 4 + 1];
      let qy = layer.rotations[i * 4 + 2];
      let qz = layer.rotations[i * 4 + 3];
      const qn = Math.hypot(qw, qx, qy, qz);
      if (qn === 0) continue;
      qw /= qn; qx /= qn; qy /= qn; qz /= qn;
      const R = [
        1 - 2 * (qy * qy + qz * qz), 2 * (qx * qy - qw * qz), 2 * (qx * qz + qw * qy),
        2 * (qx * qy + qw * qz), 1 - 2 * (qx * qx + qz * qz), 2 * (qy * qz - qw * qx),
        2 * (qx * qz - qw * qy), 2 * (qy * qz + qw * qx), 1 - 2 * (qx * qx + qy * qy),
      ];
      const sx = layer.scales[i * 3];
      const sy = layer.scales[i * 3 + 1];
      const sz = layer.scales[i * 3 + 2];
      // A = R diag(s); Sigma_w = A A^T
      const A = [
        R[0] * sx, R[1] * sy, R[2] * sz,
        R[3] * sx, R[4] * sy, R[5] * sz,
        R[6] * sx, R[7] * sy, R[8] * sz,
      ];
      const Sw = symAAt(A);
      const Sc = symMSMt(M, Sw);

      const rx = clampAbs(tx / tz, limX);
      const ry = clampAbs(ty / tz, limY);
      const j00 = fx / tz;
      const j02 = (-fx * rx) / tz;
      const j11 = fy / tz;
      const j12 = (-fy * ry) / tz;
      // cov2d = J Sigma_c J^T + dilation
      const a = j00 * (j00 * Sc[0] + j02 * Sc[2]) + j02 * (j00 * Sc[2] + j02 * Sc[5]) + COV_DILATION;
      const b = j11 * (j00 * Sc[1] + j02 * Sc[4]) + j12 * (j00 * Sc[2] + j02 * Sc[5]);
      const c = j11 * (j11 * Sc[3] + j12 * Sc[4]) + j12 * (j11 * Sc[4] + j12 * Sc[5]) + COV_DILATION;
      const det = a * c - b * b;
      if (!(det > 0)) continue;
      conicA[k] = c / det;
      conicB[k] = -b / det;
      conicC[k] = a / det;
      const mid = 0.5 * (a + c);
      const lamMax = mid + Math.sqrt(Math.max(0.25 * (a - c) * (a - c) + b * b, 0));
      radius[k] = Math.ceil(CULL_SIGMA * Math.sqrt(Math.max(lamMax, 0)));
      if (
        meanX[k] + radius[k] < 0 || meanX[k] - radius[k] > intr.width - 1 ||
        meanY[k] + radius[k] < 0 || meanY[k] - radius[k] > intr.height - 1
      ) {
        continue;
      }
      opacity[k] = layer.opacities[i];
      colors[k * 3] = clamp01(layer.colors[i * 3]);
      colors[k * 3 + 1] = clamp01(layer.colors[i * 3 + 1]);
      colors[k * 3 + 2] = clamp01(layer.colors[i * 3 + 2]);
      valid[k] = 1;
    }
    base += layer.count;
  }

  const live: number[] = [];
  for (let k = 0; k < n; k++) if (valid[k]) live.push(k);
  live.sort((p, q) => (depth[p] - depth[q]) || (p - q));
  return {
    n, meanX, meanY, conicA, conicB, conicC, depth, radius, opacity, colors,
    order: Int32Array.from(live),
  };
}

function clampAbs(v: number, lim: number): number {
  return v < -lim ? -lim : v > lim ? lim : v;
}

function clamp01(v: number): number {
  return v < 0 ? 0 : v > 1 ? 1 : v;
}

/** Symmetric A A^T packed as [xx, xy, xz, yy, yz, zz]. */
function symAAt(A: number[]): number[] {
  return [
    A[0] * A[0] + A[1] * A[1] + A[2] * A[2],
    A[0] * A[3] + A[1] * A[4] + A[2] * A[5],
    A[0] * A[6] + A[1] * A[7] + A[2] * A[8],
    A[3] * A[3] + A[4] * A[4] + A[5] * A[5],
    A[3] * A[6] + A[4] * A[7] + A[5] * A[8],
    A[6] * A[6] + A[7] * A[7] + A[8] * A[8],
  ];
}

/** M S M^T for symmetric packed S, M row-major 3x3; packed result. */
function symMSMt(M: Float64Array, S: number[]): number[] {
  const full = [S[0], S[1], S[2], S[1], S[3], S[4], S[2], S[4], S[5]];
  const T = new Array(9).fill(0); // M S
  for (let r = 0; r < 3; r++) {
    for (let c = 0; c < 3; c++) {
      T[r * 3 + c] =
        M[r * 3] * full[c] + M[r * 3 + 1] * full[3 + c] + M[r * 3 + 2] * full[6 + c];
    }
  }
  const out = new Array(6).fill(0);
  const idx = [[0, 0], [0, 1], [0, 2], [1, 1], [1, 2], [2, 2]];
  idx.forEach(([r, c], k) => {
    out[k] = T[r * 3] * M[c * 3] + T[r * 3 + 1] * M[c * 3 + 1] + T[r * 3 + 2] * M[c * 3 + 2];
  });
  return out;
}

export interface CpuRender {
  width: number;
  height: number;
  color: Float64Array; // H*W*3
  alpha: Float64Array; // H*W
}

export function renderCpu(
  layers: LayerBuffers[],
  pose: CameraPose,
  intr: Intrinsics,
  background: [number, number, number] = [0, 0, 0],
): CpuRender {
  const P = projectSplats(layers, pose, intr);
  const W = intr.width;
  const H = intr.height;
  const color = new Float64Array(H * W * 3);
  const T = new Float64Array(H * W).fill(1);
  for (const s of P.order) {
    const x0 = Math.max(0, Math.floor(P.meanX[s] - P.radius[s]));
    const x1 = Math.min(W - 1, Math.ceil(P.meanX[s] + P.radius[s]));
    const y0 = Math.max(0, Math.floor(P.meanY[s] - P.radius[s]));
    const y1 = Math.min(H - 1, Math.ceil(P.meanY[s] + P.radius[s]));
    const a = P.conicA[s];
    const b = P.conicB[s];
    const c = P.conicC[s];
    for (let py = y0; py <= y1; py++) {
      const dy = py + 0.5 - P.meanY[s];
      for (let px = x0; px <= x1; px++) {
        const p = py * W + px;
        const t = T[p];
        if (t < T_EARLYOUT) continue;
        const dx = px + 0.5 - P.meanX[s];
        const power = -0.5 * (a * dx * dx + c * dy * dy) - b * dx * dy;
        if (power > 0) continue;
        let alpha = P.opacity[s] * Math.exp(power);
        if (alpha > ALPHA_CLAMP) alpha = ALPHA_CLAMP;
        const w = alpha * t;
        color[p * 3] += P.colors[s * 3] * w;
        color[p * 3 + 1] += P.colors[s * 3 + 1] * w;
        color[p * 3 + 2] += P.colors[s * 3 + 2] * w;
        T[p] = t * (1 - alpha);
      }
    }
  }
  const alpha = new Float64Array(H * W);
  for (let p = 0; p < H * W; p++) {
    alpha[p] = 1 - T[p];
    color[p * 3] += background[0] * T[p];
    color[p * 3 + 1] += background[1] * T[p];
    color[p * 3 + 2] += background[2] * T[p];
  }
  return { width: W, height: H, color, alpha };
}
