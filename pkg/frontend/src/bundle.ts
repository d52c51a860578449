/**
 * Scene bundle loader.
 *
 * A bundle directory holds manifest.json plus layer_<k>.bin files of
 * little-endian float32 records, 14 values per splat:
 *   pos(3)  quat wxyz(4)  scale linear (3)  opacity linear (1)  rgb(3)
 * Every payload is sha256-verified against the manifest before use, so a
 * truncated or corrupted download never yields a partial scene.
 */

export const BUNDLE_VERSION = 1;
export const FLOATS_PER_SPLAT = 14;

export class BundleError extends Error {}

export interface LayerBuffers {
  index: number;
  count: number;
  positions: Float32Array; // (N*3)
  rotations: Float32Array; // (N*4) w x y z
  scales: Float32Array; // (N*3) linear meters
  opacities: Float32Array; // (N) linear (0, 1)
  colors: Float32Array; // (N*3)
}

export interface SceneBundle {
  version: number;
  panoWidth: number;
  panoHeight: number;
  meanDepth: number;
  layers: Map<number, LayerBuffers>;
}

/** Maps a bundle-relative file name to its bytes. */
export type FileProvider = (name: string) => Promise<ArrayBuffer>;

export function urlProvider(base: string): FileProvider {
  const root = base.endsWith("/") ? base : base + "/";
  return async (name) => {
    const res = await fetch(root + name);
    if (!res.ok) throw new BundleError(`fetch ${name}: HTTP ${res.status}`);
    return res.arrayBuffer();
  };
}

export function fileMapProvider(files: Map<string, ArrayBuffer>): FileProvider {
  return async (name) => {
    const buf = files.get(name);
    if (!buf) throw new BundleError(`bundle is missing ${name}`);
    return buf;
  };
}

async function sha256hex(data: ArrayBuffer): Promise<string> {
  const digest = await crypto.subtle.digest("SHA-256", data);
  return [...new Uint8Array(digest)].map((b) => b.toString(16).padStart(2, "0")).join("");
}

function parseRecords(index: number, count: number, payload: ArrayBuffer): LayerBuffers {
  const f = new Float32Array(payload);
  const positions = new Float32Array(count * 3);
  const rotations = new Float32Array(count * 4);
  const scales = new Float32Array(count * 3);
  const opacities = new Float32Array(count);
  const colors = new Float32Array(count * 3);
  for (let i = 0; i < count; i++) {
    const r = i * FLOATS_PER_SPLAT;
    positions.set(f.subarray(r, r + 3), i * 3);
    rotations.set(f.subarray(r + 3, r + 7), i * 4);
    scales.set(f.subarray(r + 7, r + 10), i * 3);
    opacities[i] = f[r + 10];
    colors.set(f.subarray(r + 11, r + 14), i * 3);
  }
  return { index, count, positions, rotations, scales, opacities, colors };
}

export async function loadBundle(provider: FileProvider): Promise<SceneBundle> {
  let manifest: any;
  try {
    manifest = JSON.parse(new TextDecoder().decode(await provider("manifest.json")));
  } catch (e) {
    throw new BundleError(`cannot read manifest.json: ${e}`);
  }
  if (manifest.version !== BUNDLE_VERSION) {
    throw new BundleError(
      `bundle version ${manifest.version} not supported (expected ${BUNDLE_VERSION})`,
    );
  }
  const layers = new Map<number, LayerBuffers>();
  for (const entry of manifest.layers) {
    const payload = await provider(entry.file);
    const expected = entry.count * FLOATS_PER_SPLAT * 4;
    if (payload.byteLength !== expected) {
      throw new BundleError(
        `${entry.file}: ${payload.byteLength} bytes, expected ${expected}`,
      );
    }
    const digest = await sha256hex(payload);
    if (digest !== entry.sha256) {
      throw new BundleError(`${entry.file}: checksum mismatch`);
    }
    layers.set(entry.index, parseRecords(entry.index, entry.count, payload));
  }
  return {
    version: manifest.version,
    panoWidth: manifest.pano_width ?? 0,
    panoHeight: manifest.pano_height ?? 0,
    meanDepth: manifest.mean_depth ?? 0,
    layers,
  };
}

export function layerCounts(bundle: SceneBundle): Map<number, number> {
  return new Map([...bundle.layers.entries()].map(([k, v]) => [k, v.count]));
}
