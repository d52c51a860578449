import { readFile } from "node:fs/promises";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { FileProvider, SceneBundle, loadBundle } from "../src/bundle.js";

export const FIXTURES = join(dirname(fileURLToPath(import.meta.url)), "fixtures");

export function fsProvider(bundleDir: string): FileProvider {
  return async (name) => {
    const buf = await readFile(join(bundleDir, name));
    return buf.buffer.slice(buf.byteOffset, buf.byteOffset + buf.byteLength);
  };
}

export async function loadFixtureBundle(name: string): Promise<SceneBundle> {
  return loadBundle(fsProvider(join(FIXTURES, name)));
}

export async function loadFloat32(name: string): Promise<Float32Array> {
  const buf = await readFile(join(FIXTURES, name));
  return new Float32Array(buf.buffer.slice(buf.byteOffset, buf.byteOffset + buf.byteLength));
}

export async function loadMeta(): Promise<any> {
  return JSON.parse(await readFile(join(FIXTURES, "meta.json"), "utf8"));
}

export function meanAbsError(a: ArrayLike<number>, b: ArrayLike<number>): number {
  if (a.length !== b.length) throw new Error("length mismatch");
  let sum = 0;
  for (let i = 0; i < a.length; i++) sum += Math.abs(a[i] - b[i]);
  return sum / a.length;
}
