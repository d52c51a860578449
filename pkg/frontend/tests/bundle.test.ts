import { describe, expect, it } from "vitest";
import { readFile } from "node:fs/promises";
import { join } from "node:path";

import { BundleError, fileMapProvider, layerCounts, loadBundle } from "../src/bundle.js";
import { FIXTURES, loadFixtureBundle } from "./helpers.js";

async function bundleFiles(name: string): Promise<Map<string, ArrayBuffer>> {
  const dir = join(FIXTURES, name);
  const manifest = await readFile(join(dir, "manifest.json"));
  const files = new Map<string, ArrayBuffer>();
  files.set("manifest.json", manifest.buffer.slice(
    manifest.byteOffset, manifest.byteOffset + manifest.byteLength));
  for (const entry of JSON.parse(manifest.toString()).layers) {
    const buf = await readFile(join(dir, entry.file));
    files.set(entry.file, buf.buffer.slice(buf.byteOffset, buf.byteOffset + buf.byteLength));
  }
  return files;
}

describe("bundle loader", () => {
  it("loads the layered fixture and reports manifest counts", async () => {
    const bundle = await loadFixtureBundle("layered");
    const counts = layerCounts(bundle);
    expect([...counts.keys()].sort()).toEqual([1, 2, 3]);
    const manifest = JSON.parse(
      await readFile(join(FIXTURES, "layered", "manifest.json"), "utf8"));
    for (const entry of manifest.layers) {
      expect(counts.get(entry.index)).toBe(entry.count);
      expect(bundle.layers.get(entry.index)!.positions.length).toBe(entry.count * 3);
    }
    expect(bundle.meanDepth).toBeGreaterThan(0);
  });

  it("rejects a corrupted payload", async () => {
    const files = await bundleFiles("layered");
    const payload = new Uint8Array(files.get("layer_2.bin")!.slice(0));
    payload[40] ^= 0xff;
    files.set("layer_2.bin", payload.buffer);
    await expect(loadBundle(fileMapProvider(files))).rejects.toThrow(/checksum/);
  });

  it("rejects a truncated payload without a partial scene", async () => {
    const files = await bundleFiles("layered");
    const payload = files.get("layer_1.bin")!;
    files.set("layer_1.bin", payload.slice(0, payload.byteLength - 12));
    await expect(loadBundle(fileMapProvider(files))).rejects.toThrow(BundleError);
  });

  it("rejects a version mismatch", async () => {
    const files = await bundleFiles("layered");
    const text = new TextDecoder().decode(files.get("manifest.json")!);
    files.set("manifest.json",
      new TextEncoder().encode(text.replace('"version": 1', '"version": 5')).buffer);
    await expect(loadBundle(fileMapProvider(files))).rejects.toThrow(/version/);
  });

  it("rejects a missing layer file", async () => {
    const files = await bundleFiles("layered");
    files.delete("layer_3.bin");
    await expect(loadBundle(fileMapProvider(files))).rejects.toThrow(/missing/);
  });
});
