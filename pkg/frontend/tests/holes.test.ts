import { describe, expect, it } from "vitest";

import { renderCpu } from "../src/cpuRenderer.js";
import { holeFraction } from "../src/holeMeter.js";
import { inspection20Pose } from "../src/viewerState.js";
import { loadFixtureBundle, loadMeta } from "./helpers.js";

describe("hole indicator", () => {
  it("reads lower for the layered fixture than the single-layer one at the 20% pose", async () => {
    const meta = await loadMeta();
    const intr = { width: meta.size, height: meta.size, fovX: meta.fov, fovY: meta.fov };
    const fractions: Record<string, number> = {};
    for (const name of ["layered", "single"]) {
      const bundle = await loadFixtureBundle(name);
      const layers = [...bundle.layers.keys()].sort((a, b) => a - b)
        .map((k) => bundle.layers.get(k)!);
      const out = renderCpu(layers, inspection20Pose(bundle), intr);
      fractions[name] = holeFraction(out.alpha);
    }
    expect(fractions.layered).toBeLessThan(fractions.single);
    expect(fractions.single).toBeGreaterThan(0.05);
    expect(fractions.layered).toBeLessThan(0.01);
  });

  it("matches the engine's hole measurements on the goldens", async () => {
    const meta = await loadMeta();
    const intr = { width: meta.size, height: meta.size, fovX: meta.fov, fovY: meta.fov };
    for (const name of ["layered", "single"]) {
      const bundle = await loadFixtureBundle(name);
      const layers = [...bundle.layers.keys()].sort((a, b) => a - b)
        .map((k) => bundle.layers.get(k)!);
      for (const tag of ["center", "offset20"]) {
        const pose = meta.poses[name][tag];
        const out = renderCpu(layers,
          { yaw: pose.yaw, pitch: pose.pitch, position: pose.position }, intr);
        expect(Math.abs(holeFraction(out.alpha) - meta.holes[name][tag])).toBeLessThan(0.01);
      }
    }
  });

  it("counts an empty frame as all holes", () => {
    expect(holeFraction(new Float64Array(64))).toBe(1);
    expect(holeFraction(new Float64Array(64).fill(1))).toBe(0);
  });
});
