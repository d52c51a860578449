/**
 * Fast tier: WebGL2 instanced quads, one per splat, sorted back-to-front
 * on the CPU each frame.  The fragment shader evaluates the same 2D
 * Gaussian alpha as the engine (clamped at 0.999); straight alpha
 * blending back-to-front reproduces front-to-back compositing, and the
 * destination alpha channel accumulates coverage for the hole meter.
 */

import { CameraPose, Intrinsics } from "./camera.js";
import { ALPHA_CLAMP, ProjectedSplats, projectSplats } from "./cpuRenderer.js";
import { LayerBuffers } from "./bundle.js";

const VERT = `#version 300 es
precision highp float;
layout(location=0) in vec2 corner;       // quad corner in [-1,1]
layout(location=1) in vec2 center;       // splat center, pixels
layout(location=2) in vec3 conic;        // a, b, c
layout(location=3) in vec4 colorOpacity; // rgb, opacity
layout(location=4) in float radius;      // pixels
uniform vec2 viewport;
out vec2 vOffset;
out vec4 vColorOpacity;
out vec3 vConic;
void main() {
  vOffset = corner * radius;
  vColorOpacity = colorOpacity;
  vConic = conic;
  vec2 px = center + vOffset;
  vec2 ndc = vec2(px.x / viewport.x * 2.0 - 1.0, 1.0 - px.y / viewport.y * 2.0);
  gl_Position = vec4(ndc, 0.0, 1.0);
}`;

const FRAG = `#version 300 es
precision highp float;
in vec2 vOffset;
in vec4 vColorOpacity;
in vec3 vConic;
uniform float alphaClamp;
out vec4 outColor;
void main() {
  float power = -0.5 * (vConic.x * vOffset.x * vOffset.x
                        + vConic.z * vOffset.y * vOffset.y)
                - vConic.y * vOffset.x * vOffset.y;
  if (power > 0.0) discard;
  float alpha = min(vColorOpacity.a * exp(power), alphaClamp);
  outColor = vec4(vColorOpacity.rgb, alpha);
}`;

export class WebglSplatRenderer {
  private gl: WebGL2RenderingContext;
  private program: WebGLProgram;
  private instanceBuffer: WebGLBuffer;
  private quadBuffer: WebGLBuffer;
  private vao: WebGLVertexArrayObject;
  private capacity = 0;

  constructor(private canvas: HTMLCanvasElement) {
    const gl = canvas.getContext("webgl2", { alpha: true, antialias: false });
    if (!gl) throw new Error("WebGL2 is not available");
    this.gl = gl;
    this.program = this.link(VERT, FRAG);
    this.quadBuffer = gl.createBuffer()!;
    gl.bindBuffer(gl.ARRAY_BUFFER, this.quadBuffer);
    gl.bufferData(gl.ARRAY_BUFFER,
      new Float32Array([-1, -1, 1, -1, -1, 1, 1, 1]), gl.STATIC_DRAW);
    this.instanceBuffer = gl.createBuffer()!;
    this.vao = gl.createVertexArray()!;
    gl.bindVertexArray(this.vao);
    gl.bindBuffer(gl.ARRAY_BUFFER, this.quadBuffer);
    gl.enableVertexAttribArray(0);
    gl.vertexAttribPointer(0, 2, gl.FLOAT, false, 0, 0);
    const stride = 10 * 4;
    gl.bindBuffer(gl.ARRAY_BUFFER, this.instanceBuffer);
    const attribs: [number, number, number][] = [
      [1, 2, 0], // center
      [2, 3, 2 * 4], // conic
      [3, 4, 5 * 4], // rgb + opacity
      [4, 1, 9 * 4], // radius
    ];
    for (const [loc, size, offset] of attribs) {
      gl.enableVertexAttribArray(loc);
      gl.vertexAttribPointer(loc, size, gl.FLOAT, false, stride, offset);
      gl.vertexAttribDivisor(loc, 1);
    }
    gl.bindVertexArray(null);
  }

  private link(vs: string, fs: string): WebGLProgram {
    const gl = this.gl;
    const compile = (type: number, src: string) => {
      const sh = gl.createShader(type)!;
      gl.shaderSource(sh, src);
      gl.compileShader(sh);
      if (!gl.getShaderParameter(sh, gl.COMPILE_STATUS)) {
        throw new Error(`shader: ${gl.getShaderInfoLog(sh)}`);
      }
      return sh;
    };
    const prog = gl.createProgram()!;
    gl.attachShader(prog, compile(gl.VERTEX_SHADER, vs));
    gl.attachShader(prog, compile(gl.FRAGMENT_SHADER, fs));
    gl.linkProgram(prog);
    if (!gl.getProgramParameter(prog, gl.LINK_STATUS)) {
      throw new Error(`link: ${gl.getProgramInfoLog(prog)}`);
    }
    return prog;
  }

  /** Renders and returns the instance count drawn. */
  render(layers: LayerBuffers[], pose: CameraPose, intr: Intrinsics): number {
    const gl = this.gl;
    const P: ProjectedSplats = projectSplats(layers, pose, intr);
    const m = P.order.length;
    const data = new Float32Array(m * 10);
    // back-to-front for painter-style blending
    for (let k = 0; k < m; k++) {
      const s = P.order[m - 1 - k];
      const o = k * 10;
      data[o] = P.meanX[s];
      data[o + 1] = P.meanY[s];
      data[o + 2] = P.conicA[s];
      data[o + 3] = P.conicB[s];
      data[o + 4] = P.conicC[s];
      data[o + 5] = P.colors[s * 3];
      data[o + 6] = P.colors[s * 3 + 1];
      data[o + 7] = P.colors[s * 3 + 2];
      data[o + 8] = P.opacity[s];
      data[o + 9] = P.radius[s];
    }
    gl.bindBuffer(gl.ARRAY_BUFFER, this.instanceBuffer);
    if (m > this.capacity) {
      gl.bufferData(gl.ARRAY_BUFFER, data, gl.DYNAMIC_DRAW);
      this.capacity = m;
    } else {
      gl.bufferSubData(gl.ARRAY_BUFFER, 0, data);
    }

    gl.viewport(0, 0, this.canvas.width, this.canvas.height);
    gl.clearColor(0, 0, 0, 0);
    gl.clear(gl.COLOR_BUFFER_BIT);
    gl.disable(gl.DEPTH_TEST);
    gl.enable(gl.BLEND);
    gl.blendFuncSeparate(gl.SRC_ALPHA, gl.ONE_MINUS_SRC_ALPHA, gl.ONE, gl.ONE_MINUS_SRC_ALPHA);
    gl.useProgram(this.program);
    gl.uniform2f(gl.getUniformLocation(this.program, "viewport"),
      this.canvas.width, this.canvas.height);
    gl.uniform1f(gl.getUniformLocation(this.program, "alphaClamp"), ALPHA_CLAMP);
    gl.bindVertexArray(this.vao);
    gl.drawArraysInstanced(gl.TRIANGLE_STRIP, 0, 4, m);
    gl.bindVertexArray(null);
    return m;
  }

  /** Alpha readback for the hole meter (RGBA8). */
  readPixels(): Uint8Array {
    const gl = this.gl;
    const out = new Uint8Array(this.canvas.width * this.canvas.height * 4);
    gl.readPixels(0, 0, this.canvas.width, this.canvas.height,
      gl.RGBA, gl.UNSIGNED_BYTE, out);
    return out;
  }
}
