// End-to-end checks against the Python toolkit that consumes CNNW files:
// exported tensors must survive the trip bit-for-bit, and a forward pass
// through the exported weights must match this side's reference framework.

import { spawnSync } from "node:child_process";
import { mkdtempSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import * as tf from "@tensorflow/tfjs";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { encodeCnnw } from "../dist/cnnw.js";
import { writeSafetensors } from "../dist/safetensors.js";

const CLI = join(dirname(fileURLToPath(import.meta.url)), "..", "dist", "cli.js");
const tmp = mkdtempSync(join(tmpdir(), "integration-"));
afterAll(() => rmSync(tmp, { recursive: true, force: true }));

// Bridge into the Python package: validates the exported file with its own
// reader and reports either raw payload hex or forward-pass activations.
const BRIDGE = `
import json
import sys

import numpy as np

from cnnscope import (parse_netspec, read_tensors, read_weights, run_forward,
                      validate_weights)

mode, net_path, weights_path = sys.argv[1], sys.argv[2], sys.argv[3]
with open(net_path) as fh:
    net = parse_netspec(fh.read())
weights, mean = read_weights(weights_path)
validate_weights(net, weights)

if mode == "hexdump":
    raw = read_tensors(weights_path)
    out = {
        "names": list(raw),
        "shapes": {k: list(v.shape) for k, v in raw.items()},
        "hex": {k: v.tobytes().hex() for k, v in raw.items()},
    }
else:
    x = read_tensors(sys.argv[4])["x"].astype(np.float32)
    trace = run_forward(net, weights, x)
    out = {k: np.asarray(v, np.float64).ravel().tolist()
           for k, v in trace.activations.items()}
json.dump(out, sys.stdout)
`;

let bridgePath: string;
beforeAll(() => {
  bridgePath = join(tmp, "bridge.py");
  writeFileSync(bridgePath, BRIDGE);
});

function python(...args: string[]): any {
  const res = spawnSync("python3", [bridgePath, ...args], {
    encoding: "utf-8",
    maxBuffer: 64 * 1024 * 1024,
  });
  expect(res.error, String(res.error)).toBeUndefined();
  expect(res.status, res.stderr).toBe(0);
  return JSON.parse(res.stdout);
}

function exportCnnw(dir: string, mapping: string, netText: string,
                    tensors: Array<[string, { shape: number[]; data: Float32Array }]>) {
  const src = join(dir, "model.safetensors");
  const map = join(dir, "names.tsv");
  const net = join(dir, "net.net");
  const out = join(dir, "weights.cnnw");
  writeFileSync(src, writeSafetensors(tensors));
  writeFileSync(map, mapping);
  writeFileSync(net, netText);
  const res = spawnSync(process.execPath,
    [CLI, "export", "--src", src, "--map", map, "--net", net, "--out", out],
    { encoding: "utf-8" });
  expect(res.status, res.stderr).toBe(0);
  return { net, out };
}

function hexOf(arr: Float32Array): string {
  return Buffer.from(arr.buffer, arr.byteOffset, arr.byteLength).toString("hex");
}

function setBits(arr: Float32Array, index: number, bits: number): void {
  new DataView(arr.buffer).setUint32(4 * index, bits >>> 0, true);
}

/** Small deterministic PRNG so both sides see identical f32 data. */
function rng(seed: number): () => number {
  let s = seed >>> 0;
  return () => {
    s = (s + 0x6d2b79f5) >>> 0;
    let t = Math.imul(s ^ (s >>> 15), 1 | s);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function randomF32(n: number, seed: number, scale = 1): Float32Array {
  const next = rng(seed);
  const arr = new Float32Array(n);
  for (let i = 0; i < n; i++) arr[i] = Math.fround((next() * 2 - 1) * scale);
  return arr;
}

describe("round-trip through the Python reader", () => {
  it("recovers every exported payload bit-for-bit", () => {
    const dir = mkdtempSync(join(tmp, "bits-"));
    const convW = randomF32(2 * 3 * 3 * 3, 11);
    // Payloads that would not survive any float re-encoding sloppiness:
    setBits(convW, 0, 0x80000000); // -0.0
    setBits(convW, 1, 0x00000001); // smallest denormal
    setBits(convW, 2, 0x7f7fffff); // largest finite
    setBits(convW, 3, 0x7fc00abc); // NaN with payload bits
    setBits(convW, 4, 0xff800000); // -inf
    const convB = randomF32(2, 12);
    const fcW = randomF32(4 * 2 * 3 * 3, 13);
    const fcB = randomF32(4, 14);
    const mean = randomF32(3, 15, 100);

    const { net, out } = exportCnnw(
      dir,
      "stage0.conv\tc1\nhead.linear\tfc1\n",
      "input 3 6 6\nconv c1 2 3x3 stride 1 pad 1\nrelu r1\npool p1 2x2 stride 2\nfc fc1 4\nsoftmax prob\n",
      [
        ["stage0.conv.weight", { shape: [2, 3, 3, 3], data: convW }],
        ["stage0.conv.bias", { shape: [2], data: convB }],
        ["head.linear.weight", { shape: [4, 18], data: fcW }],
        ["head.linear.bias", { shape: [4], data: fcB }],
        ["__mean__", { shape: [3], data: mean }],
      ],
    );

    const got = python("hexdump", net, out);
    expect(got.names).toEqual(
      ["c1.weight", "c1.bias", "fc1.weight", "fc1.bias", "__mean__"],
    );
    expect(got.shapes["c1.weight"]).toEqual([2, 3, 3, 3]);
    expect(got.hex["c1.weight"]).toBe(hexOf(convW));
    expect(got.hex["c1.bias"]).toBe(hexOf(convB));
    expect(got.hex["fc1.weight"]).toBe(hexOf(fcW));
    expect(got.hex["fc1.bias"]).toBe(hexOf(fcB));
    expect(got.hex["__mean__"]).toBe(hexOf(mean));
  });
});

describe("forward agreement on a (2, 8, 8) input", () => {
  const C = 2, H = 8, W = 8;
  const OUT = 3; // conv filters
  const NET = `input ${C} ${H} ${W}
conv c1 ${OUT} 3x3 stride 1 pad 1
relu r1
pool p1 2x2 stride 2
fc fc1 4
softmax prob
`;

  // Filters 0 and 1 are delta kernels: a single unit tap at an off-center
  // position, so the conv output is an exactly known shifted copy of one
  // input channel.  Any layout transposition shows up immediately.
  const convW = new Float32Array(OUT * C * 3 * 3);
  convW[(((0 * C + 0) * 3 + 0) * 3) + 2] = 1; // filter 0: in 0, kh 0, kw 2
  convW[(((1 * C + 1) * 3 + 2) * 3) + 1] = 1; // filter 1: in 1, kh 2, kw 1
  randomF32(C * 3 * 3, 21, 0.5).forEach((v, i) => {
    convW[(2 * C * 3 * 3) + i] = v; // filter 2: dense random taps
  });
  const convB = Float32Array.from([0.1, -0.2, 0.05]);
  const fcW = randomF32(4 * OUT * 4 * 4, 22, 0.2);
  const fcB = randomF32(4, 23, 0.1);
  const x = randomF32(C * H * W, 24);

  function chwToHwc(data: Float32Array, c: number, h: number, w: number): Float32Array {
    const out = new Float32Array(data.length);
    for (let ci = 0; ci < c; ci++) {
      for (let hi = 0; hi < h; hi++) {
        for (let wi = 0; wi < w; wi++) {
          out[(hi * w + wi) * c + ci] = data[ci * h * w + hi * w + wi]!;
        }
      }
    }
    return out;
  }

  function hwcToChw(data: Float32Array, c: number, h: number, w: number): Float32Array {
    const out = new Float32Array(data.length);
    for (let ci = 0; ci < c; ci++) {
      for (let hi = 0; hi < h; hi++) {
        for (let wi = 0; wi < w; wi++) {
          out[ci * h * w + hi * w + wi] = data[(hi * w + wi) * c + ci]!;
        }
      }
    }
    return out;
  }

  function oihwToHwio(w: Float32Array, o: number, i: number,
                      kh: number, kw: number): Float32Array {
    const out = new Float32Array(w.length);
    for (let oo = 0; oo < o; oo++) {
      for (let ii = 0; ii < i; ii++) {
        for (let hh = 0; hh < kh; hh++) {
          for (let ww = 0; ww < kw; ww++) {
            out[((hh * kw + ww) * i + ii) * o + oo] =
              w[((oo * i + ii) * kh + hh) * kw + ww]!;
          }
        }
      }
    }
    return out;
  }

  function maxAbsDiff(a: number[] | Float32Array, b: number[] | Float32Array): number {
    expect(a.length).toBe(b.length);
    let worst = 0;
    for (let i = 0; i < a.length; i++) {
      worst = Math.max(worst, Math.abs((a[i] as number) - (b[i] as number)));
    }
    return worst;
  }

  it("matches the reference framework within 1e-5 on every layer", async () => {
    const dir = mkdtempSync(join(tmp, "fwd-"));
    const { net, out } = exportCnnw(
      dir,
      "features.0\tc1\nclassifier.0\tfc1\n",
      NET,
      [
        ["features.0.weight", { shape: [OUT, C, 3, 3], data: convW }],
        ["features.0.bias", { shape: [OUT], data: convB }],
        ["classifier.0.weight", { shape: [4, OUT * 4 * 4], data: fcW }],
        ["classifier.0.bias", { shape: [4], data: fcB }],
      ],
    );

    const xPath = join(dir, "x.cnnw");
    writeFileSync(xPath, encodeCnnw([{
      name: "x",
      shape: [C, H, W],
      bytes: new Uint8Array(x.buffer, x.byteOffset, x.byteLength),
    }]));
    const theirs = python("forward", net, out, xPath);

    await tf.setBackend("cpu");
    const x4 = tf.tensor4d(chwToHwc(x, C, H, W), [1, H, W, C]);
    const k4 = tf.tensor4d(oihwToHwio(convW, OUT, C, 3, 3), [3, 3, C, OUT]);
    const conv = tf.add(tf.conv2d(x4, k4, [1, 1], 1), tf.tensor1d(convB));
    const relu = tf.relu(conv);
    const pool = tf.maxPool(relu as tf.Tensor4D, [2, 2], [2, 2], "valid");
    // CNNW fc weights act on the flattened (channels, rows, cols) block, so
    // permute NHWC back before the matmul.
    const flat = tf.reshape(tf.transpose(pool, [0, 3, 1, 2]), [1, OUT * 4 * 4]);
    const fc = tf.add(tf.matMul(flat, tf.tensor2d(fcW, [4, OUT * 4 * 4]), false, true),
                      tf.tensor1d(fcB));
    const prob = tf.softmax(fc);

    const mine = {
      c1: hwcToChw(await conv.data() as Float32Array, OUT, H, W),
      r1: hwcToChw(await relu.data() as Float32Array, OUT, H, W),
      p1: hwcToChw(await pool.data() as Float32Array, OUT, 4, 4),
      fc1: await fc.data() as Float32Array,
      prob: await prob.data() as Float32Array,
    };

    let worst = 0;
    for (const layer of ["c1", "r1", "p1", "fc1", "prob"] as const) {
      const diff = maxAbsDiff(theirs[layer], mine[layer]);
      expect(diff, `layer ${layer} disagrees by ${diff}`).toBeLessThanOrEqual(1e-5);
      worst = Math.max(worst, diff);
    }
    console.log(`forward agreement on (${C}, ${H}, ${W}): worst |diff| = ${worst}`);

    // Ground truth for the delta filters: a shifted input channel plus bias.
    const c1 = theirs.c1 as number[];
    const at = (o: number, r: number, c: number) => c1[(o * H + r) * W + c]!;
    const xAt = (ci: number, r: number, c: number) =>
      r >= 0 && r < H && c >= 0 && c < W ? x[ci * H * W + r * W + c]! : 0;
    for (const [r, c] of [[0, 0], [0, 7], [3, 4], [7, 0], [7, 7], [5, 2]] as const) {
      expect(Math.abs(at(0, r, c) - (xAt(0, r - 1, c + 1) + 0.1)))
        .toBeLessThanOrEqual(1e-6);
      expect(Math.abs(at(1, r, c) - (xAt(1, r + 1, c) - 0.2)))
        .toBeLessThanOrEqual(1e-6);
    }
  });
});
