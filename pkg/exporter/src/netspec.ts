/**
 * Architecture descriptions: the line-oriented .net DSL, shape tracing,
 * and the tensor shapes each trainable layer expects.
 *
 * Grammar (one directive per line, `#` starts a comment):
 *   input <C> <H> <W>
 *   conv <name> <out_channels> <KH>x<KW> [stride <s>] [pad <p>]
 *   relu <name>
 *   pool <name> <KH>x<KW> [stride <s>]
 *   fc <name> <out_features>
 *   softmax <name>
 */

import { readFileSync } from "node:fs";

import { NetSpecError } from "./errors.js";

export interface ConvLayer {
  kind: "conv";
  name: string;
  outChannels: number;
  kernel: [number, number];
  stride: number;
  pad: number;
}

export interface ReluLayer {
  kind: "relu";
  name: string;
}

export interface PoolLayer {
  kind: "pool";
  name: string;
  window: [number, number];
  stride: number;
}

export interface FcLayer {
  kind: "fc";
  name: string;
  outFeatures: number;
}

export interface SoftmaxLayer {
  kind: "softmax";
  name: string;
}

export type Layer = ConvLayer | ReluLayer | PoolLayer | FcLayer | SoftmaxLayer;

export interface NetSpec {
  inputShape: [number, number, number]; // (channels, height, width)
  layers: Layer[];
}

function fail(message: string, line?: number): never {
  throw new NetSpecError(line === undefined ? message : `line ${line}: ${message}`);
}

function parseInt32(token: string, what: string, line: number): number {
  if (!/^-?\d+$/.test(token)) {
    fail(`${what}: expected integer, got ${JSON.stringify(token)}`, line);
  }
  return Number(token);
}

function parseKernel(token: string, line: number): [number, number] {
  const parts = token.split("x");
  if (parts.length !== 2) {
    fail(`expected <KH>x<KW>, got ${JSON.stringify(token)}`, line);
  }
  return [
    parseInt32(parts[0]!, "kernel height", line),
    parseInt32(parts[1]!, "kernel width", line),
  ];
}

function parseOptions(
  tokens: string[],
  allowed: string[],
  line: number,
): Map<string, number> {
  const opts = new Map<string, number>();
  for (let i = 0; i < tokens.length; i += 2) {
    const key = tokens[i]!;
    if (!allowed.includes(key)) fail(`unknown option ${JSON.stringify(key)}`, line);
    if (opts.has(key)) fail(`option ${JSON.stringify(key)} given twice`, line);
    if (i + 1 >= tokens.length) {
      fail(`option ${JSON.stringify(key)} missing its value`, line);
    }
    opts.set(key, parseInt32(tokens[i + 1]!, key, line));
  }
  return opts;
}

export function parseNetspec(text: string): NetSpec {
  let inputShape: [number, number, number] | null = null;
  const layers: Layer[] = [];
  const names = new Set<string>();
  let fcSeen = false;

  text.split("\n").forEach((raw, idx) => {
    const lineno = idx + 1;
    const line = raw.split("#", 1)[0]!.trim();
    if (!line) return;
    const tokens = line.split(/\s+/);
    const keyword = tokens[0]!;
    const args = tokens.slice(1);

    if (keyword === "input") {
      if (inputShape !== null) fail("duplicate input directive", lineno);
      if (args.length !== 3) fail("input takes exactly <C> <H> <W>", lineno);
      inputShape = [
        parseInt32(args[0]!, "input dim", lineno),
        parseInt32(args[1]!, "input dim", lineno),
        parseInt32(args[2]!, "input dim", lineno),
      ];
      if (inputShape.some((d) => d < 1)) {
        fail(`input shape ${inputShape.join("x")} has dims < 1`, lineno);
      }
      return;
    }
    if (inputShape === null) fail("input directive must precede any layer", lineno);

    let layer: Layer;
    if (keyword === "conv") {
      if (args.length < 3) fail("conv takes <name> <out_channels> <KH>x<KW>", lineno);
      const opts = parseOptions(args.slice(3), ["stride", "pad"], lineno);
      layer = {
        kind: "conv",
        name: args[0]!,
        outChannels: parseInt32(args[1]!, "out_channels", lineno),
        kernel: parseKernel(args[2]!, lineno),
        stride: opts.get("stride") ?? 1,
        pad: opts.get("pad") ?? 0,
      };
      if (layer.kernel[0] < 1 || layer.kernel[1] < 1 || layer.stride < 1 ||
          layer.pad < 0 || layer.outChannels < 1) {
        fail(`conv ${layer.name}: bad parameters`, lineno);
      }
    } else if (keyword === "relu") {
      if (args.length !== 1) fail("relu takes exactly <name>", lineno);
      layer = { kind: "relu", name: args[0]! };
    } else if (keyword === "pool") {
      if (args.length < 2) fail("pool takes <name> <KH>x<KW>", lineno);
      const opts = parseOptions(args.slice(2), ["stride"], lineno);
      layer = {
        kind: "pool",
        name: args[0]!,
        window: parseKernel(args[1]!, lineno),
        stride: opts.get("stride") ?? 1,
      };
      if (layer.window[0] < 1 || layer.window[1] < 1 || layer.stride < 1) {
        fail(`pool ${layer.name}: bad parameters`, lineno);
      }
    } else if (keyword === "fc") {
      if (args.length !== 2) fail("fc takes <name> <out_features>", lineno);
      layer = {
        kind: "fc",
        name: args[0]!,
        outFeatures: parseInt32(args[1]!, "out_features", lineno),
      };
      if (layer.outFeatures < 1) fail(`fc ${layer.name}: out_features < 1`, lineno);
    } else if (keyword === "softmax") {
      if (args.length !== 1) fail("softmax takes exactly <name>", lineno);
      layer = { kind: "softmax", name: args[0]! };
    } else {
      fail(`unknown layer keyword ${JSON.stringify(keyword)}`, lineno);
    }

    if (names.has(layer.name)) {
      fail(`duplicate layer name ${JSON.stringify(layer.name)}`, lineno);
    }
    names.add(layer.name);
    if (layer.kind === "fc") fcSeen = true;
    else if ((layer.kind === "conv" || layer.kind === "pool") && fcSeen) {
      fail(`conv/pool layer ${JSON.stringify(layer.name)} after fc`, lineno);
    }
    layers.push(layer);
  });

  if (inputShape === null) fail("missing input directive");
  const net: NetSpec = { inputShape, layers };
  shapeTrace(net); // rejects underflowing spatial dims
  return net;
}

function outDim(size: number, k: number, stride: number, pad: number): number {
  return Math.floor((size + 2 * pad - k) / stride) + 1;
}

/** Output shape of every layer in order; fc flattens, relu/softmax pass through. */
export function shapeTrace(net: NetSpec): Array<[string, number[]]> {
  let shape: number[] = [...net.inputShape];
  const out: Array<[string, number[]]> = [];
  for (const layer of net.layers) {
    if (layer.kind === "conv") {
      const [, h, w] = shape as [number, number, number];
      const oh = outDim(h, layer.kernel[0], layer.stride, layer.pad);
      const ow = outDim(w, layer.kernel[1], layer.stride, layer.pad);
      if (oh < 1 || ow < 1) {
        fail(`layer ${JSON.stringify(layer.name)}: output shape ${oh}x${ow} underflows`);
      }
      shape = [layer.outChannels, oh, ow];
    } else if (layer.kind === "pool") {
      const [c, h, w] = shape as [number, number, number];
      const oh = outDim(h, layer.window[0], layer.stride, 0);
      const ow = outDim(w, layer.window[1], layer.stride, 0);
      if (oh < 1 || ow < 1) {
        fail(`layer ${JSON.stringify(layer.name)}: output shape ${oh}x${ow} underflows`);
      }
      shape = [c, oh, ow];
    } else if (layer.kind === "fc") {
      shape = [layer.outFeatures];
    }
    out.push([layer.name, shape]);
  }
  return out;
}

export interface TensorShapes {
  weight: number[];
  bias: number[];
}

/**
 * Weight/bias shapes for every trainable layer, keyed by layer name and
 * listed in network order.  Conv weights are (out, in, kh, kw); fc weights
 * are (out_features, in_features) over the flattened input.
 */
export function expectedTensorShapes(net: NetSpec): Map<string, TensorShapes> {
  let shape: number[] = [...net.inputShape];
  const out = new Map<string, TensorShapes>();
  const trace = shapeTrace(net);
  net.layers.forEach((layer, i) => {
    if (layer.kind === "conv") {
      out.set(layer.name, {
        weight: [layer.outChannels, shape[0]!, layer.kernel[0], layer.kernel[1]],
        bias: [layer.outChannels],
      });
    } else if (layer.kind === "fc") {
      const inFeatures = shape.reduce((a, b) => a * b, 1);
      out.set(layer.name, {
        weight: [layer.outFeatures, inFeatures],
        bias: [layer.outFeatures],
      });
    }
    shape = trace[i]![1];
  });
  return out;
}

export const BUILTIN_NETS: Record<string, string> = {
  alexcnn: `input 3 224 224
conv c1 96 11x11 stride 4 pad 2
relu r1
pool p1 2x2 stride 2
conv c2 256 5x5 stride 1 pad 1
relu r2
pool p2 2x2 stride 2
conv c3 384 3x3 stride 1 pad 1
relu r3
conv c4 384 3x3 stride 1 pad 1
relu r4
conv c5 256 3x3 stride 1 pad 1
relu r5
pool p5 2x2 stride 2
fc fc6 4096
relu r6
fc fc7 4096
relu r7
fc fc8 1000
softmax prob
`,
  vggcnn16: `input 3 224 224
conv c1_1 64 3x3 stride 1 pad 1
relu r1_1
conv c1_2 64 3x3 stride 1 pad 1
relu r1_2
pool p1 2x2 stride 2
conv c2_1 128 3x3 stride 1 pad 1
relu r2_1
conv c2_2 128 3x3 stride 1 pad 1
relu r2_2
pool p2 2x2 stride 2
conv c3_1 256 3x3 stride 1 pad 1
relu r3_1
conv c3_2 256 3x3 stride 1 pad 1
relu r3_2
conv c3_3 256 3x3 stride 1 pad 1
relu r3_3
pool p3 2x2 stride 2
conv c4_1 512 3x3 stride 1 pad 1
relu r4_1
conv c4_2 512 3x3 stride 1 pad 1
relu r4_2
conv c4_3 512 3x3 stride 1 pad 1
relu r4_3
pool p4 2x2 stride 2
conv c5_1 512 3x3 stride 1 pad 1
relu r5_1
conv c5_2 512 3x3 stride 1 pad 1
relu r5_2
conv c5_3 512 3x3 stride 1 pad 1
relu r5_3
pool p5 2x2 stride 2
fc fc6 4096
relu r6
fc fc7 4096
relu r7
fc fc8 1000
softmax prob
`,
};

/** Resolve `--net`: a builtin name, or a path to a .net file. */
export function resolveNet(nameOrPath: string): NetSpec {
  const builtin = BUILTIN_NETS[nameOrPath];
  if (builtin !== undefined) return parseNetspec(builtin);
  let text: string;
  try {
    text = readFileSync(nameOrPath, "utf-8");
  } catch {
    const known = Object.keys(BUILTIN_NETS).join(", ");
    throw new NetSpecError(
      `net ${JSON.stringify(nameOrPath)} is neither a builtin (${known}) ` +
      "nor a readable .net file",
    );
  }
  return parseNetspec(text);
}
