/**
 * Checkpoint -> CNNW export.
 *
 * The mapping is validated against the net before the checkpoint is
 * touched, per-tensor shapes are checked against what the net requires,
 * and accepted payloads are copied into the CNNW container byte-for-byte
 * (no float conversion).  Output order is network layer order, weight
 * before bias, dataset mean last.
 */

import { readFileSync } from "node:fs";

import { writeCnnwFile, type CnnwTensor } from "./cnnw.js";
import { CheckpointError, MappingError } from "./errors.js";
import { parseMappingTsv, validateMapping, type MappingRow } from "./mapping.js";
import {
  expectedTensorShapes,
  resolveNet,
  type NetSpec,
  type TensorShapes,
} from "./netspec.js";
import { parseSafetensors, type Checkpoint, type TensorView } from "./safetensors.js";

const MEAN_KEY = "__mean__";

export interface ExportOptions {
  src: string;
  map: string;
  net: string;
  out: string;
  mean?: string;
}

export interface ExportManifest {
  net: NetSpec;
  /** Validated mapping rows in network layer order. */
  rows: MappingRow[];
  shapes: Map<string, TensorShapes>;
}

export interface ExportSummary {
  tensors: number;
  bytes: number;
  hasMean: boolean;
}

export function buildManifest(net: NetSpec, rows: MappingRow[]): ExportManifest {
  return { net, rows: validateMapping(rows, net), shapes: expectedTensorShapes(net) };
}

function readBinary(path: string, what: string): Uint8Array {
  try {
    return readFileSync(path);
  } catch (err) {
    throw new CheckpointError(`cannot read ${what} ${JSON.stringify(path)}: ` +
      `${(err as Error).message}`);
  }
}

function requireF32(name: string, view: TensorView): void {
  if (view.dtype !== "F32") {
    throw new CheckpointError(
      `tensor ${JSON.stringify(name)} is ${view.dtype}; only F32 checkpoints ` +
      "are supported (payloads are copied bit-for-bit)",
    );
  }
}

function sameShape(a: number[], b: number[]): boolean {
  return a.length === b.length && a.every((d, i) => d === b[i]);
}

function fetchTensor(
  checkpoint: Checkpoint,
  source: string,
  target: string,
  part: "weight" | "bias",
  want: number[],
): TensorView {
  const key = `${source}.${part}`;
  const view = checkpoint.get(key);
  if (view === undefined) {
    throw new MappingError(
      `checkpoint has no tensor ${JSON.stringify(key)} ` +
      `(mapped to layer ${JSON.stringify(target)})`,
    );
  }
  requireF32(key, view);
  if (!sameShape(view.shape, want)) {
    throw new MappingError(
      `layer ${JSON.stringify(target)} ${part}: checkpoint shape ` +
      `[${view.shape.join(", ")}] does not match net shape [${want.join(", ")}]`,
    );
  }
  return view;
}

function checkMeanShape(view: TensorView, net: NetSpec, origin: string): void {
  const [c, h, w] = net.inputShape;
  if (c !== 3) {
    // The weight container only carries RGB dataset means.
    throw new MappingError(
      `${origin}: cannot export a mean for a ${c}-channel net`,
    );
  }
  const ok = sameShape(view.shape, [c]) || sameShape(view.shape, [c, h, w]);
  if (!ok) {
    throw new MappingError(
      `${origin}: mean shape [${view.shape.join(", ")}] is neither per-channel ` +
      `[${c}] nor a full mean image [${c}, ${h}, ${w}]`,
    );
  }
}

/** Load the dataset mean from the --mean side file (one F32 tensor). */
function loadMeanFile(path: string, net: NetSpec): TensorView {
  const tensors = parseSafetensors(readBinary(path, "mean file"));
  const entries = [...tensors.entries()];
  const view = tensors.get(MEAN_KEY) ?? (entries.length === 1 ? entries[0]![1] : undefined);
  if (view === undefined) {
    throw new CheckpointError(
      `mean file ${JSON.stringify(path)} must hold a single tensor ` +
      `or one named ${JSON.stringify(MEAN_KEY)} (found ${entries.length})`,
    );
  }
  requireF32(MEAN_KEY, view);
  checkMeanShape(view, net, `mean file ${JSON.stringify(path)}`);
  return view;
}

export function runExport(opts: ExportOptions): ExportSummary {
  const net = resolveNet(opts.net);
  const mapText = new TextDecoder().decode(readBinary(opts.map, "mapping file"));
  const manifest = buildManifest(net, parseMappingTsv(mapText));

  const checkpoint = parseSafetensors(readBinary(opts.src, "checkpoint"));

  const out: CnnwTensor[] = [];
  for (const { source, target } of manifest.rows) {
    const want = manifest.shapes.get(target)!;
    const weight = fetchTensor(checkpoint, source, target, "weight", want.weight);
    const bias = fetchTensor(checkpoint, source, target, "bias", want.bias);
    out.push({ name: `${target}.weight`, shape: weight.shape, bytes: weight.bytes });
    out.push({ name: `${target}.bias`, shape: bias.shape, bytes: bias.bytes });
  }

  let mean: TensorView | undefined;
  if (opts.mean !== undefined) {
    mean = loadMeanFile(opts.mean, net);
  } else {
    mean = checkpoint.get(MEAN_KEY);
    if (mean !== undefined) {
      requireF32(MEAN_KEY, mean);
      checkMeanShape(mean, net, "checkpoint mean");
    }
  }
  if (mean !== undefined) {
    out.push({ name: MEAN_KEY, shape: mean.shape, bytes: mean.bytes });
  }

  writeCnnwFile(opts.out, out);
  return {
    tensors: out.length,
    bytes: out.reduce((a, t) => a + t.bytes.byteLength, 0),
    hasMean: mean !== undefined,
  };
}
