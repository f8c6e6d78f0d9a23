/**
 * Minimal safetensors reader/writer.
 *
 * Layout: u64 LE header length, UTF-8 JSON header, raw tensor buffer.
 * Header maps tensor name -> { dtype, shape, data_offsets: [begin, end] }
 * with offsets relative to the start of the buffer that follows the
 * header. Only F32 payloads are accepted here: export is a byte-copy,
 * never a re-quantization.
 */

import { CheckpointError } from "./errors.js";

export interface TensorView {
  dtype: string;
  shape: number[];
  /** Raw little-endian payload bytes, unconverted. */
  bytes: Uint8Array;
}

export type Checkpoint = Map<string, TensorView>;

const MAX_HEADER = 100 * 1024 * 1024;

export function parseSafetensors(data: Uint8Array): Checkpoint {
  if (data.byteLength < 8) {
    throw new CheckpointError(
      `file too short for a safetensors header (${data.byteLength} bytes)`,
    );
  }
  const view = new DataView(data.buffer, data.byteOffset, data.byteLength);
  const headerLen = view.getBigUint64(0, true);
  if (headerLen > BigInt(MAX_HEADER) || 8n + headerLen > BigInt(data.byteLength)) {
    throw new CheckpointError(`implausible header length ${headerLen}`);
  }
  const headerEnd = 8 + Number(headerLen);
  let header: Record<string, unknown>;
  try {
    header = JSON.parse(new TextDecoder("utf-8", { fatal: true })
      .decode(data.subarray(8, headerEnd)));
  } catch (err) {
    throw new CheckpointError(`header is not valid JSON: ${(err as Error).message}`);
  }
  if (header === null || typeof header !== "object" || Array.isArray(header)) {
    throw new CheckpointError("header must be a JSON object");
  }

  const body = data.subarray(headerEnd);
  const tensors: Checkpoint = new Map();
  for (const [name, raw] of Object.entries(header)) {
    if (name === "__metadata__") continue;
    const entry = raw as { dtype?: unknown; shape?: unknown; data_offsets?: unknown };
    const { dtype, shape, data_offsets } = entry;
    if (typeof dtype !== "string" || !Array.isArray(shape) ||
        !Array.isArray(data_offsets) || data_offsets.length !== 2) {
      throw new CheckpointError(`tensor ${quoted(name)}: malformed header entry`);
    }
    const dims = shape.map((d) => {
      if (typeof d !== "number" || !Number.isInteger(d) || d < 0) {
        throw new CheckpointError(`tensor ${quoted(name)}: bad dimension ${d}`);
      }
      return d;
    });
    const [begin, end] = data_offsets as [number, number];
    if (!Number.isInteger(begin) || !Number.isInteger(end) ||
        begin < 0 || end < begin || end > body.byteLength) {
      throw new CheckpointError(
        `tensor ${quoted(name)}: data_offsets [${begin}, ${end}] outside buffer ` +
        `of ${body.byteLength} bytes`,
      );
    }
    const elems = dims.reduce((a, b) => a * b, 1);
    const itemSize = dtypeSize(name, dtype);
    if (end - begin !== elems * itemSize) {
      throw new CheckpointError(
        `tensor ${quoted(name)}: payload is ${end - begin} bytes but shape ` +
        `[${dims.join(", ")}] as ${dtype} needs ${elems * itemSize}`,
      );
    }
    tensors.set(name, { dtype, shape: dims, bytes: body.subarray(begin, end) });
  }
  return tensors;
}

function dtypeSize(name: string, dtype: string): number {
  const sizes: Record<string, number> = {
    F64: 8, F32: 4, F16: 2, BF16: 2, I64: 8, I32: 4, I16: 2, I8: 1, U8: 1, BOOL: 1,
  };
  const size = sizes[dtype];
  if (size === undefined) {
    throw new CheckpointError(`tensor ${quoted(name)}: unknown dtype ${quoted(dtype)}`);
  }
  return size;
}

/** Serialize raw tensor entries; used by tests to build synthetic checkpoints. */
export function writeSafetensorsRaw(
  tensors: Iterable<[string, { dtype: string; shape: number[]; bytes: Uint8Array }]>,
): Uint8Array {
  const header: Record<string, unknown> = {};
  const blobs: Uint8Array[] = [];
  let offset = 0;
  for (const [name, t] of tensors) {
    header[name] = {
      dtype: t.dtype,
      shape: t.shape,
      data_offsets: [offset, offset + t.bytes.byteLength],
    };
    blobs.push(t.bytes);
    offset += t.bytes.byteLength;
  }
  const headerBytes = new TextEncoder().encode(JSON.stringify(header));
  const out = new Uint8Array(8 + headerBytes.byteLength + offset);
  new DataView(out.buffer).setBigUint64(0, BigInt(headerBytes.byteLength), true);
  out.set(headerBytes, 8);
  let pos = 8 + headerBytes.byteLength;
  for (const blob of blobs) {
    out.set(blob, pos);
    pos += blob.byteLength;
  }
  return out;
}

/** Serialize F32 tensors; the common case for synthetic checkpoints. */
export function writeSafetensors(
  tensors: Iterable<[string, { shape: number[]; data: Float32Array }]>,
): Uint8Array {
  const raw: Array<[string, { dtype: string; shape: number[]; bytes: Uint8Array }]> = [];
  for (const [name, t] of tensors) {
    raw.push([name, {
      dtype: "F32",
      shape: t.shape,
      bytes: new Uint8Array(t.data.buffer, t.data.byteOffset, t.data.byteLength),
    }]);
  }
  return writeSafetensorsRaw(raw);
}

function quoted(value: string): string {
  return JSON.stringify(value);
}
