/**
 * CNNW container writer.
 *
 * Layout (all integers little-endian u32 unless noted):
 *   magic "CNNW" | version = 1 | tensor count
 *   per tensor: name byte length | UTF-8 name | dtype code (0 = f32)
 *               | ndim | ndim dims | row-major little-endian f32 payload
 *
 * Tensor payloads are written byte-for-byte from the source: no float
 * conversion happens on this side of the pipeline.
 */

import { mkdtempSync, renameSync, rmSync, writeFileSync } from "node:fs";
import { dirname, join } from "node:path";

export interface CnnwTensor {
  name: string;
  shape: number[];
  /** Little-endian f32 payload; byteLength must equal 4 * prod(shape). */
  bytes: Uint8Array;
}

const MAGIC = new TextEncoder().encode("CNNW");
const DTYPE_F32 = 0;

export function encodeCnnw(tensors: CnnwTensor[]): Uint8Array {
  let total = 12;
  const names: Uint8Array[] = [];
  for (const t of tensors) {
    const name = new TextEncoder().encode(t.name);
    names.push(name);
    const elems = t.shape.reduce((a, b) => a * b, 1);
    if (t.bytes.byteLength !== 4 * elems) {
      throw new Error(
        `tensor ${JSON.stringify(t.name)}: ${t.bytes.byteLength} payload bytes ` +
        `do not match shape [${t.shape.join(", ")}]`,
      );
    }
    total += 4 + name.byteLength + 4 + 4 + 4 * t.shape.length + t.bytes.byteLength;
  }

  const out = new Uint8Array(total);
  const view = new DataView(out.buffer);
  out.set(MAGIC, 0);
  view.setUint32(4, 1, true);
  view.setUint32(8, tensors.length, true);
  let pos = 12;
  tensors.forEach((t, i) => {
    const name = names[i]!;
    view.setUint32(pos, name.byteLength, true);
    pos += 4;
    out.set(name, pos);
    pos += name.byteLength;
    view.setUint32(pos, DTYPE_F32, true);
    pos += 4;
    view.setUint32(pos, t.shape.length, true);
    pos += 4;
    for (const dim of t.shape) {
      view.setUint32(pos, dim, true);
      pos += 4;
    }
    out.set(t.bytes, pos);
    pos += t.bytes.byteLength;
  });
  return out;
}

/** Write via a sibling temp file and rename so readers never see a torso. */
export function writeCnnwFile(path: string, tensors: CnnwTensor[]): void {
  const data = encodeCnnw(tensors);
  const tmpDir = mkdtempSync(join(dirname(path), ".cnnw-"));
  const tmpPath = join(tmpDir, "out.cnnw");
  try {
    writeFileSync(tmpPath, data);
    renameSync(tmpPath, path);
  } finally {
    rmSync(tmpDir, { recursive: true, force: true });
  }
}
