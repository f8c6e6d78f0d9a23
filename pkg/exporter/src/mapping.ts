/**
 * Checkpoint-to-net name mapping.
 *
 * The mapping file is TSV with two columns per row: source tensor prefix in
 * the checkpoint, target layer name in the net.  A valid mapping covers
 * every conv and fc layer of the net exactly once; validation happens
 * entirely against the net description, before any checkpoint is opened.
 */

import { MappingError } from "./errors.js";
import type { NetSpec } from "./netspec.js";

export interface MappingRow {
  source: string;
  target: string;
}

export function parseMappingTsv(text: string): MappingRow[] {
  const rows: MappingRow[] = [];
  text.split("\n").forEach((raw, idx) => {
    const line = raw.split("#", 1)[0]!.trim();
    if (!line) return;
    const cols = line.split("\t").map((c) => c.trim());
    if (cols.length !== 2 || !cols[0] || !cols[1]) {
      throw new MappingError(
        `line ${idx + 1}: expected 2 tab-separated columns ` +
        "(source_name, target_name)",
      );
    }
    rows.push({ source: cols[0], target: cols[1] });
  });
  return rows;
}

/**
 * Check the mapping against the net: every conv/fc layer mapped exactly
 * once, no unknown or non-trainable targets, no reused sources.  Returns
 * rows reordered to network layer order.
 */
export function validateMapping(rows: MappingRow[], net: NetSpec): MappingRow[] {
  const trainable = net.layers
    .filter((l) => l.kind === "conv" || l.kind === "fc")
    .map((l) => l.name);
  const trainableSet = new Set(trainable);

  const byTarget = new Map<string, string>();
  const seenSources = new Set<string>();
  for (const { source, target } of rows) {
    if (!trainableSet.has(target)) {
      throw new MappingError(
        `target ${JSON.stringify(target)} is not a conv or fc layer of the net`,
      );
    }
    if (byTarget.has(target)) {
      throw new MappingError(`target ${JSON.stringify(target)} mapped more than once`);
    }
    if (seenSources.has(source)) {
      throw new MappingError(`source ${JSON.stringify(source)} used more than once`);
    }
    byTarget.set(target, source);
    seenSources.add(source);
  }

  const missing = trainable.filter((name) => !byTarget.has(name));
  if (missing.length > 0) {
    throw new MappingError(
      `mapping does not cover layer${missing.length > 1 ? "s" : ""} ` +
      missing.map((n) => JSON.stringify(n)).join(", "),
    );
  }
  return trainable.map((target) => ({ source: byTarget.get(target)!, target }));
}
