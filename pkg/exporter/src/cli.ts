#!/usr/bin/env node
/**
 * cnnw-export command line.
 *
 *   cnnw-export export --src model.safetensors --map names.tsv \
 *                      --net alexcnn --out model.cnnw [--mean mean.safetensors]
 *
 * Exit codes: 0 success, 2 usage or net description errors, 3 unreadable or
 * malformed input files, 4 mapping and shape validation errors.
 */

import { realpathSync } from "node:fs";
import { fileURLToPath } from "node:url";
import { parseArgs } from "node:util";

import { CheckpointError, MappingError, NetSpecError } from "./errors.js";
import { runExport } from "./export.js";
import { BUILTIN_NETS } from "./netspec.js";

const USAGE = `usage: cnnw-export export --src <checkpoint.safetensors> --map <names.tsv>
                          --net <${Object.keys(BUILTIN_NETS).join("|")}|spec.net> --out <weights.cnnw>
                          [--mean <mean.safetensors>]

Converts an F32 safetensors checkpoint into a CNNW weight file.  The mapping
TSV pairs checkpoint tensor prefixes with net layer names and must cover
every conv and fc layer exactly once.  Tensor payloads are copied
bit-for-bit; the dataset mean is taken from a __mean__ tensor in the
checkpoint or from the --mean side file.`;

export function main(argv: string[]): number {
  if (argv.length === 0 || argv[0] === "--help" || argv[0] === "-h") {
    console.log(USAGE);
    return argv.length === 0 ? 2 : 0;
  }
  const command = argv[0]!;
  if (command !== "export") {
    console.error(`unknown command ${JSON.stringify(command)}\n${USAGE}`);
    return 2;
  }

  let values: Record<string, string | boolean | undefined>;
  try {
    ({ values } = parseArgs({
      args: argv.slice(1),
      options: {
        src: { type: "string" },
        map: { type: "string" },
        net: { type: "string" },
        out: { type: "string" },
        mean: { type: "string" },
        help: { type: "boolean", short: "h" },
      },
      allowPositionals: false,
    }));
  } catch (err) {
    console.error(`${(err as Error).message}\n${USAGE}`);
    return 2;
  }
  if (values.help) {
    console.log(USAGE);
    return 0;
  }
  for (const required of ["src", "map", "net", "out"] as const) {
    if (typeof values[required] !== "string") {
      console.error(`missing required option --${required}\n${USAGE}`);
      return 2;
    }
  }

  try {
    const summary = runExport({
      src: values.src as string,
      map: values.map as string,
      net: values.net as string,
      out: values.out as string,
      mean: values.mean as string | undefined,
    });
    const meanNote = summary.hasMean ? " (including dataset mean)" : "";
    console.log(
      `wrote ${summary.tensors} tensors${meanNote}, ` +
      `${summary.bytes} payload bytes, to ${values.out}`,
    );
    return 0;
  } catch (err) {
    if (err instanceof NetSpecError) {
      console.error(`net error: ${err.message}`);
      return 2;
    }
    if (err instanceof CheckpointError) {
      console.error(`input error: ${err.message}`);
      return 3;
    }
    if (err instanceof MappingError) {
      console.error(`mapping error: ${err.message}`);
      return 4;
    }
    throw err;
  }
}

const entry = process.argv[1];
if (entry !== undefined &&
    fileURLToPath(import.meta.url) === realpathSync(entry)) {
  process.exit(main(process.argv.slice(2)));
}
