/** Error taxonomy mirrored on the consumer's CLI exit-code contract. */

export class ExporterError extends Error {}

/** Architecture text could not be parsed (usage-level, exit 2). */
export class NetSpecError extends ExporterError {}

/** Checkpoint or side file is malformed or unreadable (exit 3). */
export class CheckpointError extends ExporterError {}

/** Mapping does not validate against the target net (exit 4). */
export class MappingError extends ExporterError {}
