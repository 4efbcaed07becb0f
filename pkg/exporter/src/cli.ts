#!/usr/bin/env node
/**
 * cascadekit-export: write .npy prediction arrays as a cascadekit pool.
 *
 *   cascadekit-export export --labels labels.npy --out pool \
 *       --entry model_id=b5#0,type=b5,cost=10.3,logits=b5_0.npy \
 *       --entry model_id=b3#0,type=b3,cost=1.8,logits=b3_0.npy
 */

import { parseArgs } from "node:util";

import { exportPool, parseEntrySpec } from "./pool.js";

const USAGE =
  "usage: cascadekit-export export --labels <labels.npy> --out <dir> " +
  "--entry model_id=...,type=...,cost=...,logits=<file.npy>[,resolution=N][,replicate=N] [--entry ...]";

export function main(argv: string[]): number {
  if (argv[0] !== "export") {
    console.error(USAGE);
    return 1;
  }
  let parsed;
  try {
    parsed = parseArgs({
      args: argv.slice(1),
      options: {
        labels: { type: "string" },
        out: { type: "string" },
        entry: { type: "string", multiple: true },
      },
    });
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    console.error(USAGE);
    return 1;
  }
  const { labels, out, entry } = parsed.values;
  if (!labels || !out || !entry || entry.length === 0) {
    console.error(USAGE);
    return 1;
  }
  try {
    const manifestPath = exportPool({
      labelsPath: labels,
      outDir: out,
      entries: entry.map(parseEntrySpec),
    });
    console.log(manifestPath);
    return 0;
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  import.meta.url === new URL(`file://${process.argv[1]}`).href;
if (invokedDirectly) {
  process.exit(main(process.argv.slice(2)));
}
