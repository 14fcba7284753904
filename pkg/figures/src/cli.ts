#!/usr/bin/env node
/** CLI entry: render all figure presets from a results directory. */

import { renderAll } from "./presets";

function main(argv: string[]): number {
  const args = argv.slice(2);
  if (args.length !== 2) {
    console.error("usage: render-figures <results-dir> <out-dir>");
    return 2;
  }
  const [resultsDir, outDir] = args;
  try {
    const written = renderAll(resultsDir, outDir);
    for (const path of written) console.log(path);
  } catch (err) {
    console.error(String(err instanceof Error ? err.message : err));
    return 1;
  }
  return 0;
}

process.exitCode = main(process.argv);
