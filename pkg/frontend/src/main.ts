/**
 * CLI: render run-directory CSV artifacts into SVG figures.
 *
 * Usage:
 *   anytime-rl-plots --kind curves runs/anytime-uniform [runs/grpo-baseline ...]
 *   anytime-rl-plots --kind all runs/anytime-uniform
 *
 * One SVG per figure kind is written next to the source CSVs (into the
 * first run directory for multi-run overlays). Rendering is read-only over
 * the inputs and idempotent. Exit codes: 0 ok, 1 usage, 2 bad/missing
 * header (the failing column is named), 3 CSV has headers but no data rows.
 */

import { existsSync, writeFileSync } from "fs";
import { join } from "path";
import { pathToFileURL } from "url";

import { CsvError } from "./csv.js";
import { FIGURE_KINDS, FIGURE_SOURCES, FigureKind, renderFigure } from "./figures.js";

export function run(argv: string[]): number {
  const args = [...argv];
  let kind = "";
  const runDirs: string[] = [];
  while (args.length > 0) {
    const arg = args.shift()!;
    if (arg === "--kind") {
      kind = args.shift() ?? "";
    } else if (arg === "--help" || arg === "-h") {
      console.log(`usage: anytime-rl-plots --kind <${FIGURE_KINDS.join("|")}|all> <run-dir> [run-dir ...]`);
      return 0;
    } else {
      runDirs.push(arg);
    }
  }
  if (!kind || runDirs.length === 0) {
    console.error(`usage: anytime-rl-plots --kind <${FIGURE_KINDS.join("|")}|all> <run-dir> [run-dir ...]`);
    return 1;
  }
  const kinds: FigureKind[] =
    kind === "all"
      ? FIGURE_KINDS.filter((k) => runDirs.every((dir) => existsSync(join(dir, FIGURE_SOURCES[k].file))))
      : [kind as FigureKind];
  if (kind !== "all" && !FIGURE_KINDS.includes(kind as FigureKind)) {
    console.error(`unknown figure kind "${kind}"; choose from ${FIGURE_KINDS.join(", ")} or all`);
    return 1;
  }
  if (kinds.length === 0) {
    console.error("no renderable CSV artifacts found in the given run directories");
    return 1;
  }
  for (const figureKind of kinds) {
    let svg: string;
    try {
      svg = renderFigure(figureKind, runDirs);
    } catch (error) {
      if (error instanceof CsvError) {
        console.error(error.message);
        return error.kind === "empty" ? 3 : 2;
      }
      if (error instanceof Error && "code" in error && (error as NodeJS.ErrnoException).code === "ENOENT") {
        console.error(`missing input: ${(error as NodeJS.ErrnoException).path}`);
        return 2;
      }
      throw error;
    }
    const out = join(runDirs[0], `${figureKind}.svg`);
    writeFileSync(out, svg);
    console.log(out);
  }
  return 0;
}

if (process.argv[1] !== undefined && import.meta.url === pathToFileURL(process.argv[1]).href) {
  process.exit(run(process.argv.slice(2)));
}
