/**
 * Figure builders: one per artifact kind. Each consumes the documented CSV
 * contract from one or more run directories and returns an SVG string;
 * multi-run inputs are overlaid with one color per run.
 */

import { basename, join } from "path";

import { numbers, readCsv, strings, Table } from "./csv.js";
import { barChart, lineChart, PALETTE, Series } from "./svg.js";

export const FIGURE_KINDS = ["curves", "training", "correlation", "variance", "credit"] as const;
export type FigureKind = (typeof FIGURE_KINDS)[number];

export const FIGURE_SOURCES: Record<FigureKind, { file: string; columns: string[] }> = {
  curves: { file: "curves.csv", columns: ["budget", "accuracy"] },
  training: {
    file: "metrics.csv",
    columns: ["iteration", "anytime_accuracy", "final_accuracy", "mean_thinking_length", "wall_time_s"],
  },
  correlation: { file: "correlation.csv", columns: ["segment", "corr_v1", "corr_v2"] },
  variance: { file: "variance.csv", columns: ["segment", "mode", "ratio"] },
  credit: { file: "credit.csv", columns: ["segment", "R", "V1", "V2", "V", "A"] },
};

interface RunTable {
  name: string;
  table: Table;
}

function loadRuns(runDirs: string[], kind: FigureKind): RunTable[] {
  const source = FIGURE_SOURCES[kind];
  return runDirs.map((dir) => ({
    name: basename(dir.replace(/\/+$/, "")),
    table: readCsv(join(dir, source.file), source.columns),
  }));
}

function requireNumbers(values: (number | null)[], what: string): number[] {
  return values.map((v, i) => {
    if (v === null) {
      throw new Error(`${what}: row ${i + 1} is not numeric`);
    }
    return v;
  });
}

export function accuracyCurveFigure(runDirs: string[]): string {
  const runs = loadRuns(runDirs, "curves");
  const series: Series[] = runs.map((run, i) => ({
    label: run.name,
    x: requireNumbers(numbers(run.table, "budget"), "curves.csv budget"),
    y: numbers(run.table, "accuracy"),
    color: PALETTE[i % PALETTE.length],
    areaFill: true, // shaded area under the curve: the anytime objective
  }));
  return lineChart({
    title: "Accuracy vs thinking budget",
    xLabel: "thinking budget (tokens)",
    yLabel: "accuracy",
    yMin: 0,
    series,
  });
}

export function trainingCurvesFigure(runDirs: string[]): string {
  const runs = loadRuns(runDirs, "training");
  const panels: [string, string][] = [
    ["anytime_accuracy", "anytime accuracy"],
    ["final_accuracy", "final accuracy"],
    ["mean_thinking_length", "mean thinking length"],
  ];
  const charts = panels.map(([column, label]) =>
    lineChart({
      title: label,
      xLabel: "iteration",
      yLabel: label,
      width: 640,
      height: 300,
      series: runs.map((run, i) => ({
        label: run.name,
        x: requireNumbers(numbers(run.table, "iteration"), "metrics.csv iteration"),
        y: numbers(run.table, column),
        color: PALETTE[i % PALETTE.length],
      })),
    })
  );
  // stack the three panels into one vertical SVG
  const height = 300 * charts.length;
  const inner = charts
    .map((svg, i) => `<g transform="translate(0 ${i * 300})">${svg.replace(/^<svg[^>]*>/, "").replace(/<\/svg>$/, "")}</g>`)
    .join("\n");
  return `<svg xmlns="http://www.w3.org/2000/svg" width="640" height="${height}" viewBox="0 0 640 ${height}" font-family="sans-serif">\n${inner}\n</svg>`;
}

export function correlationFigure(runDirs: string[]): string {
  const runs = loadRuns(runDirs, "correlation");
  const series: Series[] = [];
  runs.forEach((run, i) => {
    const segments = requireNumbers(numbers(run.table, "segment"), "correlation.csv segment");
    const suffix = runs.length > 1 ? ` (${run.name})` : "";
    series.push({
      label: `corr(V1, R)${suffix}`,
      x: segments,
      y: numbers(run.table, "corr_v1"),
      color: PALETTE[(2 * i) % PALETTE.length],
    });
    series.push({
      label: `corr(V2, R)${suffix}`,
      x: segments,
      y: numbers(run.table, "corr_v2"),
      color: PALETTE[(2 * i + 1) % PALETTE.length],
      dash: "5,3",
    });
  });
  return lineChart({
    title: "Baseline correlation with the return",
    xLabel: "budget segment",
    yLabel: "Pearson correlation",
    series,
  });
}

export function varianceFigure(runDirs: string[]): string {
  const runs = loadRuns(runDirs, "variance");
  const series: Series[] = [];
  let colorIndex = 0;
  for (const run of runs) {
    const segments = numbers(run.table, "segment");
    const modes = strings(run.table, "mode");
    const ratios = numbers(run.table, "ratio");
    const suffix = runs.length > 1 ? ` (${run.name})` : "";
    for (const mode of [...new Set(modes)]) {
      const x: number[] = [];
      const y: (number | null)[] = [];
      modes.forEach((m, i) => {
        if (m === mode && segments[i] !== null) {
          x.push(segments[i]!);
          y.push(ratios[i]);
        }
      });
      series.push({ label: `${mode}${suffix}`, x, y, color: PALETTE[colorIndex++ % PALETTE.length] });
    }
  }
  return lineChart({
    title: "Normalized advantage variance",
    xLabel: "budget segment",
    yLabel: "Var(R - V) / Var(R)",
    series,
  });
}

export function creditProfileFigure(runDirs: string[]): string {
  const runs = loadRuns(runDirs.slice(0, 1), "credit"); // per-trace profile: no overlay
  const table = runs[0].table;
  const segments = strings(table, "segment").map((s) => `segment ${s}`);
  const metrics: [string, string][] = [
    ["R", "return R"],
    ["V1", "history V1"],
    ["V2", "group V2"],
    ["V", "baseline V"],
    ["A", "advantage A"],
  ];
  return barChart({
    title: "Per-segment credit assignment",
    xLabel: "budget segment",
    yLabel: "value",
    groups: segments,
    series: metrics.map(([column, label], i) => ({
      label,
      values: numbers(table, column),
      color: PALETTE[i % PALETTE.length],
    })),
  });
}

export function renderFigure(kind: FigureKind, runDirs: string[]): string {
  switch (kind) {
    case "curves":
      return accuracyCurveFigure(runDirs);
    case "training":
      return trainingCurvesFigure(runDirs);
    case "correlation":
      return correlationFigure(runDirs);
    case "variance":
      return varianceFigure(runDirs);
    case "credit":
      return creditProfileFigure(runDirs);
  }
}
