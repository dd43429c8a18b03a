/**
 * Minimal SVG chart builder: line charts (optional filled area under a
 * series) and grouped bar charts, rendered as plain strings with no DOM.
 */

export interface Series {
  label: string;
  x: number[];
  y: (number | null)[];
  color: string;
  /** fill the area between the line and y = 0 (used for shaded AUC) */
  areaFill?: boolean;
  dash?: string;
}

export interface LineChartOpts {
  title: string;
  xLabel: string;
  yLabel: string;
  series: Series[];
  yMin?: number;
  yMax?: number;
  width?: number;
  height?: number;
}

export const PALETTE = ["#4361ee", "#e63946", "#2d6a4f", "#f3722c", "#7209b7", "#277da1"];

const MARGIN = { top: 42, right: 20, bottom: 46, left: 58 };

function fmt(v: number): string {
  return Number.isInteger(v) ? String(v) : v.toPrecision(4).replace(/\.?0+$/, "");
}

function esc(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

function ticks(lo: number, hi: number, count = 5): number[] {
  if (hi === lo) {
    return [lo];
  }
  const step = (hi - lo) / count;
  return Array.from({ length: count + 1 }, (_, i) => lo + i * step);
}

interface Scale {
  (v: number): number;
}

function linearScale(domainLo: number, domainHi: number, rangeLo: number, rangeHi: number): Scale {
  const span = domainHi - domainLo || 1;
  return (v) => rangeLo + ((v - domainLo) / span) * (rangeHi - rangeLo);
}

function frame(opts: { title: string; xLabel: string; yLabel: string; width: number; height: number }): string[] {
  const { title, xLabel, yLabel, width, height } = opts;
  return [
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" viewBox="0 0 ${width} ${height}" font-family="sans-serif">`,
    `<rect width="${width}" height="${height}" fill="white"/>`,
    `<text x="${width / 2}" y="22" text-anchor="middle" font-size="15" font-weight="bold">${esc(title)}</text>`,
    `<text x="${width / 2}" y="${height - 8}" text-anchor="middle" font-size="12">${esc(xLabel)}</text>`,
    `<text x="14" y="${height / 2}" text-anchor="middle" font-size="12" transform="rotate(-90 14 ${height / 2})">${esc(yLabel)}</text>`,
  ];
}

function legend(labels: { label: string; color: string }[], x: number, y: number): string[] {
  const parts: string[] = [];
  labels.forEach((entry, i) => {
    const ly = y + i * 16;
    parts.push(`<rect x="${x}" y="${ly - 9}" width="12" height="12" fill="${entry.color}"/>`);
    parts.push(`<text x="${x + 17}" y="${ly + 1}" font-size="11">${esc(entry.label)}</text>`);
  });
  return parts;
}

export function lineChart(opts: LineChartOpts): string {
  const width = opts.width ?? 640;
  const height = opts.height ?? 400;
  const plotW = width - MARGIN.left - MARGIN.right;
  const plotH = height - MARGIN.top - MARGIN.bottom;

  const xs = opts.series.flatMap((s) => s.x);
  const ys = opts.series.flatMap((s) => s.y.filter((v): v is number => v !== null));
  const xLo = Math.min(...xs);
  const xHi = Math.max(...xs);
  let yLo = opts.yMin ?? Math.min(0, ...ys);
  let yHi = opts.yMax ?? Math.max(...ys);
  if (yLo === yHi) {
    yHi = yLo + 1;
  }
  const sx = linearScale(xLo, xHi, MARGIN.left, MARGIN.left + plotW);
  const sy = linearScale(yLo, yHi, MARGIN.top + plotH, MARGIN.top);

  const parts = frame({ ...opts, width, height });

  for (const t of ticks(yLo, yHi)) {
    const y = sy(t);
    parts.push(`<line x1="${MARGIN.left}" y1="${y}" x2="${MARGIN.left + plotW}" y2="${y}" stroke="#ddd"/>`);
    parts.push(`<text x="${MARGIN.left - 6}" y="${y + 4}" text-anchor="end" font-size="10">${fmt(t)}</text>`);
  }
  for (const t of ticks(xLo, xHi)) {
    const x = sx(t);
    parts.push(`<line x1="${x}" y1="${MARGIN.top + plotH}" x2="${x}" y2="${MARGIN.top + plotH + 4}" stroke="#444"/>`);
    parts.push(`<text x="${x}" y="${MARGIN.top + plotH + 16}" text-anchor="middle" font-size="10">${fmt(t)}</text>`);
  }
  parts.push(
    `<rect x="${MARGIN.left}" y="${MARGIN.top}" width="${plotW}" height="${plotH}" fill="none" stroke="#444"/>`
  );

  for (const series of opts.series) {
    const points = series.x
      .map((x, i) => [x, series.y[i]] as const)
      .filter(([, y]) => y !== null) as [number, number][];
    if (points.length === 0) {
      continue;
    }
    const poly = points.map(([x, y]) => `${sx(x)},${sy(y)}`).join(" ");
    if (series.areaFill) {
      const base = sy(Math.max(yLo, 0));
      const area = `${sx(points[0][0])},${base} ${poly} ${sx(points[points.length - 1][0])},${base}`;
      parts.push(`<polygon points="${area}" fill="${series.color}" opacity="0.15"/>`);
    }
    const dash = series.dash ? ` stroke-dasharray="${series.dash}"` : "";
    parts.push(`<polyline points="${poly}" fill="none" stroke="${series.color}" stroke-width="1.8"${dash}/>`);
    for (const [x, y] of points) {
      parts.push(`<circle cx="${sx(x)}" cy="${sy(y)}" r="2.4" fill="${series.color}"/>`);
    }
  }

  parts.push(...legend(opts.series, MARGIN.left + 10, MARGIN.top + 14));
  parts.push("</svg>");
  return parts.join("\n");
}

export interface BarChartOpts {
  title: string;
  xLabel: string;
  yLabel: string;
  /** tick label per group (e.g. budget segment) */
  groups: string[];
  /** one entry per metric: values[group] */
  series: { label: string; values: (number | null)[]; color: string }[];
  width?: number;
  height?: number;
}

export function barChart(opts: BarChartOpts): string {
  const width = opts.width ?? 640;
  const height = opts.height ?? 400;
  const plotW = width - MARGIN.left - MARGIN.right;
  const plotH = height - MARGIN.top - MARGIN.bottom;

  const values = opts.series.flatMap((s) => s.values.filter((v): v is number => v !== null));
  const yLo = Math.min(0, ...values);
  const yHi = Math.max(0, ...values) || 1;
  const sy = linearScale(yLo, yHi, MARGIN.top + plotH, MARGIN.top);

  const parts = frame({ ...opts, width, height });
  for (const t of ticks(yLo, yHi)) {
    const y = sy(t);
    parts.push(`<line x1="${MARGIN.left}" y1="${y}" x2="${MARGIN.left + plotW}" y2="${y}" stroke="#ddd"/>`);
    parts.push(`<text x="${MARGIN.left - 6}" y="${y + 4}" text-anchor="end" font-size="10">${fmt(t)}</text>`);
  }

  const groupW = plotW / opts.groups.length;
  const barW = (groupW * 0.8) / opts.series.length;
  opts.groups.forEach((group, g) => {
    const x0 = MARGIN.left + g * groupW + groupW * 0.1;
    parts.push(
      `<text x="${MARGIN.left + (g + 0.5) * groupW}" y="${MARGIN.top + plotH + 16}" text-anchor="middle" font-size="10">${esc(group)}</text>`
    );
    opts.series.forEach((series, i) => {
      const v = series.values[g];
      if (v === null) {
        return;
      }
      const y = sy(Math.max(v, 0));
      const h = Math.abs(sy(v) - sy(0));
      parts.push(
        `<rect x="${x0 + i * barW}" y="${y}" width="${barW * 0.92}" height="${h}" fill="${series.color}"/>`
      );
    });
  });
  const zero = sy(0);
  parts.push(`<line x1="${MARGIN.left}" y1="${zero}" x2="${MARGIN.left + plotW}" y2="${zero}" stroke="#444"/>`);
  parts.push(
    `<rect x="${MARGIN.left}" y="${MARGIN.top}" width="${plotW}" height="${plotH}" fill="none" stroke="#444"/>`
  );
  parts.push(...legend(opts.series, MARGIN.left + plotW - 90, MARGIN.top + 14));
  parts.push("</svg>");
  return parts.join("\n");
}
