/**
 * Measured-vs-baseline bar chart.
 *
 * Geometry is computed as plain numbers first so tests can assert on bar
 * heights without a DOM; the SVG string is a direct transcription of that
 * layout. Bar heights are strictly proportional to kWh, which keeps visual
 * comparisons honest: if the measured day sits within a couple of percent of
 * a baseline, so do the pixels.
 */

import type { ModeComparison } from "./types.js";

export type Bar = {
  label: string;
  kind: "actual" | "baseline";
  kwh: number;
  x: number;
  y: number;
  width: number;
  height: number;
};

export type GridLine = { y: number; kwh: number };

export type ChartLayout = {
  width: number;
  height: number;
  bars: Bar[];
  grid: GridLine[];
  maxKwh: number;
};

export type ChartOptions = {
  width?: number;
  height?: number;
  barWidth?: number;
  gap?: number;
  padTop?: number;
  padBottom?: number;
  padLeft?: number;
};

const DEFAULTS = {
  height: 220,
  barWidth: 64,
  gap: 28,
  padTop: 18,
  padBottom: 34,
  padLeft: 46,
};

/** Smallest 1/2/5-scaled value at or above x, for a tidy axis ceiling. */
export function niceCeiling(x: number): number {
  if (!(x > 0)) return 1;
  const exp = Math.floor(Math.log10(x));
  const base = Math.pow(10, exp);
  for (const step of [1, 2, 5, 10]) {
    if (step * base >= x - 1e-12) return step * base;
  }
  return 10 * base;
}

/**
 * Lay out one measured bar beside one bar per baseline mode.
 *
 * Baselines are ordered by estimate, largest first, so the chart reads as a
 * descent from the most permissive schedule down to the leanest one.
 */
export function layoutComparison(
  actualKwh: number,
  modes: Record<string, ModeComparison>,
  opts: ChartOptions = {},
): ChartLayout {
  const o = { ...DEFAULTS, ...opts };
  const entries = Object.entries(modes).sort(
    (a, b) => b[1].estimate_kwh - a[1].estimate_kwh || a[0].localeCompare(b[0]),
  );
  const values: { label: string; kind: Bar["kind"]; kwh: number }[] = [
    { label: "measured", kind: "actual", kwh: actualKwh },
    ...entries.map(([mode, row]) => ({
      label: mode,
      kind: "baseline" as const,
      kwh: row.estimate_kwh,
    })),
  ];

  const maxKwh = niceCeiling(Math.max(0, ...values.map((v) => v.kwh)));
  const innerHeight = o.height - o.padTop - o.padBottom;
  const width =
    opts.width ?? o.padLeft + values.length * (o.barWidth + o.gap) + o.gap;

  const bars: Bar[] = values.map((v, i) => {
    const height = maxKwh > 0 ? (innerHeight * v.kwh) / maxKwh : 0;
    return {
      label: v.label,
      kind: v.kind,
      kwh: v.kwh,
      x: o.padLeft + o.gap + i * (o.barWidth + o.gap),
      y: o.padTop + innerHeight - height,
      width: o.barWidth,
      height,
    };
  });

  const grid: GridLine[] = [];
  for (let i = 0; i <= 4; i++) {
    const kwh = (maxKwh * i) / 4;
    grid.push({ y: o.padTop + innerHeight - (innerHeight * i) / 4, kwh });
  }

  return { width, height: o.height, bars, grid, maxKwh };
}

function esc(value: string): string {
  return value
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

const fmt = (x: number) => (Math.abs(x) >= 100 ? x.toFixed(0) : x.toFixed(2));

export function chartSvg(layout: ChartLayout): string {
  const parts: string[] = [];
  parts.push(
    `<svg class="comparison-chart" viewBox="0 0 ${layout.width} ${layout.height}" ` +
      `width="${layout.width}" height="${layout.height}" role="img" ` +
      `aria-label="measured energy against per-mode baselines">`,
  );
  for (const line of layout.grid) {
    parts.push(
      `<line class="grid" x1="40" y1="${line.y.toFixed(1)}" ` +
        `x2="${layout.width}" y2="${line.y.toFixed(1)}"></line>`,
    );
    parts.push(
      `<text class="tick" x="36" y="${(line.y + 4).toFixed(1)}" text-anchor="end">` +
        `${fmt(line.kwh)}</text>`,
    );
  }
  for (const bar of layout.bars) {
    parts.push(
      `<rect class="bar ${bar.kind}" data-label="${esc(bar.label)}" ` +
        `x="${bar.x.toFixed(1)}" y="${bar.y.toFixed(1)}" ` +
        `width="${bar.width}" height="${bar.height.toFixed(1)}"></rect>`,
    );
    parts.push(
      `<text class="value" x="${(bar.x + bar.width / 2).toFixed(1)}" ` +
        `y="${(bar.y - 5).toFixed(1)}" text-anchor="middle">${fmt(bar.kwh)}</text>`,
    );
    parts.push(
      `<text class="label" x="${(bar.x + bar.width / 2).toFixed(1)}" ` +
        `y="${(layout.height - 12).toFixed(1)}" text-anchor="middle">${esc(bar.label)}</text>`,
    );
  }
  parts.push("</svg>");
  return parts.join("");
}
