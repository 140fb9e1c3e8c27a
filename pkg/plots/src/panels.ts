/**
 * Figure model and its rasterization.
 *
 * Figure builders (one per kind) produce a FigureModel: a grid of panels,
 * each holding series, optional reference and zero lines, and optional
 * zero-cross markers.  renderFigure turns the model into pixels.  Keeping
 * the model explicit lets tests assert on what will be drawn (crossings,
 * reference values, flat series) without decoding the image.
 */

import { BLACK, Color, GRAY, LIGHT_GRAY, Raster, textWidth, WHITE } from "./raster.js";
import { formatTick, linearScale, niceTicks, padDomain } from "./scale.js";

export interface SeriesModel {
  label: string;
  xs: number[];
  ys: number[];
  color: Color;
  /** Half-height of an error bar per point (same units as ys). */
  errors?: number[];
}

export interface MarkerModel {
  x: number;
  y: number;
}

export interface PanelModel {
  title: string;
  xLabel: string;
  /** Vertical label left of the axis; empty when the title already names y. */
  yLabel: string;
  series: SeriesModel[];
  /** Horizontal reference line, e.g. the oracle value of a parameter. */
  refY?: number;
  zeroH?: boolean;
  zeroV?: boolean;
  markers?: MarkerModel[];
  showPoints?: boolean;
}

export interface LegendEntry {
  label: string;
  color: Color;
}

export interface FigureModel {
  panels: PanelModel[];
  columns: number;
  legend?: LegendEntry[];
}

/** Series colors, assigned per panel or per legend entry. */
export const PALETTE: readonly Color[] = [
  [31, 119, 180],
  [255, 127, 14],
  [44, 160, 44],
  [214, 39, 40],
  [148, 103, 189],
  [140, 86, 75],
  [227, 119, 194],
  [94, 94, 94],
];

const REF_COLOR: Color = [186, 24, 24];

const PLOT_W = 320;
const PLOT_H = 230;
const M_LEFT = 112;
const M_RIGHT = 14;
const M_TOP = 30;
const M_BOTTOM = 46;
const CELL_W = M_LEFT + PLOT_W + M_RIGHT;
const CELL_H = M_TOP + PLOT_H + M_BOTTOM;
const FIG_MARGIN = 8;
const LEGEND_H = 26;
const TEXT_SCALE = 2;
const TEXT_H = 7 * TEXT_SCALE;

export function renderFigure(model: FigureModel): Raster {
  if (model.panels.length === 0) {
    throw new Error("figure has no panels");
  }
  const cols = Math.max(1, model.columns);
  const rows = Math.ceil(model.panels.length / cols);
  const legendH = model.legend && model.legend.length > 0 ? LEGEND_H : 0;
  const width = 2 * FIG_MARGIN + cols * CELL_W;
  const height = 2 * FIG_MARGIN + legendH + rows * CELL_H;
  const r = new Raster(width, height, WHITE);

  if (model.legend && legendH > 0) {
    drawLegend(r, model.legend, FIG_MARGIN + 4, FIG_MARGIN + 4);
  }
  model.panels.forEach((panel, i) => {
    const cx = FIG_MARGIN + (i % cols) * CELL_W;
    const cy = FIG_MARGIN + legendH + Math.floor(i / cols) * CELL_H;
    drawPanel(r, panel, cx, cy);
  });
  return r;
}

function drawLegend(r: Raster, entries: readonly LegendEntry[], x: number, y: number): void {
  let cx = x;
  for (const entry of entries) {
    r.fillRect(cx, y + TEXT_H / 2 - 2, 16, 4, entry.color);
    r.text(cx + 20, y, entry.label, BLACK, TEXT_SCALE);
    cx += 20 + textWidth(entry.label, TEXT_SCALE) + 24;
  }
}

function seriesExtent(panel: PanelModel): { x: [number, number]; y: [number, number] } {
  let xMin = Infinity;
  let xMax = -Infinity;
  let yMin = Infinity;
  let yMax = -Infinity;
  for (const s of panel.series) {
    for (let i = 0; i < s.xs.length; i++) {
      const x = s.xs[i]!;
      const e = s.errors ? s.errors[i]! : 0;
      const lo = s.ys[i]! - e;
      const hi = s.ys[i]! + e;
      if (x < xMin) xMin = x;
      if (x > xMax) xMax = x;
      if (lo < yMin) yMin = lo;
      if (hi > yMax) yMax = hi;
    }
  }
  if (!Number.isFinite(xMin)) {
    throw new Error(`panel '${panel.title}' has no data points`);
  }
  if (panel.refY !== undefined) {
    yMin = Math.min(yMin, panel.refY);
    yMax = Math.max(yMax, panel.refY);
  }
  if (panel.zeroH) {
    yMin = Math.min(yMin, 0);
    yMax = Math.max(yMax, 0);
  }
  if (panel.zeroV) {
    xMin = Math.min(xMin, 0);
    xMax = Math.max(xMax, 0);
  }
  return { x: [xMin, xMax], y: [yMin, yMax] };
}

function drawPanel(r: Raster, panel: PanelModel, cx: number, cy: number): void {
  const x0 = cx + M_LEFT;
  const y0 = cy + M_TOP;
  const x1 = x0 + PLOT_W - 1;
  const y1 = y0 + PLOT_H - 1;

  const extent = seriesExtent(panel);
  const [xd0, xd1] = padDomain(extent.x[0], extent.x[1], 0.04);
  const [yd0, yd1] = padDomain(extent.y[0], extent.y[1], 0.08);
  const sx = linearScale(xd0, xd1, x0, x1);
  const sy = linearScale(yd0, yd1, y1, y0);

  // Gridlines and ticks.
  const xTicks = niceTicks(sx.domainMin, sx.domainMax, 4);
  const yTicks = niceTicks(sy.domainMin, sy.domainMax, 4);
  const xStep = xTicks.length > 1 ? xTicks[1]! - xTicks[0]! : sx.domainMax - sx.domainMin;
  const yStep = yTicks.length > 1 ? yTicks[1]! - yTicks[0]! : sy.domainMax - sy.domainMin;
  for (const t of xTicks) {
    const px = Math.round(sx.map(t));
    r.vline(px, y0 + 1, y1 - 1, LIGHT_GRAY);
    r.vline(px, y1 + 1, y1 + 4, BLACK);
    const label = formatTick(t, xStep);
    const w = textWidth(label, TEXT_SCALE);
    r.text(Math.round(px - w / 2), y1 + 8, label, BLACK, TEXT_SCALE);
  }
  for (const t of yTicks) {
    const py = Math.round(sy.map(t));
    r.hline(x0 + 1, x1 - 1, py, LIGHT_GRAY);
    r.hline(x0 - 4, x0 - 1, py, BLACK);
    const label = formatTick(t, yStep);
    const w = textWidth(label, TEXT_SCALE);
    const minX = cx + (panel.yLabel ? TEXT_H + 6 : 2);
    r.text(Math.max(minX, x0 - 8 - w), py - TEXT_H / 2, label, BLACK, TEXT_SCALE);
  }

  // Frame.
  r.hline(x0, x1, y0, BLACK);
  r.hline(x0, x1, y1, BLACK);
  r.vline(x0, y0, y1, BLACK);
  r.vline(x1, y0, y1, BLACK);

  // Zero and reference lines sit under the data.
  if (panel.zeroH && sy.domainMin <= 0 && 0 <= sy.domainMax) {
    r.hline(x0 + 1, x1 - 1, Math.round(sy.map(0)), BLACK, [4, 3]);
  }
  if (panel.zeroV && sx.domainMin <= 0 && 0 <= sx.domainMax) {
    r.vline(Math.round(sx.map(0)), y0 + 1, y1 - 1, BLACK, [4, 3]);
  }
  if (panel.refY !== undefined) {
    r.hline(x0 + 1, x1 - 1, Math.round(sy.map(panel.refY)), REF_COLOR, [6, 3]);
  }

  for (const s of panel.series) {
    const px = s.xs.map((v) => sx.map(v));
    const py = s.ys.map((v) => sy.map(v));
    if (s.errors) {
      for (let i = 0; i < px.length; i++) {
        const cxp = Math.round(px[i]!);
        const top = Math.round(sy.map(s.ys[i]! + s.errors[i]!));
        const bot = Math.round(sy.map(s.ys[i]! - s.errors[i]!));
        r.vline(cxp, top, bot, s.color);
        r.hline(cxp - 2, cxp + 2, top, s.color);
        r.hline(cxp - 2, cxp + 2, bot, s.color);
      }
    }
    r.polyline(px, py, s.color, true);
    if (panel.showPoints) {
      for (let i = 0; i < px.length; i++) {
        r.marker(px[i]!, py[i]!, 2, s.color);
      }
    }
  }

  if (panel.markers) {
    for (const m of panel.markers) {
      r.marker(sx.map(m.x), sy.map(m.y), 3, BLACK);
    }
  }

  // Title and axis labels.
  const titleW = textWidth(panel.title, TEXT_SCALE);
  r.text(Math.round(x0 + (PLOT_W - titleW) / 2), cy + 8, panel.title, BLACK, TEXT_SCALE);
  const xlW = textWidth(panel.xLabel, TEXT_SCALE);
  r.text(Math.round(x0 + (PLOT_W - xlW) / 2), y1 + 8 + TEXT_H + 6, panel.xLabel, GRAY, TEXT_SCALE);
  if (panel.yLabel) {
    const ylW = textWidth(panel.yLabel, TEXT_SCALE);
    r.textVertical(cx + 2, Math.round(y0 + (PLOT_H - ylW) / 2), panel.yLabel, GRAY, TEXT_SCALE);
  }
}
