/**
 * Builders for the three figure kinds, from riskql CSV tables to a
 * FigureModel, plus the top-level render entry point.
 *
 * Everything here is presentation: the builders reorganize columns that the
 * CLI already computed and never rerun any statistics.  The one derived
 * quantity is the zero-crossing position on sweep panels, which is linear
 * interpolation between adjacent plotted points.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { numericColumn, readReferenceValues, readTable, requireColumns, requireSchema, SchemaError, Table } from "./csv.js";
import { FigureModel, MarkerModel, PALETTE, PanelModel, renderFigure } from "./panels.js";
import { encodePng } from "./png.js";

export type FigureKind = "convergence" | "curves" | "sweep";

export const FIGURE_KINDS: readonly FigureKind[] = ["convergence", "curves", "sweep"];

export interface FigureSpec {
  kind: FigureKind;
  /** Input CSV paths; convergence takes one, the others accept several. */
  inputs: string[];
  /** Output PNG path. */
  output: string;
  /** Optional oracle-params CSV providing horizontal reference lines. */
  refs?: string;
}

// training-log columns that are diagnostics rather than model parameters.
const NON_PARAM_COLUMNS = new Set([
  "episode",
  "delta_norm_theta",
  "delta_norm_psi",
  "terminal_payoff",
]);

/**
 * X positions where the piecewise-linear curve through (xs, ys) meets y = 0.
 * Points must be sorted by x.  Exact zeros count once.
 */
export function zeroCrossings(xs: readonly number[], ys: readonly number[]): number[] {
  const out: number[] = [];
  for (let i = 0; i < xs.length; i++) {
    if (ys[i] === 0) {
      out.push(xs[i]!);
      continue;
    }
    if (i + 1 < xs.length && ys[i + 1] !== 0 && ys[i]! * ys[i + 1]! < 0) {
      const t = ys[i]! / (ys[i]! - ys[i + 1]!);
      out.push(xs[i]! + t * (xs[i + 1]! - xs[i]!));
    }
  }
  return out;
}

function loadRefs(spec: FigureSpec): Map<string, number> {
  return spec.refs ? readReferenceValues(spec.refs) : new Map<string, number>();
}

function buildConvergence(spec: FigureSpec): FigureModel {
  if (spec.inputs.length !== 1) {
    throw new SchemaError(
      `convergence takes exactly one training-log CSV, got ${spec.inputs.length}`,
    );
  }
  const table = readTable(spec.inputs[0]!);
  requireSchema(table, "training-log");
  const episodes = numericColumn(table, "episode");
  const paramColumns = table.columns.filter((c) => !NON_PARAM_COLUMNS.has(c));
  if (paramColumns.length === 0) {
    throw new SchemaError(`${table.source}: no parameter columns besides ${[...NON_PARAM_COLUMNS].join(", ")}`);
  }
  const refs = loadRefs(spec);
  const panels: PanelModel[] = paramColumns.map((name, i) => ({
    title: name,
    xLabel: "episode",
    yLabel: "",
    series: [
      {
        label: name,
        xs: episodes,
        ys: numericColumn(table, name),
        color: PALETTE[i % PALETTE.length]!,
      },
    ],
    refY: refs.get(name),
  }));
  return { panels, columns: panels.length > 4 ? 4 : panels.length };
}

interface PolicyCurves {
  policy: string;
  time: number[];
  meanReturn: number[];
  mv: number[];
}

function curvesFromTable(table: Table): PolicyCurves[] {
  requireSchema(table, "evaluation-curves");
  const time = numericColumn(table, "time");
  const policies = table.columns
    .filter((c) => c.endsWith("_mean_return"))
    .map((c) => c.slice(0, -"_mean_return".length));
  if (policies.length === 0) {
    throw new SchemaError(`${table.source}: no '<policy>_mean_return' columns found`);
  }
  return policies.map((policy) => {
    requireColumns(table, [`${policy}_mv`]);
    return {
      policy,
      time,
      meanReturn: numericColumn(table, `${policy}_mean_return`),
      mv: numericColumn(table, `${policy}_mv`),
    };
  });
}

function buildCurves(spec: FigureSpec): FigureModel {
  const tables = spec.inputs.map(readTable);
  const all: PolicyCurves[] = [];
  for (const table of tables) {
    for (const pc of curvesFromTable(table)) {
      if (all.some((p) => p.policy === pc.policy)) {
        throw new SchemaError(`${table.source}: duplicate policy '${pc.policy}'`);
      }
      if (all.length > 0) {
        const first = all[0]!;
        const same =
          first.time.length === pc.time.length &&
          first.time.every((t, i) => t === pc.time[i]);
        if (!same) {
          throw new SchemaError(
            `${table.source}: time grid differs from ${tables[0]!.source}; curves must share one grid`,
          );
        }
      }
      all.push(pc);
    }
  }
  const metrics: { title: string; pick: (p: PolicyCurves) => number[] }[] = [
    { title: "mean_return", pick: (p) => p.meanReturn },
    { title: "mv", pick: (p) => p.mv },
  ];
  const panels: PanelModel[] = metrics.map((metric) => ({
    title: metric.title,
    xLabel: "time",
    yLabel: "",
    series: all.map((p, i) => ({
      label: p.policy,
      xs: p.time,
      ys: metric.pick(p),
      color: PALETTE[i % PALETTE.length]!,
    })),
  }));
  const legend = all.map((p, i) => ({ label: p.policy, color: PALETTE[i % PALETTE.length]! }));
  return { panels, columns: 2, legend };
}

function buildSweep(spec: FigureSpec): FigureModel {
  const order: string[] = [];
  const groups = new Map<string, { offsets: number[]; means: number[]; errs: number[] }>();
  for (const input of spec.inputs) {
    const table = readTable(input);
    requireSchema(table, "sweep");
    requireColumns(table, ["parameter", "offset", "mean_update", "stderr"]);
    const offsets = numericColumn(table, "offset");
    const means = numericColumn(table, "mean_update");
    const errs = numericColumn(table, "stderr");
    table.rows.forEach((row, i) => {
      const name = String(row.parameter);
      let g = groups.get(name);
      if (!g) {
        g = { offsets: [], means: [], errs: [] };
        groups.set(name, g);
        order.push(name);
      }
      g.offsets.push(offsets[i]!);
      g.means.push(means[i]!);
      g.errs.push(errs[i]!);
    });
  }
  const panels: PanelModel[] = order.map((name, i) => {
    const g = groups.get(name)!;
    const idx = g.offsets.map((_, j) => j).sort((a, b) => g.offsets[a]! - g.offsets[b]!);
    const xs = idx.map((j) => g.offsets[j]!);
    const ys = idx.map((j) => g.means[j]!);
    // Error bars cover +-1.96 standard errors.
    const errors = idx.map((j) => 1.96 * g.errs[j]!);
    const markers: MarkerModel[] = zeroCrossings(xs, ys).map((x) => ({ x, y: 0 }));
    return {
      title: name,
      xLabel: "offset",
      yLabel: "mean_update",
      series: [{ label: name, xs, ys, color: PALETTE[i % PALETTE.length]!, errors }],
      zeroH: true,
      zeroV: true,
      markers,
      showPoints: true,
    };
  });
  return { panels, columns: panels.length > 4 ? 4 : panels.length };
}

/** Build the drawing model for a figure without rasterizing it. */
export function planFigure(spec: FigureSpec): FigureModel {
  if (spec.inputs.length === 0) {
    throw new SchemaError("no input CSV given");
  }
  switch (spec.kind) {
    case "convergence":
      return buildConvergence(spec);
    case "curves":
      return buildCurves(spec);
    case "sweep":
      return buildSweep(spec);
    default:
      throw new SchemaError(`unknown figure kind '${String(spec.kind)}'`);
  }
}

export interface RenderResult {
  width: number;
  height: number;
  png: Buffer;
}

/** Render a figure to PNG bytes. */
export function renderToPng(spec: FigureSpec): RenderResult {
  const model = planFigure(spec);
  const raster = renderFigure(model);
  return { width: raster.width, height: raster.height, png: encodePng(raster) };
}

/** Render a figure and write the PNG to spec.output (atomically). */
export function renderToFile(spec: FigureSpec): RenderResult {
  const result = renderToPng(spec);
  const dir = path.dirname(spec.output);
  fs.mkdirSync(dir, { recursive: true });
  const tmp = `${spec.output}.tmp`;
  fs.writeFileSync(tmp, result.png);
  fs.renameSync(tmp, spec.output);
  return result;
}
