export { readTable, readReferenceValues, requireColumns, requireSchema, numericColumn, SchemaError } from "./csv.js";
export type { Table, Cell } from "./csv.js";
export { planFigure, renderToPng, renderToFile, zeroCrossings, FIGURE_KINDS } from "./figures.js";
export type { FigureKind, FigureSpec, RenderResult } from "./figures.js";
export { renderFigure, PALETTE } from "./panels.js";
export type { FigureModel, PanelModel, SeriesModel, MarkerModel, LegendEntry } from "./panels.js";
export { encodePng, decodePng, crc32, DPI } from "./png.js";
export { Raster, BLACK, WHITE, GRAY, LIGHT_GRAY } from "./raster.js";
export type { Color } from "./raster.js";
export { linearScale, niceTicks, formatTick, padDomain } from "./scale.js";
export { runCli } from "./cli.js";
