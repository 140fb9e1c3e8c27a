/**
 * Minimal RGBA raster with the drawing primitives the figure renderer needs:
 * filled rectangles, 1px and 2px lines, dashed axis lines, markers, and
 * bitmap text.  Everything is integer pixel math, so identical draw calls
 * produce identical buffers.
 */

import { GLYPH_ADVANCE, GLYPH_HEIGHT, GLYPH_WIDTH, glyphRows, textWidth } from "./font.js";

export type Color = readonly [number, number, number];

export const WHITE: Color = [255, 255, 255];
export const BLACK: Color = [30, 30, 30];
export const GRAY: Color = [130, 130, 130];
export const LIGHT_GRAY: Color = [225, 225, 225];

/** Dash pattern as [on, off] pixel run lengths. */
export type Dash = readonly [number, number];

export class Raster {
  readonly width: number;
  readonly height: number;
  readonly data: Uint8Array;

  constructor(width: number, height: number, background: Color = WHITE) {
    if (!Number.isInteger(width) || !Number.isInteger(height) || width <= 0 || height <= 0) {
      throw new Error(`raster size must be positive integers, got ${width}x${height}`);
    }
    this.width = width;
    this.height = height;
    this.data = new Uint8Array(width * height * 4);
    this.fillRect(0, 0, width, height, background);
  }

  set(x: number, y: number, color: Color): void {
    if (x < 0 || y < 0 || x >= this.width || y >= this.height) return;
    const i = (y * this.width + x) * 4;
    this.data[i] = color[0];
    this.data[i + 1] = color[1];
    this.data[i + 2] = color[2];
    this.data[i + 3] = 255;
  }

  fillRect(x0: number, y0: number, w: number, h: number, color: Color): void {
    const xa = Math.max(0, x0);
    const ya = Math.max(0, y0);
    const xb = Math.min(this.width, x0 + w);
    const yb = Math.min(this.height, y0 + h);
    for (let y = ya; y < yb; y++) {
      for (let x = xa; x < xb; x++) {
        const i = (y * this.width + x) * 4;
        this.data[i] = color[0];
        this.data[i + 1] = color[1];
        this.data[i + 2] = color[2];
        this.data[i + 3] = 255;
      }
    }
  }

  /** Horizontal line on row y from x0 to x1 inclusive, optionally dashed. */
  hline(x0: number, x1: number, y: number, color: Color, dash?: Dash): void {
    const [a, b] = x0 <= x1 ? [x0, x1] : [x1, x0];
    for (let x = a; x <= b; x++) {
      if (dash && (x - a) % (dash[0] + dash[1]) >= dash[0]) continue;
      this.set(x, y, color);
    }
  }

  /** Vertical line on column x from y0 to y1 inclusive, optionally dashed. */
  vline(x: number, y0: number, y1: number, color: Color, dash?: Dash): void {
    const [a, b] = y0 <= y1 ? [y0, y1] : [y1, y0];
    for (let y = a; y <= b; y++) {
      if (dash && (y - a) % (dash[0] + dash[1]) >= dash[0]) continue;
      this.set(x, y, color);
    }
  }

  /** Bresenham segment between rounded endpoints; thick=true widens to 2px. */
  line(x0: number, y0: number, x1: number, y1: number, color: Color, thick = false): void {
    let xa = Math.round(x0);
    let ya = Math.round(y0);
    const xb = Math.round(x1);
    const yb = Math.round(y1);
    const dx = Math.abs(xb - xa);
    const dy = -Math.abs(yb - ya);
    const sx = xa < xb ? 1 : -1;
    const sy = ya < yb ? 1 : -1;
    const widenDown = dx >= -dy;
    let err = dx + dy;
    for (;;) {
      this.set(xa, ya, color);
      if (thick) {
        if (widenDown) this.set(xa, ya + 1, color);
        else this.set(xa + 1, ya, color);
      }
      if (xa === xb && ya === yb) break;
      const e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        xa += sx;
      }
      if (e2 <= dx) {
        err += dx;
        ya += sy;
      }
    }
  }

  polyline(xs: readonly number[], ys: readonly number[], color: Color, thick = true): void {
    for (let i = 1; i < xs.length; i++) {
      this.line(xs[i - 1]!, ys[i - 1]!, xs[i]!, ys[i]!, color, thick);
    }
  }

  /** Filled square marker centered on (cx, cy) with the given half-width. */
  marker(cx: number, cy: number, half: number, color: Color): void {
    this.fillRect(Math.round(cx) - half, Math.round(cy) - half, 2 * half + 1, 2 * half + 1, color);
  }

  /** Draw text with its top-left corner at (x, y). */
  text(x: number, y: number, s: string, color: Color, scale = 1): void {
    let cx = x;
    for (const ch of s) {
      const rows = glyphRows(ch);
      for (let r = 0; r < GLYPH_HEIGHT; r++) {
        const bits = rows[r]!;
        for (let c = 0; c < GLYPH_WIDTH; c++) {
          if ((bits >> (GLYPH_WIDTH - 1 - c)) & 1) {
            this.fillRect(cx + c * scale, y + r * scale, scale, scale, color);
          }
        }
      }
      cx += GLYPH_ADVANCE * scale;
    }
  }

  /** Draw text reading bottom-to-top, top-left corner of the run at (x, y). */
  textVertical(x: number, y: number, s: string, color: Color, scale = 1): void {
    const w = textWidth(s, scale);
    let cy = y + w;
    for (const ch of s) {
      const rows = glyphRows(ch);
      for (let r = 0; r < GLYPH_HEIGHT; r++) {
        const bits = rows[r]!;
        for (let c = 0; c < GLYPH_WIDTH; c++) {
          if ((bits >> (GLYPH_WIDTH - 1 - c)) & 1) {
            // Rotate the glyph cell 90 degrees counterclockwise.
            this.fillRect(x + r * scale, cy - (c + 1) * scale, scale, scale, color);
          }
        }
      }
      cy -= GLYPH_ADVANCE * scale;
    }
  }
}

export { textWidth };
