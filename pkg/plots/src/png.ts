/**
 * Deterministic PNG encoding for Raster buffers.
 *
 * Hand-rolled on purpose: the sandbox has no canvas binding, and the golden
 * image tests need byte-stable output, so the encoder emits exactly four
 * chunks (IHDR, pHYs, IDAT, IEND) with no timestamps or ancillary metadata.
 * Scanlines use filter type 0 and a fixed deflate level.
 */

import * as zlib from "node:zlib";

import type { Raster } from "./raster.js";

/** Physical resolution stamped into the pHYs chunk. */
export const DPI = 150;

// 150 dpi expressed as pixels per metre, rounded per the PNG spec.
const PIXELS_PER_METRE = Math.round(DPI / 0.0254);

const SIGNATURE = Buffer.from([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a]);

const CRC_TABLE = new Uint32Array(256);
for (let n = 0; n < 256; n++) {
  let c = n;
  for (let k = 0; k < 8; k++) {
    c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
  }
  CRC_TABLE[n] = c >>> 0;
}

export function crc32(data: Uint8Array): number {
  let c = 0xffffffff;
  for (let i = 0; i < data.length; i++) {
    c = CRC_TABLE[(c ^ data[i]!) & 0xff]! ^ (c >>> 8);
  }
  return (c ^ 0xffffffff) >>> 0;
}

function chunk(type: string, data: Uint8Array): Buffer {
  const out = Buffer.alloc(12 + data.length);
  out.writeUInt32BE(data.length, 0);
  out.write(type, 4, "ascii");
  out.set(data, 8);
  out.writeUInt32BE(crc32(out.subarray(4, 8 + data.length)), 8 + data.length);
  return out;
}

/** Encode an RGBA raster as an 8-bit truecolor-with-alpha PNG. */
export function encodePng(raster: Raster): Buffer {
  const { width, height, data } = raster;

  const ihdr = Buffer.alloc(13);
  ihdr.writeUInt32BE(width, 0);
  ihdr.writeUInt32BE(height, 4);
  ihdr[8] = 8; // bit depth
  ihdr[9] = 6; // color type: RGBA
  ihdr[10] = 0; // compression
  ihdr[11] = 0; // filter method
  ihdr[12] = 0; // no interlace

  const phys = Buffer.alloc(9);
  phys.writeUInt32BE(PIXELS_PER_METRE, 0);
  phys.writeUInt32BE(PIXELS_PER_METRE, 4);
  phys[8] = 1; // unit: metre

  const stride = width * 4;
  const raw = Buffer.alloc((stride + 1) * height);
  for (let y = 0; y < height; y++) {
    raw[y * (stride + 1)] = 0; // filter type None
    raw.set(data.subarray(y * stride, (y + 1) * stride), y * (stride + 1) + 1);
  }
  const idat = zlib.deflateSync(raw, { level: 9 });

  return Buffer.concat([
    SIGNATURE,
    chunk("IHDR", ihdr),
    chunk("pHYs", phys),
    chunk("IDAT", idat),
    chunk("IEND", new Uint8Array(0)),
  ]);
}

export interface DecodedPng {
  width: number;
  height: number;
  /** RGBA, no filtering applied (the encoder only emits filter type 0). */
  data: Uint8Array;
}

/**
 * Decode a PNG produced by encodePng.  Only the subset this module writes is
 * supported; it exists so tests can assert on pixels without a native codec.
 */
export function decodePng(buf: Buffer): DecodedPng {
  if (!buf.subarray(0, 8).equals(SIGNATURE)) {
    throw new Error("not a PNG: bad signature");
  }
  let width = 0;
  let height = 0;
  const idatParts: Buffer[] = [];
  let off = 8;
  while (off < buf.length) {
    const len = buf.readUInt32BE(off);
    const type = buf.toString("ascii", off + 4, off + 8);
    const data = buf.subarray(off + 8, off + 8 + len);
    const stored = buf.readUInt32BE(off + 8 + len);
    const actual = crc32(buf.subarray(off + 4, off + 8 + len));
    if (stored !== actual) {
      throw new Error(`PNG chunk ${type}: CRC mismatch`);
    }
    if (type === "IHDR") {
      width = data.readUInt32BE(0);
      height = data.readUInt32BE(4);
      if (data[8] !== 8 || data[9] !== 6 || data[12] !== 0) {
        throw new Error("unsupported PNG layout (expected 8-bit RGBA, no interlace)");
      }
    } else if (type === "IDAT") {
      idatParts.push(Buffer.from(data));
    }
    off += 12 + len;
  }
  const raw = zlib.inflateSync(Buffer.concat(idatParts));
  const stride = width * 4;
  const out = new Uint8Array(stride * height);
  for (let y = 0; y < height; y++) {
    if (raw[y * (stride + 1)] !== 0) {
      throw new Error("unsupported PNG scanline filter (expected type 0)");
    }
    out.set(raw.subarray(y * (stride + 1) + 1, (y + 1) * (stride + 1)), y * stride);
  }
  return { width, height, data: out };
}
