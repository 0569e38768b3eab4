/**
 * Minimal PNG decoder for the exporter's inputs: 8-bit grayscale, RGB, or
 * RGBA, non-interlaced (exactly what the core's view exporter writes).
 */

import * as zlib from "node:zlib";

import { ImageDecodeError } from "./errors";

const SIGNATURE = Buffer.from([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a]);

export interface DecodedImage {
  width: number;
  height: number;
  channels: number; // 1, 3, or 4
  data: Uint8Array; // row-major, channel-interleaved
}

const CHANNELS_BY_COLOR_TYPE: Record<number, number> = { 0: 1, 2: 3, 4: 2, 6: 4 };

export function decodePng(buf: Buffer, path: string): DecodedImage {
  if (buf.length < 8 || !buf.subarray(0, 8).equals(SIGNATURE)) {
    throw new ImageDecodeError(path, "bad PNG signature");
  }
  let offset = 8;
  let width = 0;
  let height = 0;
  let bitDepth = 0;
  let colorType = 0;
  let interlace = 0;
  const idat: Buffer[] = [];
  let sawIhdr = false;
  let sawIend = false;

  while (offset < buf.length) {
    if (offset + 8 > buf.length) {
      throw new ImageDecodeError(path, `truncated chunk header at ${offset}`);
    }
    const length = buf.readUInt32BE(offset);
    const type = buf.toString("latin1", offset + 4, offset + 8);
    const dataStart = offset + 8;
    if (dataStart + length + 4 > buf.length) {
      throw new ImageDecodeError(path, `truncated ${type} chunk at ${offset}`);
    }
    const data = buf.subarray(dataStart, dataStart + length);
    if (type === "IHDR") {
      if (length !== 13) throw new ImageDecodeError(path, "malformed IHDR");
      width = data.readUInt32BE(0);
      height = data.readUInt32BE(4);
      bitDepth = data[8];
      colorType = data[9];
      interlace = data[12];
      sawIhdr = true;
    } else if (type === "IDAT") {
      idat.push(data);
    } else if (type === "IEND") {
      sawIend = true;
      break;
    }
    offset = dataStart + length + 4; // skip CRC
  }

  if (!sawIhdr) throw new ImageDecodeError(path, "missing IHDR chunk");
  if (!sawIend) throw new ImageDecodeError(path, "missing IEND chunk");
  if (bitDepth !== 8) throw new ImageDecodeError(path, `unsupported bit depth ${bitDepth}`);
  if (interlace !== 0) throw new ImageDecodeError(path, "interlaced PNG unsupported");
  const channels = CHANNELS_BY_COLOR_TYPE[colorType];
  if (channels === undefined || colorType === 4) {
    throw new ImageDecodeError(path, `unsupported color type ${colorType}`);
  }
  if (width === 0 || height === 0) throw new ImageDecodeError(path, "empty image");
  if (idat.length === 0) throw new ImageDecodeError(path, "no IDAT data");

  let raw: Buffer;
  try {
    raw = zlib.inflateSync(Buffer.concat(idat));
  } catch (err) {
    throw new ImageDecodeError(path, `zlib inflate failed: ${(err as Error).message}`);
  }

  const stride = width * channels;
  if (raw.length !== height * (stride + 1)) {
    throw new ImageDecodeError(
      path, `decompressed size ${raw.length} != expected ${height * (stride + 1)}`);
  }

  const out = new Uint8Array(height * stride);
  let prevRow = new Uint8Array(stride); // zeros above the first scanline
  for (let y = 0; y < height; y++) {
    const filter = raw[y * (stride + 1)];
    const row = raw.subarray(y * (stride + 1) + 1, (y + 1) * (stride + 1));
    const cur = out.subarray(y * stride, (y + 1) * stride);
    switch (filter) {
      case 0:
        cur.set(row);
        break;
      case 1: // Sub
        for (let i = 0; i < stride; i++) {
          const left = i >= channels ? cur[i - channels] : 0;
          cur[i] = (row[i] + left) & 0xff;
        }
        break;
      case 2: // Up
        for (let i = 0; i < stride; i++) {
          cur[i] = (row[i] + prevRow[i]) & 0xff;
        }
        break;
      case 3: // Average
        for (let i = 0; i < stride; i++) {
          const left = i >= channels ? cur[i - channels] : 0;
          cur[i] = (row[i] + ((left + prevRow[i]) >> 1)) & 0xff;
        }
        break;
      case 4: // Paeth
        for (let i = 0; i < stride; i++) {
          const left = i >= channels ? cur[i - channels] : 0;
          const up = prevRow[i];
          const upLeft = i >= channels ? prevRow[i - channels] : 0;
          const p = left + up - upLeft;
          const pa = Math.abs(p - left);
          const pb = Math.abs(p - up);
          const pc = Math.abs(p - upLeft);
          const pred = pa <= pb && pa <= pc ? left : pb <= pc ? up : upLeft;
          cur[i] = (row[i] + pred) & 0xff;
        }
        break;
      default:
        throw new ImageDecodeError(path, `unknown scanline filter ${filter} on row ${y}`);
    }
    prevRow = cur;
  }

  return { width, height, channels, data: out };
}
