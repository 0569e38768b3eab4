/**
 * FMX v1 writer/reader, matching the core's Feature Interchange Format:
 * magic "FMX1" | u32 version | u64 n | u64 d | u8 dtype=0 (f64)
 * | u64 xxhash64(payload, seed 0) | row-major little-endian payload.
 */

import { xxhash64 } from "./xxhash64";

const MAGIC = Buffer.from("FMX1", "latin1");

export function encodeFmx(rows: Float64Array[], d: number): Buffer {
  const n = rows.length;
  const payload = Buffer.alloc(n * d * 8);
  for (let i = 0; i < n; i++) {
    if (rows[i].length !== d) {
      throw new Error(`row ${i} has length ${rows[i].length}, expected ${d}`);
    }
    for (let j = 0; j < d; j++) {
      payload.writeDoubleLE(rows[i][j], (i * d + j) * 8);
    }
  }
  const header = Buffer.alloc(4 + 4 + 8 + 8 + 1 + 8);
  MAGIC.copy(header, 0);
  header.writeUInt32LE(1, 4);
  header.writeBigUInt64LE(BigInt(n), 8);
  header.writeBigUInt64LE(BigInt(d), 16);
  header.writeUInt8(0, 24);
  header.writeBigUInt64LE(xxhash64(payload), 25);
  return Buffer.concat([header, payload]);
}

export interface FmxContents {
  n: number;
  d: number;
  values: Float64Array; // row-major
}

export function decodeFmx(buf: Buffer): FmxContents {
  if (!buf.subarray(0, 4).equals(MAGIC)) throw new Error("bad FMX magic");
  if (buf.readUInt32LE(4) !== 1) throw new Error("bad FMX version");
  const n = Number(buf.readBigUInt64LE(8));
  const d = Number(buf.readBigUInt64LE(16));
  if (buf.readUInt8(24) !== 0) throw new Error("unsupported dtype");
  const stored = buf.readBigUInt64LE(25);
  const payload = buf.subarray(33);
  if (payload.length !== n * d * 8) throw new Error("payload size mismatch");
  if (xxhash64(Buffer.from(payload)) !== stored) throw new Error("checksum mismatch");
  const values = new Float64Array(n * d);
  for (let i = 0; i < n * d; i++) values[i] = payload.readDoubleLE(i * 8);
  return { n, d, values };
}
