/**
 * xxHash64 (seed 0 by default) over a Buffer, BigInt arithmetic.
 * Pinned to the reference implementation by known-answer vectors in the tests.
 */

const P1 = 0x9e3779b185ebca87n;
const P2 = 0xc2b2ae3d27d4eb4fn;
const P3 = 0x165667b19e3779f9n;
const P4 = 0x85ebca77c2b2ae63n;
const P5 = 0x27d4eb2f165667c5n;
const MASK = (1n << 64n) - 1n;

function rotl(x: bigint, r: bigint): bigint {
  return ((x << r) | (x >> (64n - r))) & MASK;
}

function round(acc: bigint, input: bigint): bigint {
  acc = (acc + input * P2) & MASK;
  acc = rotl(acc, 31n);
  return (acc * P1) & MASK;
}

function mergeRound(acc: bigint, val: bigint): bigint {
  acc ^= round(0n, val);
  return (((acc * P1) & MASK) + P4) & MASK;
}

export function xxhash64(data: Buffer, seed: bigint = 0n): bigint {
  const len = data.length;
  let offset = 0;
  let h: bigint;

  if (len >= 32) {
    let v1 = (seed + P1 + P2) & MASK;
    let v2 = (seed + P2) & MASK;
    let v3 = seed & MASK;
    let v4 = (seed - P1) & MASK;
    while (offset + 32 <= len) {
      v1 = round(v1, data.readBigUInt64LE(offset));
      v2 = round(v2, data.readBigUInt64LE(offset + 8));
      v3 = round(v3, data.readBigUInt64LE(offset + 16));
      v4 = round(v4, data.readBigUInt64LE(offset + 24));
      offset += 32;
    }
    h = (rotl(v1, 1n) + rotl(v2, 7n) + rotl(v3, 12n) + rotl(v4, 18n)) & MASK;
    h = mergeRound(h, v1);
    h = mergeRound(h, v2);
    h = mergeRound(h, v3);
    h = mergeRound(h, v4);
  } else {
    h = (seed + P5) & MASK;
  }

  h = (h + BigInt(len)) & MASK;

  while (offset + 8 <= len) {
    h ^= round(0n, data.readBigUInt64LE(offset));
    h = (((rotl(h, 27n) * P1) & MASK) + P4) & MASK;
    offset += 8;
  }
  if (offset + 4 <= len) {
    h ^= (BigInt(data.readUInt32LE(offset)) * P1) & MASK;
    h = (((rotl(h, 23n) * P2) & MASK) + P3) & MASK;
    offset += 4;
  }
  while (offset < len) {
    h ^= (BigInt(data[offset]) * P5) & MASK;
    h = (rotl(h, 11n) * P1) & MASK;
    offset += 1;
  }

  h ^= h >> 33n;
  h = (h * P2) & MASK;
  h ^= h >> 29n;
  h = (h * P3) & MASK;
  h ^= h >> 32n;
  return h;
}
