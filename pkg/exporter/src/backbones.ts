/**
 * Backbone registry. The only backbone that ships weights-free is the
 * "stub4" test double: grayscale the image, mean-pool to a 2x2 thumbnail,
 * flatten to 4 values. Any other name needs local weights (no network at
 * run time): we look under MVUQ_BACKBONE_DIR and fail fast otherwise.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { BackboneUnavailable } from "./errors";
import { DecodedImage } from "./png";

export interface Backbone {
  readonly name: string;
  readonly pooling: string;
  embed(image: DecodedImage): Float64Array;
}

function grayscale(image: DecodedImage): Float64Array {
  const { width, height, channels, data } = image;
  const out = new Float64Array(width * height);
  if (channels === 1) {
    for (let i = 0; i < out.length; i++) out[i] = data[i];
    return out;
  }
  for (let i = 0; i < out.length; i++) {
    const base = i * channels;
    out[i] = 0.299 * data[base] + 0.587 * data[base + 1] + 0.114 * data[base + 2];
  }
  return out;
}

class StubBackbone implements Backbone {
  readonly name = "stub4";
  readonly pooling = "grayscale-meanpool-2x2";

  embed(image: DecodedImage): Float64Array {
    const g = grayscale(image);
    const { width: w, height: h } = image;
    const hs = Math.floor(h / 2);
    const ws = Math.floor(w / 2);
    const quads = [
      [0, hs, 0, ws],
      [0, hs, ws, w],
      [hs, h, 0, ws],
      [hs, h, ws, w],
    ];
    const out = new Float64Array(4);
    quads.forEach(([r0, r1, c0, c1], q) => {
      let sum = 0;
      for (let r = r0; r < r1; r++) {
        for (let c = c0; c < c1; c++) sum += g[r * w + c];
      }
      out[q] = sum / ((r1 - r0) * (c1 - c0));
    });
    return out;
  }
}

export function resolveBackbone(name: string): Backbone {
  if (name === "stub4") return new StubBackbone();
  const root = process.env.MVUQ_BACKBONE_DIR;
  if (!root) {
    throw new BackboneUnavailable(
      name, "no local weights (set MVUQ_BACKBONE_DIR); refusing to download");
  }
  const weightsDir = path.join(root, name);
  if (!fs.existsSync(weightsDir)) {
    throw new BackboneUnavailable(name, `weights not found under ${weightsDir}`);
  }
  throw new BackboneUnavailable(
    name, "only the stub4 test double ships with this exporter build");
}
