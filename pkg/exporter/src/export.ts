/**
 * Export embeddings for every PNG view in a directory into FMX v1.
 *
 * Row order follows the sorted file names (= the manifest order); the FMX
 * file is written atomically (temp + rename) so a failed run leaves nothing
 * behind. The exporter never reads regression targets.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { resolveBackbone } from "./backbones";
import { ShapeDrift } from "./errors";
import { encodeFmx } from "./fmx";
import { decodePng } from "./png";

export interface ExportJob {
  imageDir: string;
  backbone: string;
  batchSize: number;
  deviceTag: string;
  outPath: string;
  manifestPath: string | null;
  viewName: string;
}

export interface ExportResult {
  n: number;
  d: number;
  locationIds: string[];
  outPath: string;
}

export function runExport(job: ExportJob): ExportResult {
  const backbone = resolveBackbone(job.backbone);
  const files = fs
    .readdirSync(job.imageDir)
    .filter((f) => f.toLowerCase().endsWith(".png"))
    .sort();
  if (files.length === 0) {
    throw new Error(`no .png images in ${job.imageDir}`);
  }

  const rows: Float64Array[] = [];
  let dim = -1;
  for (let start = 0; start < files.length; start += job.batchSize) {
    const batch = files.slice(start, start + job.batchSize);
    for (const name of batch) {
      const filePath = path.join(job.imageDir, name);
      const image = decodePng(fs.readFileSync(filePath), filePath);
      const embedding = backbone.embed(image);
      if (dim === -1) {
        dim = embedding.length;
      } else if (embedding.length !== dim) {
        throw new ShapeDrift(filePath, embedding.length, dim);
      }
      rows.push(embedding);
    }
  }

  const locationIds = files.map((f) => f.replace(/\.png$/i, ""));
  const sidecar = {
    location_ids: locationIds,
    view_name: job.viewName,
    backbone: backbone.name,
    pooling: backbone.pooling,
    device: job.deviceTag,
    dim,
  };

  const encoded = encodeFmx(rows, dim);
  const tmp = `${job.outPath}.tmp-${process.pid}`;
  try {
    fs.writeFileSync(tmp, encoded);
    fs.renameSync(tmp, job.outPath);
  } catch (err) {
    if (fs.existsSync(tmp)) fs.unlinkSync(tmp);
    throw err;
  }

  const sidecarJson = JSON.stringify(sidecar, Object.keys(sidecar).sort(), 2);
  const conventional = conventionalSidecarPath(job.outPath);
  fs.writeFileSync(conventional, sidecarJson);
  if (job.manifestPath && path.resolve(job.manifestPath) !== path.resolve(conventional)) {
    fs.writeFileSync(job.manifestPath, sidecarJson);
  }

  return { n: rows.length, d: dim, locationIds, outPath: job.outPath };
}

/** `<dir>/<stem>.manifest.json`, the sidecar location the core looks up. */
export function conventionalSidecarPath(outPath: string): string {
  const dir = path.dirname(outPath);
  const stem = path.basename(outPath, path.extname(outPath));
  return path.join(dir, `${stem}.manifest.json`);
}
