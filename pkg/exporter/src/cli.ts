#!/usr/bin/env node
/**
 * mvuq-export: dump pooled image embeddings into the FMX interchange format.
 *
 *   mvuq-export --images dir/ --backbone stub4 --batch 16 \
 *               --out feats.fmx --manifest manifest.json
 */

import { BackboneUnavailable, ImageDecodeError, ShapeDrift } from "./errors";
import { runExport } from "./export";

interface CliArgs {
  images: string;
  backbone: string;
  batch: number;
  device: string;
  out: string;
  manifest: string | null;
  viewName: string;
}

function parseArgs(argv: string[]): CliArgs {
  const args: Record<string, string> = {};
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    if (!key.startsWith("--") || i + 1 >= argv.length) {
      throw new Error(`malformed arguments near ${key}`);
    }
    args[key.slice(2)] = argv[i + 1];
  }
  for (const required of ["images", "out"]) {
    if (!(required in args)) throw new Error(`--${required} is required`);
  }
  return {
    images: args.images,
    backbone: args.backbone ?? "stub4",
    batch: args.batch ? parseInt(args.batch, 10) : 16,
    device: args.device ?? "cpu",
    out: args.out,
    manifest: args.manifest ?? null,
    viewName: args["view-name"] ?? "",
  };
}

export function main(argv: string[]): number {
  let args: CliArgs;
  try {
    args = parseArgs(argv);
  } catch (err) {
    console.error(`usage error: ${(err as Error).message}`);
    return 2;
  }
  try {
    const result = runExport({
      imageDir: args.images,
      backbone: args.backbone,
      batchSize: args.batch,
      deviceTag: args.device,
      outPath: args.out,
      manifestPath: args.manifest,
      viewName: args.viewName,
    });
    console.log(`wrote ${result.outPath} (${result.n}x${result.d})`);
    return 0;
  } catch (err) {
    if (err instanceof BackboneUnavailable || err instanceof ImageDecodeError
        || err instanceof ShapeDrift) {
      console.error(`error: ${err.message}`);
      return 1;
    }
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
