import * as assert from "node:assert/strict";
import { execFileSync } from "node:child_process";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";
import { test } from "node:test";

import { BackboneUnavailable, ImageDecodeError } from "../src/errors";
import { conventionalSidecarPath, runExport } from "../src/export";
import { decodeFmx } from "../src/fmx";
import { main as cliMain } from "../src/cli";

const FIXTURES = path.join(__dirname, "..", "..", "fixtures");

function makeImageDir(names: string[]): string {
  const dir = fs.mkdtempSync(path.join(os.tmpdir(), "mvuq-export-"));
  for (const name of names) {
    fs.copyFileSync(path.join(FIXTURES, name), path.join(dir, name));
  }
  return dir;
}

function job(imageDir: string, outPath: string, overrides: object = {}) {
  return {
    imageDir,
    backbone: "stub4",
    batchSize: 2,
    deviceTag: "cpu",
    outPath,
    manifestPath: null,
    viewName: "natural",
    ...overrides,
  };
}

test("five images through the stub produce a 5x4 FMX with a manifest", () => {
  const dir = makeImageDir(["view00.png", "view01.png", "view02.png",
                            "view03.png", "view04.png"]);
  const out = path.join(dir, "feats.fmx");
  const result = runExport(job(dir, out));
  assert.equal(result.n, 5);
  assert.equal(result.d, 4);
  const contents = decodeFmx(fs.readFileSync(out)); // checksum verified inside
  assert.equal(contents.n, 5);
  assert.equal(contents.d, 4);
  const sidecar = JSON.parse(fs.readFileSync(conventionalSidecarPath(out), "utf-8"));
  assert.deepEqual(sidecar.location_ids,
                   ["view00", "view01", "view02", "view03", "view04"]);
  assert.equal(sidecar.view_name, "natural");
  assert.equal(sidecar.pooling, "grayscale-meanpool-2x2");
});

test("duplicate image listed twice yields identical rows", () => {
  const dir = makeImageDir(["view00.png"]);
  fs.copyFileSync(path.join(dir, "view00.png"), path.join(dir, "view00_copy.png"));
  const out = path.join(dir, "feats.fmx");
  runExport(job(dir, out));
  const { n, d, values } = decodeFmx(fs.readFileSync(out));
  assert.equal(n, 2);
  for (let j = 0; j < d; j++) {
    assert.equal(values[j], values[d + j]);
  }
});

test("corrupt PNG aborts with ImageDecodeError and leaves no partial FMX", () => {
  const dir = makeImageDir(["view00.png", "corrupt.png"]);
  const out = path.join(dir, "feats.fmx");
  assert.throws(
    () => runExport(job(dir, out)),
    (err: unknown) =>
      err instanceof ImageDecodeError && err.path.includes("corrupt.png"),
  );
  assert.ok(!fs.existsSync(out), "no FMX should exist after a failed export");
  const leftovers = fs.readdirSync(dir).filter((f) => f.includes(".tmp-"));
  assert.deepEqual(leftovers, []);
});

test("re-export of the same directory is byte-identical", () => {
  const dir = makeImageDir(["view00.png", "view01.png", "view02.png"]);
  const out1 = path.join(dir, "a.fmx");
  const out2 = path.join(dir, "b.fmx");
  runExport(job(dir, out1));
  runExport(job(dir, out2));
  assert.ok(fs.readFileSync(out1).equals(fs.readFileSync(out2)));
});

test("unknown backbone fails fast without touching the network", () => {
  const dir = makeImageDir(["view00.png"]);
  assert.throws(
    () => runExport(job(dir, path.join(dir, "f.fmx"), { backbone: "dinov2-vit-base" })),
    (err: unknown) => err instanceof BackboneUnavailable,
  );
});

test("cli entry point writes the file and reports shape", () => {
  const dir = makeImageDir(["view00.png", "view01.png"]);
  const out = path.join(dir, "cli.fmx");
  const manifest = path.join(dir, "cli-manifest.json");
  const code = cliMain(["--images", dir, "--backbone", "stub4", "--batch", "16",
                        "--out", out, "--manifest", manifest]);
  assert.equal(code, 0);
  assert.ok(fs.existsSync(out));
  assert.ok(fs.existsSync(manifest));
  assert.equal(cliMain(["--images", dir]), 2); // missing --out
});

test("core package imports the exported FMX (shape + checksum)", () => {
  // acceptance: the file must pass the primary package's import validation,
  // consumed strictly through the file format
  const dir = makeImageDir(["view00.png", "view01.png", "view02.png",
                            "view03.png", "view04.png"]);
  const out = path.join(dir, "feats.fmx");
  runExport(job(dir, out));
  const script = [
    "import sys",
    "from mvuq.featurize import import_features",
    "fm = import_features(sys.argv[1])",
    "assert (fm.n, fm.d) == (5, 4), (fm.n, fm.d)",
    "assert fm.location_ids[0] == 'view00'",
    "assert fm.view_name == 'natural'",
    "print('core-import-ok')",
  ].join("\n");
  const stdout = execFileSync("python3", ["-c", script, out], { encoding: "utf-8" });
  assert.match(stdout, /core-import-ok/);
});
