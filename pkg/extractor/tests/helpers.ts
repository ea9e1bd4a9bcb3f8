import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import { RasterImage, makeImage } from "../src/image.js";
import { SeededRng } from "../src/rng.js";

export function tmpDir(): string {
  return fs.mkdtempSync(path.join(os.tmpdir(), "icm-extractor-"));
}

/** Colorful noisy test image ("natural" texture for the mock encoder). */
export function noiseImage(seed: number, width = 16, height = 16): RasterImage {
  const rng = new SeededRng(seed);
  const img = makeImage(width, height);
  for (let i = 0; i < img.data.length; i += 4) {
    img.data[i] = rng.int(256);
    img.data[i + 1] = rng.int(256);
    img.data[i + 2] = rng.int(256);
    img.data[i + 3] = 255;
  }
  return img;
}

export function writeManifestCsv(
  dir: string,
  rows: Array<{ path: string; caption?: string; domain: string; class: string }>,
): string {
  const lines = ["path,caption,domain,class"];
  for (const r of rows) {
    lines.push(`${r.path},${r.caption ?? ""},${r.domain},${r.class}`);
  }
  const file = path.join(dir, "manifest.csv");
  fs.writeFileSync(file, lines.join("\n") + "\n");
  return file;
}
