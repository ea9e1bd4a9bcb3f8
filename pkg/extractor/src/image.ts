/**
 * Minimal raster image type (RGBA, 8-bit) plus PNG file I/O.
 */
import * as fs from "node:fs";
import { PNG } from "pngjs";

export interface RasterImage {
  width: number;
  height: number;
  /** RGBA interleaved, length = width * height * 4. */
  data: Uint8ClampedArray;
}

export function makeImage(width: number, height: number): RasterImage {
  return { width, height, data: new Uint8ClampedArray(width * height * 4) };
}

export function cloneImage(img: RasterImage): RasterImage {
  return { width: img.width, height: img.height, data: new Uint8ClampedArray(img.data) };
}

export function readPng(path: string): RasterImage {
  const png = PNG.sync.read(fs.readFileSync(path));
  return {
    width: png.width,
    height: png.height,
    data: new Uint8ClampedArray(png.data.buffer, png.data.byteOffset, png.data.length),
  };
}

export function writePng(path: string, img: RasterImage): void {
  const png = new PNG({ width: img.width, height: img.height });
  Buffer.from(img.data.buffer, img.data.byteOffset, img.data.length).copy(png.data);
  fs.writeFileSync(path, PNG.sync.write(png));
}
