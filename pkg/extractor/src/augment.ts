/**
 * Pixel-level image interventions. Each augmentation perturbs style-like
 * factors (color, sharpness, orientation) while preserving content, and is
 * fully determined by the supplied RNG.
 *
 * Parameter table (magnitudes are adapter-documented defaults):
 *   color-jitter   brightness/contrast/saturation factors ~ U[0.6, 1.4]
 *   grayscale      ITU-R BT.601 luma
 *   gaussian-blur  sigma 1.5, radius 3 separable kernel
 *   invert         255 - v per channel
 *   rotation       angle ~ U[-30, 30] degrees, nearest neighbor, black fill
 *   posterize      4 levels per channel
 *   solarize       invert channels >= 128
 *   equalize       per-channel histogram equalization
 */
import { RasterImage, cloneImage } from "./image.js";
import { SeededRng } from "./rng.js";

export const SUPPORTED_AUGMENTATIONS = [
  "color-jitter",
  "grayscale",
  "gaussian-blur",
  "invert",
  "rotation",
  "posterize",
  "solarize",
  "equalize",
] as const;

export type AugmentationName = (typeof SUPPORTED_AUGMENTATIONS)[number];

export class AugmentationError extends Error {}

function forEachPixel(img: RasterImage, fn: (i: number) => void): void {
  for (let i = 0; i < img.data.length; i += 4) fn(i);
}

function luma(r: number, g: number, b: number): number {
  return 0.299 * r + 0.587 * g + 0.114 * b;
}

export function colorJitter(img: RasterImage, rng: SeededRng): RasterImage {
  const brightness = rng.uniform(0.6, 1.4);
  const contrast = rng.uniform(0.6, 1.4);
  const saturation = rng.uniform(0.6, 1.4);
  const out = cloneImage(img);
  forEachPixel(out, (i) => {
    let r = out.data[i] * brightness;
    let g = out.data[i + 1] * brightness;
    let b = out.data[i + 2] * brightness;
    r = (r - 128) * contrast + 128;
    g = (g - 128) * contrast + 128;
    b = (b - 128) * contrast + 128;
    const y = luma(r, g, b);
    out.data[i] = y + (r - y) * saturation;
    out.data[i + 1] = y + (g - y) * saturation;
    out.data[i + 2] = y + (b - y) * saturation;
  });
  return out;
}

export function grayscale(img: RasterImage): RasterImage {
  const out = cloneImage(img);
  forEachPixel(out, (i) => {
    const y = luma(out.data[i], out.data[i + 1], out.data[i + 2]);
    out.data[i] = out.data[i + 1] = out.data[i + 2] = y;
  });
  return out;
}

export function gaussianBlur(img: RasterImage, sigma = 1.5): RasterImage {
  const radius = 3;
  const kernel: number[] = [];
  let total = 0;
  for (let k = -radius; k <= radius; k++) {
    const w = Math.exp(-(k * k) / (2 * sigma * sigma));
    kernel.push(w);
    total += w;
  }
  for (let k = 0; k < kernel.length; k++) kernel[k] /= total;

  const pass = (src: Uint8ClampedArray, horizontal: boolean): Uint8ClampedArray => {
    const dst = new Uint8ClampedArray(src.length);
    for (let y = 0; y < img.height; y++) {
      for (let x = 0; x < img.width; x++) {
        for (let c = 0; c < 4; c++) {
          let acc = 0;
          for (let k = -radius; k <= radius; k++) {
            // clamp-to-edge sampling
            const xs = horizontal ? Math.min(img.width - 1, Math.max(0, x + k)) : x;
            const ys = horizontal ? y : Math.min(img.height - 1, Math.max(0, y + k));
            acc += kernel[k + radius] * src[(ys * img.width + xs) * 4 + c];
          }
          dst[(y * img.width + x) * 4 + c] = acc;
        }
      }
    }
    return dst;
  };
  return { width: img.width, height: img.height, data: pass(pass(img.data, true), false) };
}

export function invert(img: RasterImage): RasterImage {
  const out = cloneImage(img);
  forEachPixel(out, (i) => {
    out.data[i] = 255 - out.data[i];
    out.data[i + 1] = 255 - out.data[i + 1];
    out.data[i + 2] = 255 - out.data[i + 2];
  });
  return out;
}

export function rotation(img: RasterImage, rng: SeededRng): RasterImage {
  const angle = (rng.uniform(-30, 30) * Math.PI) / 180;
  const cos = Math.cos(angle);
  const sin = Math.sin(angle);
  const cx = (img.width - 1) / 2;
  const cy = (img.height - 1) / 2;
  const out = { width: img.width, height: img.height, data: new Uint8ClampedArray(img.data.length) };
  for (let y = 0; y < img.height; y++) {
    for (let x = 0; x < img.width; x++) {
      const sx = Math.round(cos * (x - cx) + sin * (y - cy) + cx);
      const sy = Math.round(-sin * (x - cx) + cos * (y - cy) + cy);
      const di = (y * img.width + x) * 4;
      if (sx >= 0 && sx < img.width && sy >= 0 && sy < img.height) {
        const si = (sy * img.width + sx) * 4;
        out.data.set(img.data.subarray(si, si + 4), di);
      } else {
        out.data[di + 3] = 255; // black fill, opaque
      }
    }
  }
  return out;
}

export function posterize(img: RasterImage, levels = 4): RasterImage {
  const out = cloneImage(img);
  const step = 255 / (levels - 1);
  forEachPixel(out, (i) => {
    for (let c = 0; c < 3; c++) {
      out.data[i + c] = Math.round(Math.round(out.data[i + c] / step) * step);
    }
  });
  return out;
}

export function solarize(img: RasterImage, threshold = 128): RasterImage {
  const out = cloneImage(img);
  forEachPixel(out, (i) => {
    for (let c = 0; c < 3; c++) {
      if (out.data[i + c] >= threshold) out.data[i + c] = 255 - out.data[i + c];
    }
  });
  return out;
}

export function equalize(img: RasterImage): RasterImage {
  const out = cloneImage(img);
  const nPixels = img.width * img.height;
  for (let c = 0; c < 3; c++) {
    const hist = new Array(256).fill(0);
    forEachPixel(img, (i) => hist[img.data[i + c]]++);
    const cdf = new Array(256).fill(0);
    let run = 0;
    for (let v = 0; v < 256; v++) {
      run += hist[v];
      cdf[v] = run;
    }
    const cdfMin = cdf.find((v) => v > 0) ?? 0;
    const denom = Math.max(1, nPixels - cdfMin);
    const map = cdf.map((v) => Math.round(((v - cdfMin) / denom) * 255));
    forEachPixel(out, (i) => {
      out.data[i + c] = map[img.data[i + c]];
    });
  }
  return out;
}

/** Apply one named augmentation; parameterized ones draw from the RNG. */
export function applyAugmentation(
  name: AugmentationName,
  img: RasterImage,
  rng: SeededRng,
): RasterImage {
  switch (name) {
    case "color-jitter":
      return colorJitter(img, rng);
    case "grayscale":
      return grayscale(img);
    case "gaussian-blur":
      return gaussianBlur(img);
    case "invert":
      return invert(img);
    case "rotation":
      return rotation(img, rng);
    case "posterize":
      return posterize(img);
    case "solarize":
      return solarize(img);
    case "equalize":
      return equalize(img);
    default:
      throw new AugmentationError(`unsupported augmentation ${name as string}`);
  }
}

/** Seeded uniform pick from an allowed subset of the supported set. */
export function selectAugmentation(
  rng: SeededRng,
  allowed: readonly AugmentationName[] = SUPPORTED_AUGMENTATIONS,
): AugmentationName {
  if (allowed.length === 0) throw new AugmentationError("empty augmentation list");
  for (const name of allowed) {
    if (!SUPPORTED_AUGMENTATIONS.includes(name)) {
      throw new AugmentationError(`unsupported augmentation ${name}`);
    }
  }
  return allowed[rng.int(allowed.length)];
}
