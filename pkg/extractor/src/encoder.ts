/**
 * Pluggable encoder interface. A production adapter wraps a pretrained
 * vision-language model; the bundled mock encoder is a fast, deterministic
 * stand-in (pooled pixel statistics / hashed character bigrams pushed
 * through a fixed random projection) so the pipeline and its tests run
 * without model weights.
 */
import { RasterImage } from "./image.js";
import { SeededRng } from "./rng.js";

export interface Encoder {
  /** Output embedding width, e.g. 512 for a ViT-B/16-class backbone. */
  readonly dim: number;
  encodeImage(img: RasterImage): Float32Array;
  encodeText(text: string): Float32Array;
}

export class EncoderError extends Error {}

const GRID = 8;
const RAW_FEATURES = GRID * GRID * 3;

function l2Normalize(v: Float32Array): Float32Array {
  let norm = 0;
  for (const x of v) norm += x * x;
  norm = Math.sqrt(norm);
  if (norm < 1e-12) throw new EncoderError("zero-norm embedding");
  for (let i = 0; i < v.length; i++) v[i] /= norm;
  return v;
}

export class MockEncoder implements Encoder {
  readonly dim: number;
  private readonly projection: Float32Array; // (dim, RAW_FEATURES) row-major

  constructor(dim = 64) {
    if (dim < 1) throw new EncoderError("dim must be >= 1");
    this.dim = dim;
    // fixed seed: the projection is part of the encoder's identity
    const rng = new SeededRng(0x1c0de + dim);
    this.projection = new Float32Array(dim * RAW_FEATURES);
    for (let i = 0; i < this.projection.length; i++) {
      this.projection[i] = rng.uniform(-1, 1);
    }
  }

  private project(raw: Float64Array): Float32Array {
    const out = new Float32Array(this.dim);
    for (let i = 0; i < this.dim; i++) {
      let acc = 0;
      for (let j = 0; j < RAW_FEATURES; j++) {
        acc += this.projection[i * RAW_FEATURES + j] * raw[j];
      }
      out[i] = acc;
    }
    return l2Normalize(out);
  }

  encodeImage(img: RasterImage): Float32Array {
    if (img.width < 1 || img.height < 1) throw new EncoderError("empty image");
    // mean-pool RGB over a GRID x GRID partition
    const raw = new Float64Array(RAW_FEATURES);
    const counts = new Float64Array(GRID * GRID);
    for (let y = 0; y < img.height; y++) {
      const gy = Math.min(GRID - 1, Math.floor((y * GRID) / img.height));
      for (let x = 0; x < img.width; x++) {
        const gx = Math.min(GRID - 1, Math.floor((x * GRID) / img.width));
        const cell = gy * GRID + gx;
        const px = (y * img.width + x) * 4;
        raw[cell * 3] += img.data[px] / 255;
        raw[cell * 3 + 1] += img.data[px + 1] / 255;
        raw[cell * 3 + 2] += img.data[px + 2] / 255;
        counts[cell]++;
      }
    }
    for (let cell = 0; cell < GRID * GRID; cell++) {
      const n = Math.max(1, counts[cell]);
      raw[cell * 3] /= n;
      raw[cell * 3 + 1] /= n;
      raw[cell * 3 + 2] /= n;
    }
    return this.project(raw);
  }

  encodeText(text: string): Float32Array {
    if (text.length === 0) throw new EncoderError("empty text");
    // hashed byte-bigram histogram
    const raw = new Float64Array(RAW_FEATURES);
    const bytes = Buffer.from(text.toLowerCase(), "utf-8");
    for (let i = 0; i < bytes.length; i++) {
      const bigram = bytes[i] * 257 + (i + 1 < bytes.length ? bytes[i + 1] : 0);
      raw[((bigram * 2654435761) >>> 0) % RAW_FEATURES]++;
    }
    let total = 0;
    for (const x of raw) total += x;
    for (let i = 0; i < raw.length; i++) raw[i] /= total;
    return this.project(raw);
  }
}
