/**
 * Extraction pipeline: encode manifest rows into original records, append
 * seeded augmentation interventions for images, optionally append caption
 * interventions from an external service, then validate and write the
 * .icmb output. Record order is deterministic in manifest order.
 */
import { AugmentationName, SUPPORTED_AUGMENTATIONS, applyAugmentation, selectAugmentation } from "./augment.js";
import { CaptionServiceConfig, CaptionServiceError, interveneCaption } from "./captions.js";
import { Encoder } from "./encoder.js";
import { EmbeddingDataset, EmbeddingRecord, Modality, Role, writeDataset } from "./format.js";
import { RasterImage, readPng } from "./image.js";
import { ManifestRow, readManifest } from "./manifest.js";
import { SeededRng } from "./rng.js";
import { Violation, validateDataset } from "./validate.js";

export interface ExtractionJob {
  manifestPath: string;
  encoder: Encoder;
  /** Augmentations to sample from; defaults to the full supported set. */
  augmentations?: AugmentationName[];
  /** When set, captions are sent to the intervention service. */
  captionService?: CaptionServiceConfig;
  outputPath: string;
  seed: number;
  /** Image loader hook; defaults to PNG files from disk. */
  loadImage?: (path: string) => RasterImage;
}

export interface ExtractionResult {
  dataset: EmbeddingDataset;
  violations: Violation[];
  counts: {
    imageOriginals: number;
    textOriginals: number;
    imageIntervened: number;
    textIntervened: number;
    skippedInputs: number;
    skippedAugmentations: number;
    skippedCaptions: number;
  };
}

export class ExtractionError extends Error {}

interface LoadedRow {
  row: ManifestRow;
  image: RasterImage;
  imageRecordId: bigint;
  textRecordId: bigint | null;
}

function labelMaps(rows: ManifestRow[]): {
  domains: Map<number, string>;
  classes: Map<number, string>;
  domainId: Map<string, number>;
  classId: Map<string, number>;
} {
  const domainNames = [...new Set(rows.map((r) => r.domain))].sort();
  const classNames = [...new Set(rows.map((r) => r.class))].sort();
  return {
    domains: new Map(domainNames.map((name, i) => [i, name])),
    classes: new Map(classNames.map((name, i) => [i, name])),
    domainId: new Map(domainNames.map((name, i) => [name, i])),
    classId: new Map(classNames.map((name, i) => [name, i])),
  };
}

export async function runExtraction(job: ExtractionJob): Promise<ExtractionResult> {
  const rows = readManifest(job.manifestPath);
  const load = job.loadImage ?? readPng;
  const { domains, classes, domainId, classId } = labelMaps(rows);
  const allowed = job.augmentations ?? [...SUPPORTED_AUGMENTATIONS];
  const counts = {
    imageOriginals: 0,
    textOriginals: 0,
    imageIntervened: 0,
    textIntervened: 0,
    skippedInputs: 0,
    skippedAugmentations: 0,
    skippedCaptions: 0,
  };

  // pass 1: originals (one image record per readable row, one text record
  // per caption)
  const records: EmbeddingRecord[] = [];
  const loaded: LoadedRow[] = [];
  let nextId = 0n;
  for (const row of rows) {
    let image: RasterImage;
    try {
      image = load(row.path);
    } catch {
      counts.skippedInputs++;
      continue;
    }
    const base = {
      domainId: domainId.get(row.domain)!,
      classId: classId.get(row.class)!,
    };
    const imageRecordId = nextId++;
    records.push({
      id: imageRecordId,
      modality: Modality.Image,
      role: Role.Original,
      pairId: null,
      vector: job.encoder.encodeImage(image),
      ...base,
    });
    counts.imageOriginals++;
    let textRecordId: bigint | null = null;
    if (row.caption !== null) {
      textRecordId = nextId++;
      records.push({
        id: textRecordId,
        modality: Modality.Text,
        role: Role.Original,
        pairId: null,
        vector: job.encoder.encodeText(row.caption),
        ...base,
      });
      counts.textOriginals++;
    }
    loaded.push({ row, image, imageRecordId, textRecordId });
  }

  // pass 2: image interventions — one seeded augmentation per image
  const rng = new SeededRng(job.seed);
  for (const entry of loaded) {
    const name = selectAugmentation(rng, allowed);
    let augmented: RasterImage;
    try {
      augmented = applyAugmentation(name, entry.image, rng);
    } catch {
      counts.skippedAugmentations++;
      continue;
    }
    records.push({
      id: nextId++,
      modality: Modality.Image,
      role: Role.Intervened,
      pairId: entry.imageRecordId,
      domainId: domainId.get(entry.row.domain)!,
      classId: classId.get(entry.row.class)!,
      vector: job.encoder.encodeImage(augmented),
    });
    counts.imageIntervened++;
  }

  // pass 3: caption interventions via the external service
  if (job.captionService) {
    for (const entry of loaded) {
      if (entry.textRecordId === null || entry.row.caption === null) continue;
      let intervened: string;
      try {
        intervened = await interveneCaption(job.captionService, entry.row.caption);
      } catch (err) {
        if (err instanceof CaptionServiceError) {
          counts.skippedCaptions++;
          continue;
        }
        throw err;
      }
      records.push({
        id: nextId++,
        modality: Modality.Text,
        role: Role.Intervened,
        pairId: entry.textRecordId,
        domainId: domainId.get(entry.row.domain)!,
        classId: classId.get(entry.row.class)!,
        vector: job.encoder.encodeText(intervened),
      });
      counts.textIntervened++;
    }
  }

  const dataset: EmbeddingDataset = {
    dim: job.encoder.dim,
    records,
    domains,
    classes,
  };
  const violations = validateDataset(dataset);
  if (violations.length > 0) {
    throw new ExtractionError(`refusing to write invalid dataset: ${violations[0].message}`);
  }
  writeDataset(dataset, job.outputPath);
  return { dataset, violations, counts };
}
