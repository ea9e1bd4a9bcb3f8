/**
 * Writer/reader for the .icmb embedding dataset format plus its JSON
 * manifest sidecar.
 *
 * Layout (little-endian):
 *   header: "ICMB" magic (4) + version u32 (=1) + dim u32 + count u64
 *   record: id u64, modality u8, role u8, pair_id u64 (0xFFFF..FF = none),
 *           domain_id u16, class_id u32, then dim * f32
 */
import * as fs from "node:fs";
import * as path from "node:path";

export const MAGIC = "ICMB";
export const VERSION = 1;
export const NO_PAIR = 0xffffffffffffffffn;

const HEADER_SIZE = 20;
const REC_PREFIX_SIZE = 24;

export enum Modality {
  Image = 0,
  Text = 1,
}

export enum Role {
  Original = 0,
  Intervened = 1,
}

export interface EmbeddingRecord {
  id: bigint;
  modality: Modality;
  role: Role;
  pairId: bigint | null;
  domainId: number;
  classId: number;
  vector: Float32Array;
}

export interface EmbeddingDataset {
  dim: number;
  records: EmbeddingRecord[];
  domains: Map<number, string>;
  classes: Map<number, string>;
}

export class FormatError extends Error {}

export function manifestPath(icmbPath: string): string {
  const parsed = path.parse(icmbPath);
  return path.join(parsed.dir, `${parsed.name}.manifest.json`);
}

function idMapToJson(map: Map<number, string>): Record<string, string> {
  const out: Record<string, string> = {};
  for (const key of [...map.keys()].sort((a, b) => a - b)) {
    out[String(key)] = map.get(key)!;
  }
  return out;
}

export function writeDataset(dataset: EmbeddingDataset, icmbPath: string): void {
  const buf = Buffer.alloc(
    HEADER_SIZE + dataset.records.length * (REC_PREFIX_SIZE + 4 * dataset.dim),
  );
  buf.write(MAGIC, 0, "ascii");
  buf.writeUInt32LE(VERSION, 4);
  buf.writeUInt32LE(dataset.dim, 8);
  buf.writeBigUInt64LE(BigInt(dataset.records.length), 12);
  let off = HEADER_SIZE;
  for (const r of dataset.records) {
    if (r.vector.length !== dataset.dim) {
      throw new FormatError(`record ${r.id} has dim ${r.vector.length}, expected ${dataset.dim}`);
    }
    buf.writeBigUInt64LE(r.id, off);
    buf.writeUInt8(r.modality, off + 8);
    buf.writeUInt8(r.role, off + 9);
    buf.writeBigUInt64LE(r.pairId ?? NO_PAIR, off + 10);
    buf.writeUInt16LE(r.domainId, off + 18);
    buf.writeUInt32LE(r.classId, off + 20);
    off += REC_PREFIX_SIZE;
    for (let i = 0; i < dataset.dim; i++) {
      buf.writeFloatLE(r.vector[i], off + 4 * i);
    }
    off += 4 * dataset.dim;
  }
  fs.writeFileSync(icmbPath, buf);
  const manifest = {
    classes: idMapToJson(dataset.classes),
    count: dataset.records.length,
    dim: dataset.dim,
    domains: idMapToJson(dataset.domains),
  };
  fs.writeFileSync(manifestPath(icmbPath), JSON.stringify(manifest, null, 2) + "\n");
}

export function readDataset(icmbPath: string): EmbeddingDataset {
  const buf = fs.readFileSync(icmbPath);
  if (buf.length < HEADER_SIZE) {
    throw new FormatError(`truncated header: ${buf.length} bytes`);
  }
  if (buf.toString("ascii", 0, 4) !== MAGIC) {
    throw new FormatError("bad magic");
  }
  const version = buf.readUInt32LE(4);
  if (version !== VERSION) throw new FormatError(`unsupported version ${version}`);
  const dim = buf.readUInt32LE(8);
  const count = Number(buf.readBigUInt64LE(12));
  const expected = HEADER_SIZE + count * (REC_PREFIX_SIZE + 4 * dim);
  if (buf.length !== expected) {
    throw new FormatError(`expected ${expected} bytes, got ${buf.length}`);
  }
  const mPath = manifestPath(icmbPath);
  if (!fs.existsSync(mPath)) throw new FormatError(`manifest not found: ${mPath}`);
  const manifest = JSON.parse(fs.readFileSync(mPath, "utf-8"));
  const toMap = (obj: Record<string, string>) =>
    new Map(Object.entries(obj).map(([k, v]) => [Number(k), v]));

  const records: EmbeddingRecord[] = [];
  let off = HEADER_SIZE;
  for (let i = 0; i < count; i++) {
    const pair = buf.readBigUInt64LE(off + 10);
    const vector = new Float32Array(dim);
    for (let j = 0; j < dim; j++) vector[j] = buf.readFloatLE(off + REC_PREFIX_SIZE + 4 * j);
    records.push({
      id: buf.readBigUInt64LE(off),
      modality: buf.readUInt8(off + 8) as Modality,
      role: buf.readUInt8(off + 9) as Role,
      pairId: pair === NO_PAIR ? null : pair,
      domainId: buf.readUInt16LE(off + 18),
      classId: buf.readUInt32LE(off + 20),
      vector,
    });
    off += REC_PREFIX_SIZE + 4 * dim;
  }
  return { dim, records, domains: toMap(manifest.domains), classes: toMap(manifest.classes) };
}
