/**
 * Input manifest parsing. The manifest is a CSV with header
 * `path,caption,domain,class`; caption may be empty, the other fields are
 * required on every row.
 */
import * as fs from "node:fs";
import Papa from "papaparse";

export interface ManifestRow {
  path: string;
  caption: string | null;
  domain: string;
  class: string;
}

export class ManifestError extends Error {}

export function parseManifest(csvText: string): ManifestRow[] {
  const parsed = Papa.parse<Record<string, string>>(csvText.trim(), {
    header: true,
    skipEmptyLines: true,
  });
  if (parsed.errors.length > 0) {
    const e = parsed.errors[0];
    throw new ManifestError(`CSV parse error at row ${e.row}: ${e.message}`);
  }
  const fields = parsed.meta.fields ?? [];
  for (const required of ["path", "domain", "class"]) {
    if (!fields.includes(required)) {
      throw new ManifestError(`manifest missing required column '${required}'`);
    }
  }
  return parsed.data.map((row, i) => {
    if (!row.path || !row.domain || !row.class) {
      throw new ManifestError(`row ${i + 1}: path, domain, and class are required`);
    }
    return {
      path: row.path,
      caption: row.caption ? row.caption : null,
      domain: row.domain,
      class: row.class,
    };
  });
}

export function readManifest(path: string): ManifestRow[] {
  return parseManifest(fs.readFileSync(path, "utf-8"));
}
