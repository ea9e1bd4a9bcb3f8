/**
 * Referential-integrity checks over an in-memory dataset, mirroring the
 * consumer-side validator: violations carry the offending record id and a
 * machine-friendly kind.
 */
import { EmbeddingDataset, Role } from "./format.js";

export interface Violation {
  recordId: bigint;
  kind:
    | "duplicate_id"
    | "dangling_pair"
    | "pair_not_original"
    | "dim_mismatch"
    | "unmapped_domain"
    | "unmapped_class";
  message: string;
}

export function validateDataset(dataset: EmbeddingDataset): Violation[] {
  const violations: Violation[] = [];
  const byId = new Map<bigint, Role>();
  for (const r of dataset.records) {
    if (byId.has(r.id)) {
      violations.push({
        recordId: r.id,
        kind: "duplicate_id",
        message: `record id ${r.id} appears more than once`,
      });
    } else {
      byId.set(r.id, r.role);
    }
  }
  for (const r of dataset.records) {
    if (r.pairId !== null) {
      if (!byId.has(r.pairId)) {
        violations.push({
          recordId: r.id,
          kind: "dangling_pair",
          message: `record ${r.id} pairs with missing id ${r.pairId}`,
        });
      } else if (byId.get(r.pairId) !== Role.Original) {
        violations.push({
          recordId: r.id,
          kind: "pair_not_original",
          message: `record ${r.id} pairs with non-original ${r.pairId}`,
        });
      }
    }
    if (r.vector.length !== dataset.dim) {
      violations.push({
        recordId: r.id,
        kind: "dim_mismatch",
        message: `record ${r.id} has dim ${r.vector.length}, dataset dim ${dataset.dim}`,
      });
    }
    if (!dataset.domains.has(r.domainId)) {
      violations.push({
        recordId: r.id,
        kind: "unmapped_domain",
        message: `record ${r.id} domain_id ${r.domainId} not in manifest`,
      });
    }
    if (!dataset.classes.has(r.classId)) {
      violations.push({
        recordId: r.id,
        kind: "unmapped_class",
        message: `record ${r.id} class_id ${r.classId} not in manifest`,
      });
    }
  }
  return violations;
}
