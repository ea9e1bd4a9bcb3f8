"""Binary embedding datasets: on-disk format, validation, and splits.

Datasets are stored in a little-endian binary file (extension ``.icmb``)
with a JSON sidecar manifest mapping domain/class ids to names. Records
are immutable after load; vectors are stored as float32 on disk and
promoted to float64 for all downstream arithmetic.
"""
from __future__ import annotations

import enum
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"ICMB"
VERSION = 1

# header: magic(4) + version u32 + dim u32 + count u64
_HEADER = struct.Struct("<4sIIQ")
# record prefix: id u64, modality u8, role u8, pair_id u64, domain u16, class u32
_REC_PREFIX = struct.Struct("<QBBQHI")

NO_PAIR = 0xFFFF_FFFF_FFFF_FFFF


class StoreError(Exception):
    """Base class for dataset storage errors."""


class BadMagicError(StoreError):
    pass


class VersionMismatchError(StoreError):
    pass


class TruncatedFileError(StoreError):
    def __init__(self, expected: int, actual: int):
        super().__init__(f"truncated file: expected {expected} bytes, got {actual}")
        self.expected = expected
        self.actual = actual


class ManifestMissingError(StoreError):
    pass


class ValidationError(StoreError):
    pass


class Modality(enum.IntEnum):
    IMAGE = 0
    TEXT = 1


class Role(enum.IntEnum):
    ORIGINAL = 0
    INTERVENED = 1


@dataclass(frozen=True)
class EmbeddingRecord:
    id: int
    modality: Modality
    role: Role
    pair_id: int | None
    domain_id: int
    class_id: int
    vector: np.ndarray  # shape (D,); float32 on disk, float64 allowed in memory

    def __post_init__(self):
        vec = np.asarray(self.vector)
        if vec.dtype not in (np.float32, np.float64):
            vec = vec.astype(np.float64)
        vec.setflags(write=False)
        object.__setattr__(self, "vector", vec)


@dataclass
class EmbeddingDataset:
    dim: int
    records: list[EmbeddingRecord]
    domains: dict[int, str] = field(default_factory=dict)
    classes: dict[int, str] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.records)

    def vectors(self, *, modality: Modality | None = None, role: Role | None = None,
                domain_id: int | None = None) -> np.ndarray:
        """Stacked float64 matrix of matching record vectors (n, dim)."""
        recs = self.select(modality=modality, role=role, domain_id=domain_id)
        if not recs:
            return np.zeros((0, self.dim), dtype=np.float64)
        return np.stack([r.vector for r in recs]).astype(np.float64)

    def select(self, *, modality: Modality | None = None, role: Role | None = None,
               domain_id: int | None = None) -> list[EmbeddingRecord]:
        out = []
        for r in self.records:
            if modality is not None and r.modality != modality:
                continue
            if role is not None and r.role != role:
                continue
            if domain_id is not None and r.domain_id != domain_id:
                continue
            out.append(r)
        return out


@dataclass
class Violation:
    record_id: int | None
    kind: str
    message: str


@dataclass
class ValidationReport:
    violations: list[Violation]

    @property
    def ok(self) -> bool:
        return not self.violations


def validate(dataset: EmbeddingDataset) -> ValidationReport:
    """Check every dataset invariant; violations become report entries."""
    violations: list[Violation] = []
    by_id: dict[int, EmbeddingRecord] = {}
    for r in dataset.records:
        if r.id in by_id:
            violations.append(Violation(r.id, "duplicate_id", f"duplicate record id {r.id}"))
        else:
            by_id[r.id] = r
    for r in dataset.records:
        if r.vector.shape != (dataset.dim,):
            violations.append(Violation(
                r.id, "dim_mismatch",
                f"record {r.id} has vector length {r.vector.shape[0]}, expected {dataset.dim}"))
        if r.role == Role.INTERVENED:
            if r.pair_id is None:
                violations.append(Violation(r.id, "missing_pair",
                                            f"intervened record {r.id} has no pair_id"))
            elif r.pair_id not in by_id:
                violations.append(Violation(r.id, "dangling_pair",
                                            f"record {r.id} pair_id {r.pair_id} not found"))
            elif by_id[r.pair_id].role != Role.ORIGINAL:
                violations.append(Violation(
                    r.id, "pair_not_original",
                    f"record {r.id} pair_id {r.pair_id} targets a non-original record"))
        if r.domain_id not in dataset.domains:
            violations.append(Violation(r.id, "unmapped_domain",
                                        f"record {r.id} domain_id {r.domain_id} not in manifest"))
        if r.class_id not in dataset.classes:
            violations.append(Violation(r.id, "unmapped_class",
                                        f"record {r.id} class_id {r.class_id} not in manifest"))
    return ValidationReport(violations)


def manifest_path(path: Path) -> Path:
    return path.with_name(path.stem + ".manifest.json")


def write_dataset(dataset: EmbeddingDataset, path: str | Path) -> None:
    """Serialize to the .icmb binary layout plus sibling manifest JSON."""
    path = Path(path)
    report = validate(dataset)
    if not report.ok:
        first = report.violations[0]
        raise ValidationError(f"invalid dataset: {first.message}")
    buf = bytearray()
    buf += _HEADER.pack(MAGIC, VERSION, dataset.dim, len(dataset.records))
    for r in dataset.records:
        pair = NO_PAIR if r.pair_id is None else r.pair_id
        buf += _REC_PREFIX.pack(r.id, int(r.modality), int(r.role), pair,
                                r.domain_id, r.class_id)
        buf += r.vector.astype("<f4").tobytes()
    path.write_bytes(bytes(buf))
    manifest = {
        "domains": {str(k): v for k, v in sorted(dataset.domains.items())},
        "classes": {str(k): v for k, v in sorted(dataset.classes.items())},
        "dim": dataset.dim,
        "count": len(dataset.records),
    }
    manifest_path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def read_dataset(path: str | Path) -> EmbeddingDataset:
    """Read an .icmb file; inverse of write_dataset, bit-exact."""
    path = Path(path)
    data = path.read_bytes()
    if len(data) < _HEADER.size:
        raise TruncatedFileError(_HEADER.size, len(data))
    magic, version, dim, count = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}")
    if version != VERSION:
        raise VersionMismatchError(f"unsupported version {version}")
    rec_size = _REC_PREFIX.size + 4 * dim
    expected = _HEADER.size + count * rec_size
    if len(data) != expected:
        raise TruncatedFileError(expected, len(data))
    mpath = manifest_path(path)
    if not mpath.exists():
        raise ManifestMissingError(f"manifest not found: {mpath}")
    manifest = json.loads(mpath.read_text())
    records: list[EmbeddingRecord] = []
    off = _HEADER.size
    for _ in range(count):
        rid, modality, role, pair, dom, cls = _REC_PREFIX.unpack_from(data, off)
        off += _REC_PREFIX.size
        vec = np.frombuffer(data, dtype="<f4", count=dim, offset=off).copy()
        off += 4 * dim
        records.append(EmbeddingRecord(
            id=rid, modality=Modality(modality), role=Role(role),
            pair_id=None if pair == NO_PAIR else pair,
            domain_id=dom, class_id=cls, vector=vec))
    return EmbeddingDataset(
        dim=dim, records=records,
        domains={int(k): v for k, v in manifest["domains"].items()},
        classes={int(k): v for k, v in manifest["classes"].items()})


def split_by_domain(dataset: EmbeddingDataset, held_out: int
                    ) -> tuple[EmbeddingDataset, EmbeddingDataset]:
    """Leave-one-out partition: test gets the held-out domain, train the rest."""
    if held_out not in dataset.domains:
        raise KeyError(f"unknown domain_id {held_out}")
    train = [r for r in dataset.records if r.domain_id != held_out]
    test = [r for r in dataset.records if r.domain_id == held_out]
    mk = lambda recs: EmbeddingDataset(dataset.dim, recs, dict(dataset.domains),
                                       dict(dataset.classes))
    return mk(train), mk(test)


def split_classes(dataset: EmbeddingDataset, base_fraction: float, seed: int
                  ) -> tuple[set[int], set[int]]:
    """Seeded base/new class split; base gets ceil(fraction * n_classes)."""
    class_ids = sorted({r.class_id for r in dataset.records})
    if not class_ids:
        raise ValueError("dataset has no classes")
    if not (0.0 < base_fraction <= 1.0):
        raise ValueError("base_fraction must be in (0, 1]")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(class_ids))
    n_base = math.ceil(base_fraction * len(class_ids))
    base = {class_ids[i] for i in order[:n_base]}
    new = set(class_ids) - base
    return base, new
