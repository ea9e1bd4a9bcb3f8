"""Assemble aligned original/intervened embedding matrices for fitting.

The estimator consumes two row-aligned matrices: originals and their
interventional counterparts. In ``both`` mode each complete sample (an
image pair plus a text pair) contributes four rows, including the two
cross-modal combinations.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from .store import EmbeddingDataset, Modality, Role

log = logging.getLogger(__name__)


class PairMode(enum.Enum):
    IMAGE = "image"
    TEXT = "text"
    BOTH = "both"


class PairError(Exception):
    pass


@dataclass
class PairMatrices:
    z_hat: np.ndarray   # (N, D) originals
    z_do: np.ndarray    # (N, D) intervened counterparts, row-aligned
    provenance: list[str] = field(default_factory=list)
    skipped: int = 0    # incomplete samples dropped in `both` mode

    @property
    def dim(self) -> int:
        return self.z_hat.shape[1]

    @property
    def n_rows(self) -> int:
        return self.z_hat.shape[0]

    @property
    def delta(self) -> np.ndarray:
        return self.z_hat - self.z_do


def _modality_pairs(dataset: EmbeddingDataset, modality: Modality):
    """(original vector, intervened vector) pairs for one modality, keyed
    by original id so record order never matters."""
    originals = {r.id: r for r in dataset.records
                 if r.modality == modality and r.role == Role.ORIGINAL}
    out = []
    intervened = [r for r in dataset.records
                  if r.modality == modality and r.role == Role.INTERVENED]
    for r in sorted(intervened, key=lambda r: r.id):
        if r.pair_id in originals:
            out.append((r.pair_id, originals[r.pair_id].vector.astype(np.float64),
                        r.vector.astype(np.float64)))
    return out


def build_pairs(dataset: EmbeddingDataset, mode: PairMode) -> PairMatrices:
    """Collect pair rows per the requested mode.

    Cross-modal grouping pairs the i-th image original with the i-th text
    original, both ordered by record id.
    """
    if isinstance(mode, str):
        mode = PairMode(mode)
    rows_hat, rows_do, prov = [], [], []
    skipped = 0
    if mode in (PairMode.IMAGE, PairMode.TEXT):
        modality = Modality.IMAGE if mode == PairMode.IMAGE else Modality.TEXT
        tag = f"{mode.value}-{mode.value}"
        for _, v_orig, v_int in _modality_pairs(dataset, modality):
            rows_hat.append(v_orig)
            rows_do.append(v_int)
            prov.append(tag)
    else:
        img = _modality_pairs(dataset, Modality.IMAGE)
        txt = _modality_pairs(dataset, Modality.TEXT)
        n = min(len(img), len(txt))
        skipped = max(len(img), len(txt)) - n
        if skipped:
            log.warning("dropped %d incomplete samples in both mode", skipped)
        for i in range(n):
            _, iv, ivd = img[i]
            _, tv, tvd = txt[i]
            for hat, do, tag in ((iv, ivd, "image-image"), (tv, tvd, "text-text"),
                                 (iv, tvd, "image-text"), (tv, ivd, "text-image")):
                rows_hat.append(hat)
                rows_do.append(do)
                prov.append(tag)
    if not rows_hat:
        raise PairError(f"no complete pairs for mode {mode.value!r}")
    return PairMatrices(np.stack(rows_hat), np.stack(rows_do), prov, skipped)


def preprocess(pairs: PairMatrices, center: bool = False,
               l2_normalize: bool = False) -> PairMatrices:
    """Optional row normalization and column centering, in that order."""
    z_hat = pairs.z_hat.copy()
    z_do = pairs.z_do.copy()
    if l2_normalize:
        for m in (z_hat, z_do):
            norms = np.linalg.norm(m, axis=1)
            if np.any(norms < 1e-300):
                raise ValueError("zero-norm row under l2_normalize")
            m /= norms[:, None]
    if center:
        mean = z_hat.mean(axis=0)
        z_hat -= mean
        z_do -= mean
    return PairMatrices(z_hat, z_do, list(pairs.provenance), pairs.skipped)
