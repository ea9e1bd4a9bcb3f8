import numpy as np
import pytest

from icm.store import EmbeddingDataset, EmbeddingRecord, Modality, Role


def make_record(rid, dim=4, modality=Modality.IMAGE, role=Role.ORIGINAL,
                pair_id=None, domain_id=0, class_id=0, rng=None):
    vec = (rng.standard_normal(dim) if rng is not None
           else np.linspace(0.0, 1.0, dim)).astype(np.float32)
    return EmbeddingRecord(id=rid, modality=modality, role=role, pair_id=pair_id,
                           domain_id=domain_id, class_id=class_id, vector=vec)


def make_dataset(n_pairs=3, dim=4, n_domains=2, n_classes=2, seed=0,
                 with_text=False):
    rng = np.random.default_rng(seed)
    records = []
    rid = 0
    for i in range(n_pairs):
        dom = i % n_domains
        cls = i % n_classes
        orig = make_record(rid, dim, Modality.IMAGE, Role.ORIGINAL,
                           None, dom, cls, rng)
        interv = make_record(rid + 1, dim, Modality.IMAGE, Role.INTERVENED,
                             rid, dom, cls, rng)
        records += [orig, interv]
        rid += 2
        if with_text:
            torig = make_record(rid, dim, Modality.TEXT, Role.ORIGINAL,
                                None, dom, cls, rng)
            tint = make_record(rid + 1, dim, Modality.TEXT, Role.INTERVENED,
                               rid, dom, cls, rng)
            records += [torig, tint]
            rid += 2
    return EmbeddingDataset(
        dim=dim, records=records,
        domains={d: f"dom{d}" for d in range(n_domains)},
        classes={c: f"cls{c}" for c in range(n_classes)})


@pytest.fixture
def tiny_dataset():
    return make_dataset()
