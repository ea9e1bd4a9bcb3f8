"""Synthetic linear-mixing SCM used as ground-truth oracle.

Latents split into an invariant block (distribution depends only on the
class) and a variant block (class mean plus an additive per-environment
shift). Observations are an invertible linear mix of the latent vector,
so the true invariant subspace is known exactly and every estimator
claim can be checked against it.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .store import EmbeddingDataset, EmbeddingRecord, Modality, Role

MAX_CONDITION = 100.0


@dataclass(frozen=True)
class WorldSpec:
    d_inv: int
    d_var: int
    n_classes: int
    n_envs: int
    sigma: float = 1.0
    shift_scale: float = 1.0
    # spread of the intervened variant draw, in units of sigma; interventions
    # (augmentations, caption rewrites) move variant factors far beyond the
    # within-domain spread of natural samples
    intervention_scale: float = 20.0

    def __post_init__(self):
        for name in ("d_inv", "d_var", "n_classes", "n_envs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass(frozen=True)
class SyntheticWorld:
    spec: WorldSpec
    class_means_inv: np.ndarray   # (C, d_inv)
    class_means_var: np.ndarray   # (C, d_var)
    env_shifts: np.ndarray        # (n_envs, d_var), additive on the variant block
    mixing: np.ndarray            # (D, D), invertible
    seed: int

    @property
    def dim(self) -> int:
        return self.spec.d_inv + self.spec.d_var

    def condition_number(self) -> float:
        s = np.linalg.svd(self.mixing, compute_uv=False)
        return float(s[0] / s[-1])


@dataclass
class SampleBatch:
    """A dataset plus the ground-truth latents it was generated from."""
    dataset: EmbeddingDataset
    latents: dict[int, np.ndarray] = field(default_factory=dict)  # record id -> z


def make_world(spec: WorldSpec, seed: int) -> SyntheticWorld:
    """Draw a world; the mixing matrix is redrawn until well conditioned."""
    rng = np.random.default_rng(seed)
    d = spec.d_inv + spec.d_var
    means_inv = rng.standard_normal((spec.n_classes, spec.d_inv))
    means_var = rng.standard_normal((spec.n_classes, spec.d_var))
    shifts = spec.shift_scale * rng.standard_normal((spec.n_envs, spec.d_var))
    while True:
        mixing = rng.standard_normal((d, d))
        s = np.linalg.svd(mixing, compute_uv=False)
        if s[0] / s[-1] <= MAX_CONDITION:
            break
    return SyntheticWorld(spec=spec, class_means_inv=means_inv,
                          class_means_var=means_var, env_shifts=shifts,
                          mixing=mixing, seed=seed)


def _default_manifest(world: SyntheticWorld):
    domains = {e: f"env{e}" for e in range(world.spec.n_envs)}
    classes = {c: f"class{c}" for c in range(world.spec.n_classes)}
    return domains, classes


def sample_observational(world: SyntheticWorld, env: int, n: int, seed: int,
                         id_offset: int = 0) -> SampleBatch:
    """Draw n image-modality records from environment ``env``."""
    if not 0 <= env < world.spec.n_envs:
        raise IndexError(f"env {env} out of range")
    rng = np.random.default_rng(seed)
    spec = world.spec
    sigma = spec.sigma
    records, latents = [], {}
    for i in range(n):
        y = int(rng.integers(spec.n_classes))
        z_inv = world.class_means_inv[y] + sigma * rng.standard_normal(spec.d_inv)
        z_var = (world.class_means_var[y] + world.env_shifts[env]
                 + sigma * rng.standard_normal(spec.d_var))
        z = np.concatenate([z_inv, z_var])
        rid = id_offset + i
        records.append(EmbeddingRecord(
            id=rid, modality=Modality.IMAGE, role=Role.ORIGINAL, pair_id=None,
            domain_id=env, class_id=y, vector=world.mixing @ z))
        latents[rid] = z
    domains, classes = _default_manifest(world)
    return SampleBatch(EmbeddingDataset(world.dim, records, domains, classes), latents)


def sample_interventional_pairs(world: SyntheticWorld, env: int, n: int, seed: int,
                                id_offset: int = 0, with_text: bool = False) -> SampleBatch:
    """Draw n original/intervened pair groups sharing the invariant latent draw.

    Each pair fixes one invariant draw and takes two independent variant
    draws, so the true invariant projection annihilates the difference.
    With ``with_text`` each sample additionally gets a text original and
    a text intervened record (frozen variant reference at zero), giving
    the four-record groups the cross-modal pair builder consumes.
    """
    if not 0 <= env < world.spec.n_envs:
        raise IndexError(f"env {env} out of range")
    rng = np.random.default_rng(seed)
    spec = world.spec
    sigma = spec.sigma
    stride = 4 if with_text else 2
    records, latents = [], {}

    def emit(rid, modality, role, pair_id, y, z):
        records.append(EmbeddingRecord(
            id=rid, modality=modality, role=role, pair_id=pair_id,
            domain_id=env, class_id=y, vector=world.mixing @ z))
        latents[rid] = z

    for i in range(n):
        y = int(rng.integers(spec.n_classes))
        z_inv = world.class_means_inv[y] + sigma * rng.standard_normal(spec.d_inv)
        var_mean = world.class_means_var[y] + world.env_shifts[env]
        z_var_a = var_mean + sigma * rng.standard_normal(spec.d_var)
        z_var_b = var_mean + spec.intervention_scale * sigma * rng.standard_normal(spec.d_var)
        base = id_offset + stride * i
        emit(base, Modality.IMAGE, Role.ORIGINAL, None, y,
             np.concatenate([z_inv, z_var_a]))
        emit(base + 1, Modality.IMAGE, Role.INTERVENED, base, y,
             np.concatenate([z_inv, z_var_b]))
        if with_text:
            t_var_a = sigma * rng.standard_normal(spec.d_var)
            t_var_b = spec.intervention_scale * sigma * rng.standard_normal(spec.d_var)
            emit(base + 2, Modality.TEXT, Role.ORIGINAL, None, y,
                 np.concatenate([z_inv, t_var_a]))
            emit(base + 3, Modality.TEXT, Role.INTERVENED, base + 2, y,
                 np.concatenate([z_inv, t_var_b]))
    domains, classes = _default_manifest(world)
    return SampleBatch(EmbeddingDataset(world.dim, records, domains, classes), latents)


def true_invariant_subspace(world: SyntheticWorld) -> np.ndarray:
    """Orthonormal basis (d_inv, D) of the complement of the variant columns.

    Equals the row-space of the invariant block of the mixing inverse.
    """
    var_cols = world.mixing[:, world.spec.d_inv:]
    u, _, _ = np.linalg.svd(var_cols, full_matrices=True)
    return u[:, world.spec.d_var:].T.copy()


def make_text_prototypes(world: SyntheticWorld, variant_ref: np.ndarray) -> np.ndarray:
    """Per-class prototype vectors (C, D) sharing one frozen variant block.

    Models text embeddings that do not track environment shift: only the
    invariant block varies with the class.
    """
    variant_ref = np.asarray(variant_ref, dtype=np.float64)
    if variant_ref.shape != (world.spec.d_var,):
        raise ValueError(f"variant_ref must have shape ({world.spec.d_var},)")
    protos = []
    for c in range(world.spec.n_classes):
        z = np.concatenate([world.class_means_inv[c], variant_ref])
        protos.append(world.mixing @ z)
    return np.stack(protos)


def world_to_json(world: SyntheticWorld) -> dict:
    return {
        "spec": {"d_inv": world.spec.d_inv, "d_var": world.spec.d_var,
                 "n_classes": world.spec.n_classes, "n_envs": world.spec.n_envs,
                 "sigma": world.spec.sigma, "shift_scale": world.spec.shift_scale,
                 "intervention_scale": world.spec.intervention_scale},
        "seed": world.seed,
        "mixing": world.mixing.tolist(),
        "class_means_inv": world.class_means_inv.tolist(),
        "class_means_var": world.class_means_var.tolist(),
        "env_shifts": world.env_shifts.tolist(),
    }


def write_truth(path: str | Path, world: SyntheticWorld, batches: list[SampleBatch]) -> None:
    """Side file with per-record latents and the true invariant basis."""
    latents: dict[str, list[float]] = {}
    for b in batches:
        for rid, z in b.latents.items():
            latents[str(rid)] = z.tolist()
    payload = {
        "world": world_to_json(world),
        "true_basis": true_invariant_subspace(world).tolist(),
        "latents": latents,
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True) + "\n")
