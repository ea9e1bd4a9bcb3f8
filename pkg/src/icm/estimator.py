"""Invariant-subspace estimation from interventional pair matrices.

The closed-form path eigendecomposes the regularized correlation matrix
``Z^T Z - lambda * Delta^T Delta`` and keeps the top eigenvectors by
algebraic value; the matrix is generally indefinite. The gradient path
minimizes the same objective by projected descent on the set of
row-orthonormal matrices.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .pairs import PairMatrices

SYM_TOL = 1e-10


class EstimatorError(Exception):
    pass


@dataclass
class InvariantProjection:
    a_inv: np.ndarray            # (d_inv, D), row-orthonormal
    lam: float
    d_inv: int
    eigvals: np.ndarray | None   # (D,) descending; closed-form path only
    objective: float
    residual: float
    source: str                  # "closed_form" | "gradient"
    converged: bool = True

    @property
    def dim(self) -> int:
        return self.a_inv.shape[1]

    def project(self, vectors: np.ndarray) -> np.ndarray:
        """Map row vectors (n, D) into the invariant coordinates (n, d_inv)."""
        return np.asarray(vectors, dtype=np.float64) @ self.a_inv.T

    def to_json(self) -> dict:
        return {
            "dim": int(self.dim),
            "d_inv": int(self.d_inv),
            "lambda": self.lam,
            "source": self.source,
            "objective": self.objective,
            "residual": self.residual,
            "rows": [[float(x) for x in row] for row in self.a_inv],
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "InvariantProjection":
        d = json.loads(Path(path).read_text())
        return cls(a_inv=np.array(d["rows"], dtype=np.float64), lam=d["lambda"],
                   d_inv=d["d_inv"], eigvals=None, objective=d["objective"],
                   residual=d["residual"], source=d["source"])


def assemble_correlation(pairs: PairMatrices, lam: float) -> np.ndarray:
    """Regularized correlation matrix, symmetrized against rounding."""
    if pairs.n_rows < 1:
        raise EstimatorError("empty pair matrices")
    z = pairs.z_hat
    delta = pairs.delta
    m = z.T @ z - lam * (delta.T @ delta)
    return (m + m.T) / 2.0


def _canonical_sign(v: np.ndarray) -> np.ndarray:
    """Flip so the largest-magnitude component (first on ties) is positive."""
    idx = int(np.argmax(np.abs(v)))
    peak = np.abs(v[idx])
    # tie: first component whose magnitude matches the peak
    for j in range(len(v)):
        if np.abs(v[j]) == peak:
            idx = j
            break
    if v[idx] < 0:
        return -v
    if v[idx] == 0:
        nz = np.nonzero(v)[0]
        if len(nz) and v[nz[0]] < 0:
            return -v
    return v


def sym_eig(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix.

    Returns eigenvalues in descending algebraic order and row-orthonormal
    eigenvectors with deterministic sign canonicalization; near-equal
    eigenvalues (within 1e-12) are ordered by lexicographic comparison of
    their canonical eigenvectors.
    """
    m = np.asarray(m, dtype=np.float64)
    scale = max(np.abs(m).max(), 1.0)
    if np.abs(m - m.T).max() > SYM_TOL * scale:
        raise EstimatorError("matrix is not symmetric within tolerance")
    m = (m + m.T) / 2.0
    w, v = np.linalg.eigh(m)         # ascending
    order = np.argsort(-w, kind="stable")
    w = w[order]
    vecs = [_canonical_sign(v[:, i]) for i in order]
    # stabilize ordering inside numerically degenerate eigenvalue groups
    i = 0
    while i < len(w):
        j = i + 1
        while j < len(w) and abs(w[j] - w[i]) <= 1e-12 * max(1.0, abs(w[i])):
            j += 1
        if j - i > 1:
            group = sorted(range(i, j), key=lambda k: tuple(vecs[k]), reverse=True)
            vecs[i:j] = [vecs[k] for k in group]
        i = j
    return w, np.stack(vecs)


def objective_value(a: np.ndarray, pairs: PairMatrices, lam: float) -> float:
    """Reconstruction error plus weighted pair-consistency penalty."""
    a = np.asarray(a, dtype=np.float64)
    if a.shape[1] != pairs.dim:
        raise EstimatorError("shape mismatch")
    z = pairs.z_hat
    recon = z - (z @ a.T) @ a
    cons = pairs.delta @ a.T
    return float(np.sum(recon * recon) + lam * np.sum(cons * cons))


def objective_gradient(a: np.ndarray, pairs: PairMatrices, lam: float) -> np.ndarray:
    """Euclidean gradient of objective_value with respect to ``a``."""
    a = np.asarray(a, dtype=np.float64)
    if a.shape[1] != pairs.dim:
        raise EstimatorError("shape mismatch")
    g = pairs.z_hat.T @ pairs.z_hat
    k = pairs.delta.T @ pairs.delta
    ag = a @ g
    aat_a = a.T @ a
    return -4.0 * ag + 2.0 * (ag @ aat_a + (a @ aat_a) @ g) + 2.0 * lam * (a @ k)


def consistency_residual(a: np.ndarray, pairs: PairMatrices) -> float:
    """Mean relative shrinkage of pair differences under the projection."""
    if pairs.n_rows == 0:
        raise EstimatorError("empty pairs")
    a = np.asarray(a, dtype=np.float64)
    delta = pairs.delta
    num = np.linalg.norm(delta @ a.T, axis=1)
    den = np.maximum(np.linalg.norm(delta, axis=1), 1e-12)
    return float(np.mean(num / den))


def subspace_alignment(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Principal angles (radians, ascending) between two row-spaces."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise EstimatorError("shape mismatch")
    cos = np.clip(np.sort(np.linalg.svd(a @ b.T, compute_uv=False))[::-1], 0.0, 1.0)
    angles = np.arccos(cos)
    # arccos loses precision near 0; recompute small angles from sines
    if angles.size and angles.max() < np.pi / 4:
        sin = np.sort(np.linalg.svd(a - (a @ b.T) @ b, compute_uv=False))
        angles = np.arcsin(np.clip(sin, 0.0, 1.0))
    return angles


def _finish(a: np.ndarray, pairs: PairMatrices, lam: float, d_inv: int,
            eigvals, source: str, converged: bool = True) -> InvariantProjection:
    return InvariantProjection(
        a_inv=a, lam=lam, d_inv=d_inv, eigvals=eigvals,
        objective=objective_value(a, pairs, lam),
        residual=consistency_residual(a, pairs),
        source=source, converged=converged)


def fit_closed_form(pairs: PairMatrices, lam: float, d_inv: int) -> InvariantProjection:
    """Global optimum: top eigenvectors of the regularized correlation."""
    if not 1 <= d_inv <= pairs.dim:
        raise EstimatorError(f"d_inv must be in [1, {pairs.dim}]")
    w, v = sym_eig(assemble_correlation(pairs, lam))
    return _finish(v[:d_inv].copy(), pairs, lam, d_inv, w, "closed_form")


def gram_schmidt(a: np.ndarray) -> np.ndarray:
    """Deterministic modified Gram-Schmidt over rows, in row order."""
    a = np.array(a, dtype=np.float64)
    for i in range(a.shape[0]):
        for j in range(i):
            a[i] -= np.dot(a[i], a[j]) * a[j]
        norm = np.linalg.norm(a[i])
        if norm < 1e-300:
            raise EstimatorError("rank-deficient iterate in Gram-Schmidt")
        a[i] /= norm
    return a


def random_orthonormal(d_inv: int, dim: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return gram_schmidt(rng.standard_normal((d_inv, dim)))


def fit_gradient(pairs: PairMatrices, lam: float, d_inv: int, *,
                 max_iters: int = 50_000, step: float = 1e-3, tol: float = 1e-10,
                 seed: int = 0, init: np.ndarray | None = None) -> InvariantProjection:
    """Projected gradient descent with backtracking and re-orthonormalization.

    Stops when the tangent gradient norm falls below ``tol * (1 + |obj|)``
    or no step of any size decreases the objective; a decrease-based stop
    would quit on the flat plateaus that surround saddle points. The
    objective sequence is non-increasing by construction; failure to
    converge inside ``max_iters`` is flagged, not raised.
    """
    if not 1 <= d_inv <= pairs.dim:
        raise EstimatorError(f"d_inv must be in [1, {pairs.dim}]")
    a = gram_schmidt(init) if init is not None else random_orthonormal(d_inv, pairs.dim, seed)
    obj = objective_value(a, pairs, lam)
    converged = False
    eta = step
    for _ in range(max_iters):
        grad = objective_gradient(a, pairs, lam)
        # descend along the tangent component; the normal component only
        # fights the retraction
        sym = (grad @ a.T + a @ grad.T) / 2.0
        tangent = grad - sym @ a
        if np.linalg.norm(tangent) <= tol * (1.0 + abs(obj)):
            converged = True
            break
        eta *= 4.0  # retry larger steps after each accepted iterate
        accepted = False
        while eta >= 1e-12:
            try:
                cand = gram_schmidt(a - eta * tangent)
            except EstimatorError:
                eta /= 2.0
                continue
            cand_obj = objective_value(cand, pairs, lam)
            if cand_obj <= obj:
                accepted = True
                break
            eta /= 2.0
        if not accepted:
            converged = True
            break
        a, obj = cand, cand_obj
    return _finish(a, pairs, lam, d_inv, None, "gradient", converged)


def default_dinv_grid(dim: int) -> list[int]:
    """Fractional grid; for D=512 this is {64, 128, ..., 448}."""
    grid = sorted({max(1, round(dim * k / 8)) for k in range(1, 8)})
    return [g for g in grid if g <= dim]


DEFAULT_LAMBDA_GRID = [0.1, 0.3, 1.0, 3.0, 10.0]


def select_hyperparams(pairs_train: PairMatrices, dataset_val, text_protos: np.ndarray,
                       lambda_grid=None, dinv_grid=None, temperature: float = 1.0):
    """Grid search scored by invariant zero-shot accuracy on a labeled
    validation dataset; ties prefer smaller d_inv, then smaller lambda.

    Returns ``(best_lambda, best_d_inv, table)`` where table rows are
    ``(lambda, d_inv, accuracy)`` in grid order.
    """
    from . import predictors  # deferred: predictors depends on this module
    from .store import Modality, Role

    lambda_grid = list(lambda_grid) if lambda_grid is not None else list(DEFAULT_LAMBDA_GRID)
    dinv_grid = list(dinv_grid) if dinv_grid is not None else default_dinv_grid(pairs_train.dim)
    if not lambda_grid or not dinv_grid:
        raise EstimatorError("empty hyperparameter grid")
    val_recs = [r for r in dataset_val.records
                if r.modality == Modality.IMAGE and r.role == Role.ORIGINAL]
    if not val_recs:
        raise EstimatorError("validation dataset has no labeled image records")
    feats = np.stack([r.vector for r in val_recs]).astype(np.float64)
    labels = np.array([r.class_id for r in val_recs])

    table = []
    best = None
    for lam in lambda_grid:
        for d_inv in dinv_grid:
            proj = fit_closed_form(pairs_train, lam, d_inv)
            preds = predictors.invariant_predict(feats, text_protos, proj, temperature)
            acc = float(np.mean([p.label == y for p, y in zip(preds, labels)]))
            table.append((lam, d_inv, acc))
            key = (-acc, d_inv, lam)
            if best is None or key < best[0]:
                best = (key, lam, d_inv)
    return best[1], best[2], table
