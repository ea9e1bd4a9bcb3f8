"""Zero-shot and linear-probe prediction over embeddings.

Zero-shot scores are cosine similarities against per-class prototype
vectors; the invariant variant applies a fitted projection to both sides
first. Probes are multinomial logistic regressions trained by
deterministic full-batch descent.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .estimator import InvariantProjection


class PredictorError(Exception):
    pass


class DegeneratePrototypeError(PredictorError):
    def __init__(self, class_index: int):
        super().__init__(f"projection annihilates prototype of class {class_index}")
        self.class_index = class_index


@dataclass
class Prediction:
    label: int
    probs: np.ndarray    # (C,), sums to 1
    scores: np.ndarray   # (C,), pre-softmax similarities


def _softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _predictions(scores: np.ndarray) -> list[Prediction]:
    probs = _softmax(scores)
    out = []
    for i in range(scores.shape[0]):
        # argmax with lowest-class-id tie break (argmax returns first max)
        label = int(np.argmax(scores[i]))
        out.append(Prediction(label=label, probs=probs[i], scores=scores[i]))
    return out


def _normalize_rows(m: np.ndarray, what: str) -> np.ndarray:
    norms = np.linalg.norm(m, axis=1)
    bad = np.nonzero(norms < 1e-12)[0]
    if len(bad):
        raise PredictorError(f"zero-norm {what} at row {bad[0]}")
    return m / norms[:, None]


def zero_shot_predict(image_embs: np.ndarray, text_protos: np.ndarray,
                      temperature: float = 1.0) -> list[Prediction]:
    """Cosine similarity against class prototypes, softmax over classes."""
    image_embs = np.asarray(image_embs, dtype=np.float64)
    text_protos = np.asarray(text_protos, dtype=np.float64)
    if text_protos.shape[0] < 1:
        raise PredictorError("need at least one class prototype")
    if image_embs.shape[1] != text_protos.shape[1]:
        raise PredictorError("embedding/prototype dimension mismatch")
    imgs = _normalize_rows(image_embs, "embedding")
    protos = _normalize_rows(text_protos, "prototype")
    scores = temperature * (imgs @ protos.T)
    return _predictions(scores)


def invariant_predict(image_embs: np.ndarray, text_protos: np.ndarray,
                      proj: InvariantProjection, temperature: float = 1.0
                      ) -> list[Prediction]:
    """Zero-shot prediction with both sides mapped into the invariant
    subspace before the cosine."""
    image_embs = np.asarray(image_embs, dtype=np.float64)
    text_protos = np.asarray(text_protos, dtype=np.float64)
    if proj.dim != image_embs.shape[1]:
        raise PredictorError("projection dimension mismatch")
    proj_protos = proj.project(text_protos)
    norms = np.linalg.norm(proj_protos, axis=1)
    bad = np.nonzero(norms < 1e-12)[0]
    if len(bad):
        raise DegeneratePrototypeError(int(bad[0]))
    return zero_shot_predict(proj.project(image_embs), proj_protos, temperature)


@dataclass
class LinearProbe:
    weights: np.ndarray   # (C, F)
    bias: np.ndarray      # (C,)
    classes: np.ndarray   # (C,) class ids, ascending
    epochs_run: int = 0
    final_loss: float = 0.0
    l2: float = 0.0

    @property
    def feature_dim(self) -> int:
        return self.weights.shape[1]

    def to_json(self) -> dict:
        return {"feature_dim": int(self.feature_dim), "classes": self.classes.tolist(),
                "l2": self.l2, "weights": self.weights.tolist(),
                "bias": self.bias.tolist()}

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "LinearProbe":
        d = json.loads(Path(path).read_text())
        return cls(weights=np.array(d["weights"], dtype=np.float64),
                   bias=np.array(d["bias"], dtype=np.float64),
                   classes=np.array(d["classes"]), l2=d["l2"])


def _probe_loss_grad(w, b, x, y_onehot, l2):
    logits = x @ w.T + b
    probs = _softmax(logits)
    n = x.shape[0]
    ce = -np.sum(y_onehot * np.log(np.maximum(probs, 1e-300))) / n
    loss = ce + 0.5 * l2 * np.sum(w * w)
    diff = (probs - y_onehot) / n
    gw = diff.T @ x + l2 * w
    gb = diff.sum(axis=0)
    return loss, gw, gb


def train_linear_probe(features: np.ndarray, labels: np.ndarray, *,
                       l2: float = 1e-4, max_epochs: int = 500,
                       tol: float = 1e-7, step: float = 1.0) -> LinearProbe:
    """Multinomial logistic regression, zero init, full-batch descent with
    backtracking; deterministic for fixed inputs."""
    x = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    if x.ndim != 2 or x.shape[0] == 0:
        raise PredictorError("empty or malformed feature matrix")
    if x.shape[0] != labels.shape[0]:
        raise PredictorError("feature/label count mismatch")
    classes = np.unique(labels)
    class_index = {c: i for i, c in enumerate(classes)}
    y_onehot = np.zeros((x.shape[0], len(classes)))
    for i, lab in enumerate(labels):
        y_onehot[i, class_index[lab]] = 1.0
    w = np.zeros((len(classes), x.shape[1]))
    b = np.zeros(len(classes))
    loss, gw, gb = _probe_loss_grad(w, b, x, y_onehot, l2)
    epochs = 0
    for epochs in range(1, max_epochs + 1):
        eta = step
        while eta >= 1e-12:
            w2, b2 = w - eta * gw, b - eta * gb
            loss2, gw2, gb2 = _probe_loss_grad(w2, b2, x, y_onehot, l2)
            if loss2 <= loss:
                break
            eta /= 2.0
        else:
            break
        if loss - loss2 < tol * max(abs(loss), 1.0):
            w, b, loss = w2, b2, loss2
            break
        w, b, loss, gw, gb = w2, b2, loss2, gw2, gb2
    return LinearProbe(weights=w, bias=b, classes=classes,
                       epochs_run=epochs, final_loss=float(loss), l2=l2)


def probe_predict(probe: LinearProbe, features: np.ndarray) -> list[Prediction]:
    """Affine scores and softmax; labels reported as original class ids."""
    x = np.asarray(features, dtype=np.float64)
    if x.shape[1] != probe.feature_dim:
        raise PredictorError("feature dimension mismatch")
    scores = x @ probe.weights.T + probe.bias
    preds = _predictions(scores)
    for p in preds:
        p.label = int(probe.classes[p.label])
    return preds
