"""Evaluation protocols: leave-one-out domain shift, base/new open-class
splits, and worst-case environment risk."""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import predictors
from .estimator import InvariantProjection, fit_closed_form, fit_gradient
from .pairs import PairMode, build_pairs
from .store import EmbeddingDataset, Modality, Role, split_by_domain, split_classes

log = logging.getLogger(__name__)


class EvaluationError(Exception):
    pass


METHODS = ("zero-shot", "icm", "icm-probe", "probe")


@dataclass
class MethodConfig:
    method: str = "icm"
    lam: float = 1.0
    d_inv: int = 1
    pair_mode: PairMode = PairMode.IMAGE
    temperature: float = 1.0
    l2: float = 1e-4
    solver: str = "closed_form"
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.pair_mode, str):
            self.pair_mode = PairMode(self.pair_mode)
        if self.method not in METHODS:
            raise EvaluationError(f"unknown method {self.method!r}")

    def to_json(self) -> dict:
        return {"method": self.method, "lambda": self.lam, "d_inv": self.d_inv,
                "pair_mode": self.pair_mode.value, "temperature": self.temperature,
                "l2": self.l2, "solver": self.solver, "seed": self.seed}


@dataclass
class Cell:
    domain: str
    split: str | None
    method: str
    accuracy: float
    n: int


@dataclass
class EvalReport:
    protocol: str
    cells: list[Cell] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    @property
    def average(self) -> float:
        accs = [c.accuracy for c in self.cells if c.split in (None, "Total")]
        return float(np.mean(accs)) if accs else float("nan")

    @property
    def worst_risk(self) -> float:
        accs = [c.accuracy for c in self.cells if c.split in (None, "Total")]
        return float(max(1.0 - a for a in accs)) if accs else float("nan")

    def to_json(self) -> dict:
        return {
            "protocol": self.protocol,
            "config": self.config,
            "cells": [{"domain": c.domain, "split": c.split, "method": c.method,
                       "accuracy": c.accuracy, "n": c.n} for c in self.cells],
            "aggregates": {"avg": self.average, "worst_risk": self.worst_risk},
        }


def per_domain_risks(predict_fn, dataset: EmbeddingDataset) -> dict[int, float]:
    """Empirical 0-1 error per domain over labeled image originals."""
    risks: dict[int, float] = {}
    for dom in sorted(dataset.domains):
        recs = dataset.select(modality=Modality.IMAGE, role=Role.ORIGINAL,
                              domain_id=dom)
        if not recs:
            log.warning("domain %d has no evaluation records; skipped", dom)
            continue
        feats = np.stack([r.vector for r in recs]).astype(np.float64)
        labels = [r.class_id for r in recs]
        preds = predict_fn(feats)
        risks[dom] = float(np.mean([p.label != y for p, y in zip(preds, labels)]))
    return risks


def ood_risk(risks: dict[int, float]) -> float:
    """Worst-case environment risk."""
    if not risks:
        raise EvaluationError("empty risk map")
    return max(risks.values())


def _fit_projection(train: EmbeddingDataset, config: MethodConfig) -> InvariantProjection:
    pairs = build_pairs(train, config.pair_mode)
    if config.solver == "gradient":
        return fit_gradient(pairs, config.lam, config.d_inv, seed=config.seed)
    return fit_closed_form(pairs, config.lam, config.d_inv)


def _make_predict_fn(train: EmbeddingDataset, config: MethodConfig,
                     text_protos: np.ndarray | None,
                     class_subset: set[int] | None = None):
    """Closure mapping a feature matrix to predictions, per the method.

    ``class_subset`` restricts probe training data (base/new protocol);
    zero-shot methods always score against the full prototype set.
    """
    def train_features_labels(project=None):
        recs = train.select(modality=Modality.IMAGE, role=Role.ORIGINAL)
        if class_subset is not None:
            recs = [r for r in recs if r.class_id in class_subset]
        if not recs:
            raise EvaluationError("no probe training records")
        feats = np.stack([r.vector for r in recs]).astype(np.float64)
        if project is not None:
            feats = project(feats)
        return feats, np.array([r.class_id for r in recs])

    if config.method == "zero-shot":
        if text_protos is None:
            raise EvaluationError("zero-shot method requires text prototypes")
        return lambda f: predictors.zero_shot_predict(f, text_protos, config.temperature)
    if config.method == "icm":
        if text_protos is None:
            raise EvaluationError("icm method requires text prototypes")
        proj = _fit_projection(train, config)
        return lambda f: predictors.invariant_predict(f, text_protos, proj,
                                                      config.temperature)
    if config.method == "icm-probe":
        proj = _fit_projection(train, config)
        feats, labels = train_features_labels(proj.project)
        probe = predictors.train_linear_probe(feats, labels, l2=config.l2)
        return lambda f: predictors.probe_predict(probe, proj.project(f))
    feats, labels = train_features_labels()
    probe = predictors.train_linear_probe(feats, labels, l2=config.l2)
    return lambda f: predictors.probe_predict(probe, f)


def _domain_accuracy(predict_fn, dataset: EmbeddingDataset, domain: int,
                     class_subset: set[int] | None = None):
    recs = dataset.select(modality=Modality.IMAGE, role=Role.ORIGINAL,
                          domain_id=domain)
    if class_subset is not None:
        recs = [r for r in recs if r.class_id in class_subset]
    if not recs:
        return None, 0
    feats = np.stack([r.vector for r in recs]).astype(np.float64)
    preds = predict_fn(feats)
    acc = float(np.mean([p.label == r.class_id for p, r in zip(preds, recs)]))
    return acc, len(recs)


def run_leave_one_out(dataset: EmbeddingDataset, config: MethodConfig,
                      text_protos: np.ndarray | None = None) -> EvalReport:
    """For each domain: fit on the others, evaluate on the held-out one."""
    if len(dataset.domains) < 2:
        raise EvaluationError("leave-one-out needs at least 2 domains")
    report = EvalReport(protocol="leave_one_out", config=config.to_json())
    for dom in sorted(dataset.domains):
        train, test = split_by_domain(dataset, dom)
        predict_fn = _make_predict_fn(train, config, text_protos)
        acc, n = _domain_accuracy(predict_fn, test, dom)
        if acc is None:
            log.warning("domain %d empty at evaluation; omitted", dom)
            continue
        report.cells.append(Cell(dataset.domains[dom], None, config.method, acc, n))
    return report


def run_base_new(dataset: EmbeddingDataset, base_fraction: float, seed: int,
                 config: MethodConfig, text_protos: np.ndarray | None = None
                 ) -> EvalReport:
    """Leave-one-out with fitting restricted to base classes; evaluation
    reported on Base, New, and Total record sets of the held-out domain."""
    if len({r.class_id for r in dataset.records}) < 2:
        raise EvaluationError("base/new split needs at least 2 classes")
    base_ids, new_ids = split_classes(dataset, base_fraction, seed)
    report = EvalReport(protocol="base_new", config={
        **config.to_json(), "base_fraction": base_fraction, "split_seed": seed,
        "base_classes": sorted(base_ids), "new_classes": sorted(new_ids)})
    for dom in sorted(dataset.domains):
        train, test = split_by_domain(dataset, dom)
        base_train = EmbeddingDataset(
            train.dim, [r for r in train.records if r.class_id in base_ids],
            dict(train.domains), dict(train.classes))
        predict_fn = _make_predict_fn(base_train, config, text_protos,
                                      class_subset=base_ids)
        for split_name, subset in (("Base", base_ids), ("New", new_ids),
                                   ("Total", base_ids | new_ids)):
            acc, n = _domain_accuracy(predict_fn, test, dom, subset)
            if acc is None:
                continue  # absent block, not zero
            report.cells.append(Cell(dataset.domains[dom], split_name,
                                     config.method, acc, n))
    return report


def run_worst_case(dataset: EmbeddingDataset, config: MethodConfig,
                   text_protos: np.ndarray | None = None) -> EvalReport:
    """Fit on the whole dataset, report per-environment risk and the max."""
    predict_fn = _make_predict_fn(dataset, config, text_protos)
    risks = per_domain_risks(predict_fn, dataset)
    report = EvalReport(protocol="worst_case", config=config.to_json())
    for dom, risk in sorted(risks.items()):
        n = len(dataset.select(modality=Modality.IMAGE, role=Role.ORIGINAL,
                               domain_id=dom))
        report.cells.append(Cell(dataset.domains[dom], None, config.method,
                                 1.0 - risk, n))
    return report


def render_markdown(report: EvalReport) -> str:
    domains = []
    for c in report.cells:
        if c.domain not in domains:
            domains.append(c.domain)
    splits = []
    for c in report.cells:
        key = c.split or ""
        if key not in splits:
            splits.append(key)
    lines = [f"# {report.protocol}", ""]
    header = ["Split" if any(splits) else "Method"] + domains + ["Avg"]
    lines.append("| " + " | ".join(header) + " |")
    lines.append("|" + "---|" * len(header))
    by_key = {(c.domain, c.split or ""): c.accuracy for c in report.cells}
    for sp in splits:
        row_label = sp if sp else report.cells[0].method
        vals = [by_key.get((d, sp)) for d in domains]
        present = [v for v in vals if v is not None]
        avg = float(np.mean(present)) if present else float("nan")
        cells = [f"{v * 100:.1f}" if v is not None else "-" for v in vals]
        lines.append("| " + " | ".join([row_label] + cells + [f"{avg * 100:.1f}"]) + " |")
    return "\n".join(lines) + "\n"


def emit_report(report: EvalReport, fmt: str, path: str | Path) -> None:
    """Serialize deterministically; json is the canonical machine format."""
    path = Path(path)
    if fmt == "json":
        path.write_text(json.dumps(report.to_json(), sort_keys=True, indent=2) + "\n")
    elif fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["domain", "split", "method", "accuracy", "n"])
        for c in report.cells:
            writer.writerow([c.domain, c.split or "", c.method, repr(c.accuracy), c.n])
        path.write_text(buf.getvalue())
    elif fmt == "markdown":
        path.write_text(render_markdown(report))
    else:
        raise EvaluationError(f"unknown report format {fmt!r}")
