"""Command-line front end: synthetic generation, pair building, fitting,
prediction, evaluation, and hyperparameter sweeps.

Exit codes: 0 success, 1 runtime/domain error, 2 usage error. Each
command prints one machine-parseable summary line prefixed ICM-RESULT.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import estimator, evaluation, pairs as pairs_mod, predictors, scm, store


def _resolved_config(args: argparse.Namespace) -> dict:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    for k, v in cfg.items():
        if isinstance(v, Path):
            cfg[k] = str(v)
    return cfg


def _result_line(**kv) -> None:
    parts = " ".join(f"{k}={v}" for k, v in kv.items())
    print(f"ICM-RESULT {parts}")


def _load_protos(path: Path) -> np.ndarray:
    if path.suffix == ".npy":
        return np.load(path)
    data = json.loads(path.read_text())
    return np.array(data["vectors"], dtype=np.float64)


def _out_paths(out: str, default_stem: str) -> Path:
    """Treat a trailing-slash or existing-directory target as a directory."""
    p = Path(out)
    if out.endswith(("/", "\\")) or p.is_dir():
        p.mkdir(parents=True, exist_ok=True)
        return p / default_stem
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def cmd_synth(args) -> int:
    spec = scm.WorldSpec(d_inv=args.d_inv, d_var=args.d_var, n_classes=args.classes,
                         n_envs=args.envs, sigma=args.sigma,
                         shift_scale=args.shift_scale,
                         intervention_scale=args.intervention_scale)
    world = scm.make_world(spec, args.seed)
    batches = []
    offset = 0
    stride = 4 if args.with_text else 2
    per_env = [args.n // args.envs + (1 if e < args.n % args.envs else 0)
               for e in range(args.envs)]
    for env, n_env in enumerate(per_env):
        b = scm.sample_interventional_pairs(world, env, n_env, args.seed + 1 + env,
                                            id_offset=offset, with_text=args.with_text)
        batches.append(b)
        offset += stride * n_env
    if args.obs_n:
        for env in range(args.envs):
            b = scm.sample_observational(world, env, args.obs_n,
                                         args.seed + 1000 + env, id_offset=offset)
            batches.append(b)
            offset += args.obs_n
    records = [r for b in batches for r in b.dataset.records]
    dataset = store.EmbeddingDataset(world.dim, records,
                                     batches[0].dataset.domains,
                                     batches[0].dataset.classes)
    base = _out_paths(args.output, "world.icmb")
    if base.suffix != ".icmb":
        base = base.with_suffix(".icmb")
    store.write_dataset(dataset, base)
    truth_path = base.with_name(base.stem + ".truth.json")
    scm.write_truth(truth_path, world, batches)
    protos = scm.make_text_prototypes(world, np.zeros(spec.d_var))
    protos_path = base.with_name(base.stem + ".protos.json")
    protos_path.write_text(json.dumps(
        {"config": _resolved_config(args), "vectors": protos.tolist()},
        sort_keys=True) + "\n")
    cond = world.condition_number()
    print(f"dim={world.dim} records={len(records)} envs={args.envs} "
          f"classes={args.classes} condition={cond:.2f}")
    _result_line(cmd="synth", file=base, records=len(records),
                 condition=f"{cond:.4f}")
    return 0


def cmd_pairs(args) -> int:
    dataset = store.read_dataset(args.dataset)
    pm = pairs_mod.build_pairs(dataset, args.pair_mode)
    pm = pairs_mod.preprocess(pm, center=args.center, l2_normalize=args.l2_normalize)
    out = _out_paths(args.output, "pairs.npz")
    np.savez(out, z_hat=pm.z_hat, z_do=pm.z_do,
             provenance=np.array(pm.provenance),
             config=np.array([json.dumps(_resolved_config(args), sort_keys=True)]))
    _result_line(cmd="pairs", file=out, rows=pm.n_rows, skipped=pm.skipped)
    return 0


def _pairs_from_args(args) -> pairs_mod.PairMatrices:
    dataset = store.read_dataset(args.dataset)
    pm = pairs_mod.build_pairs(dataset, args.pair_mode)
    return pairs_mod.preprocess(pm, center=args.center,
                                l2_normalize=args.l2_normalize)


def cmd_fit(args) -> int:
    pm = _pairs_from_args(args)
    if args.solver == "gradient":
        proj = estimator.fit_gradient(pm, args.lam, args.d_inv, seed=args.seed)
        gap = float("nan")
    else:
        proj = estimator.fit_closed_form(pm, args.lam, args.d_inv)
        ev = proj.eigvals
        gap = float(ev[args.d_inv - 1] - ev[args.d_inv]) if args.d_inv < len(ev) else float("nan")
    out = _out_paths(args.output, "fit.proj.json")
    payload = proj.to_json()
    payload["config"] = _resolved_config(args)
    out.write_text(json.dumps(payload, sort_keys=True) + "\n")
    print(f"objective={proj.objective:.6g} residual={proj.residual:.6g} "
          f"eiggap={gap:.6g}")
    _result_line(cmd="fit", file=out, objective=f"{proj.objective:.6g}",
                 residual=f"{proj.residual:.6g}", eiggap=f"{gap:.6g}")
    return 0


def cmd_predict(args) -> int:
    dataset = store.read_dataset(args.dataset)
    protos = _load_protos(args.protos)
    recs = dataset.select(modality=store.Modality.IMAGE, role=store.Role.ORIGINAL)
    if not recs:
        raise evaluation.EvaluationError("no image records to predict on")
    feats = np.stack([r.vector for r in recs]).astype(np.float64)
    if args.proj is not None:
        proj = estimator.InvariantProjection.load(args.proj)
        preds = predictors.invariant_predict(feats, protos, proj, args.temperature)
    else:
        preds = predictors.zero_shot_predict(feats, protos, args.temperature)
    acc = float(np.mean([p.label == r.class_id for p, r in zip(preds, recs)]))
    out = _out_paths(args.output, "predictions.json")
    out.write_text(json.dumps({
        "config": _resolved_config(args),
        "predictions": [{"id": r.id, "label": p.label, "true": r.class_id}
                        for r, p in zip(recs, preds)],
        "accuracy": acc,
    }, sort_keys=True) + "\n")
    _result_line(cmd="predict", file=out, n=len(recs), accuracy=f"{acc:.6f}")
    return 0


def cmd_eval(args) -> int:
    dataset = store.read_dataset(args.dataset)
    protos = _load_protos(args.protos) if args.protos else None
    if args.method in ("zero-shot", "icm") and protos is None:
        print("error: method requires --protos", file=sys.stderr)
        return 2
    config = evaluation.MethodConfig(
        method=args.method, lam=args.lam, d_inv=args.d_inv,
        pair_mode=args.pair_mode, temperature=args.temperature, l2=args.l2,
        solver=args.solver, seed=args.seed)
    if args.protocol == "loo":
        report = evaluation.run_leave_one_out(dataset, config, protos)
    elif args.protocol == "base-new":
        report = evaluation.run_base_new(dataset, args.base_fraction, args.seed,
                                         config, protos)
    else:
        report = evaluation.run_worst_case(dataset, config, protos)
    report.config = {**report.config, "cli": _resolved_config(args)}
    out = _out_paths(args.output, f"report.{args.format}")
    evaluation.emit_report(report, args.format, out)
    _result_line(cmd="eval", file=out, protocol=report.protocol,
                 avg=f"{report.average:.6f}", worst_risk=f"{report.worst_risk:.6f}")
    return 0


def cmd_sweep(args) -> int:
    dataset = store.read_dataset(args.dataset)
    protos = _load_protos(args.protos)
    originals = dataset.select(role=store.Role.ORIGINAL)
    rng = np.random.default_rng(args.seed)
    val_ids = set()
    img_ids = [r.id for r in originals if r.modality == store.Modality.IMAGE]
    n_val = max(1, int(len(img_ids) * args.val_fraction))
    val_ids = set(rng.choice(img_ids, size=n_val, replace=False).tolist())
    fit_recs = [r for r in dataset.records
                if r.id not in val_ids and (r.pair_id is None or r.pair_id not in val_ids)]
    fit_ds = store.EmbeddingDataset(dataset.dim, fit_recs, dict(dataset.domains),
                                    dict(dataset.classes))
    val_recs = [r for r in dataset.records if r.id in val_ids]
    val_ds = store.EmbeddingDataset(dataset.dim, val_recs, dict(dataset.domains),
                                    dict(dataset.classes))
    pm = pairs_mod.build_pairs(fit_ds, args.pair_mode)
    lam_grid = [float(x) for x in args.lambda_grid.split(",")] if args.lambda_grid else None
    dinv_grid = [int(x) for x in args.dinv_grid.split(",")] if args.dinv_grid else None
    best_lam, best_dinv, table = estimator.select_hyperparams(
        pm, val_ds, protos, lam_grid, dinv_grid, args.temperature)
    rows = [{"lambda": lam, "d_inv": d, "accuracy": acc,
             "residual": estimator.consistency_residual(
                 estimator.fit_closed_form(pm, lam, d).a_inv, pm)}
            for lam, d, acc in table]
    out = _out_paths(args.output, "sweep.json")
    out.write_text(json.dumps({
        "config": _resolved_config(args),
        "selected": {"lambda": best_lam, "d_inv": best_dinv},
        "table": rows,
    }, sort_keys=True) + "\n")
    _result_line(cmd="sweep", file=out, selected_lambda=best_lam,
                 selected_d_inv=best_dinv)
    return 0


def cmd_validate(args) -> int:
    dataset = store.read_dataset(args.dataset)
    report = store.validate(dataset)
    for v in report.violations:
        print(f"violation kind={v.kind} record={v.record_id}: {v.message}")
    _result_line(cmd="validate", file=args.dataset,
                 violations=len(report.violations))
    return 0 if report.ok else 1


def _add_pair_flags(p):
    p.add_argument("--pair-mode", choices=["image", "text", "both"], default="image")
    p.add_argument("--center", action="store_true")
    p.add_argument("--l2-normalize", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="icm",
                                     description="Invariant-subspace estimation "
                                                 "and invariant prediction")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--d-inv", type=int, required=True)
    p.add_argument("--d-var", type=int, required=True)
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--envs", type=int, required=True)
    p.add_argument("--n", type=int, required=True, help="total pair groups")
    p.add_argument("--obs-n", type=int, default=0,
                   help="extra observational records per env")
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--shift-scale", type=float, default=1.0)
    p.add_argument("--intervention-scale", type=float, default=20.0)
    p.add_argument("--with-text", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("pairs", help="assemble pair matrices")
    p.add_argument("dataset")
    _add_pair_flags(p)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_pairs)

    p = sub.add_parser("fit", help="fit the invariant projection")
    p.add_argument("dataset")
    _add_pair_flags(p)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--d-inv", type=int, required=True)
    p.add_argument("--solver", choices=["closed-form", "gradient"],
                   default="closed-form")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="predict labels for image records")
    p.add_argument("dataset")
    p.add_argument("--protos", type=Path, required=True)
    p.add_argument("--proj", type=Path, default=None)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="run an evaluation protocol")
    p.add_argument("dataset")
    p.add_argument("--protocol", choices=["loo", "base-new", "worst-case"],
                   required=True)
    p.add_argument("--method", choices=list(evaluation.METHODS), default="icm")
    p.add_argument("--protos", type=Path, default=None)
    _add_pair_flags(p)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--d-inv", type=int, default=1)
    p.add_argument("--solver", choices=["closed_form", "gradient"],
                   default="closed_form")
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--l2", type=float, default=1e-4)
    p.add_argument("--base-fraction", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=["json", "csv", "markdown"], default="json")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="hyperparameter grid search")
    p.add_argument("dataset")
    p.add_argument("--protos", type=Path, required=True)
    _add_pair_flags(p)
    p.add_argument("--lambda-grid", default=None, help="comma-separated")
    p.add_argument("--dinv-grid", default=None, help="comma-separated")
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="check dataset invariants")
    p.add_argument("dataset")
    p.set_defaults(func=cmd_validate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "synth" and (args.d_inv < 1 or args.d_var < 1
                                    or args.classes < 1 or args.envs < 1
                                    or args.n < 0):
        parser.error("dimensions, classes, and envs must be positive")
    if args.command == "fit" and args.solver == "closed-form":
        args.solver = "closed_form"
    try:
        return args.func(args)
    except (store.StoreError, pairs_mod.PairError, estimator.EstimatorError,
            predictors.PredictorError, evaluation.EvaluationError,
            FileNotFoundError, KeyError, ValueError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
