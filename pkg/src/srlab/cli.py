"""Command-line pipeline: data generation, region construction, training,
evaluation, bound reports and toy verification.

Every artifact embeds the resolved config and the version string, and all
randomness derives from config seeds, so reruns are byte-identical.
"""
from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import bounds as bnd
from .config import ALPHAS, DELTAS, ExperimentConfig, dump_config, load_config
from .corrective import FeedbackGain, synthesize_gain
from .datagen import build_dataset, sample_ud
from .embedding import loo_knn_accuracy, run_tsne
from .io import read_csv, read_json, write_csv, write_json
from .safe_region import SafeRegionModel, bbox_diagonal
from .safety import STATE_COLUMNS, SafetyOracle, read_labeled_csv, write_labeled_csv
from .srl import METRIC_COLUMNS, check_supervisor_log, train

HIST_BINS = 40


class VerificationFailed(RuntimeError):
    pass


def _gain(cfg: ExperimentConfig) -> FeedbackGain:
    return synthesize_gain(cfg.pendulum.nominal(), cfg.controller.q_diag, cfg.controller.r_scale)


def _oracle(cfg: ExperimentConfig, params, gain) -> SafetyOracle:
    return SafetyOracle(params, gain, cfg.sim, cfg.ranges, cfg.controller.horizon, cfg.controller.tolerance)


def _out(cfg: ExperimentConfig) -> Path:
    p = Path(cfg.output_dir)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _write_config(cfg: ExperimentConfig, out: Path):
    (out / "config.yaml").write_text(dump_config(cfg))


# -- subcommands ---------------------------------------------------------------


def cmd_gen_data(cfg: ExperimentConfig) -> dict:
    out = _out(cfg)
    c = cfg.to_dict()
    gain = _gain(cfg)
    spec = cfg.dataset.spec(cfg.ranges)
    ds = build_dataset(spec, cfg.pendulum, gain, cfg.sim, _oracle(cfg, cfg.pendulum.nominal(), gain))
    _write_config(cfg, out)
    write_labeled_csv(out / "dataset.csv", ds.states, ds.labels, ds.provenance, c)
    write_json(out / "mnd.json", {"mnd": ds.mnd.to_dict(), "n_rollout_states": len(ds.rollout_states)}, c)
    write_json(out / "gain.json", {"gain": gain.to_dict()}, c)

    lo, hi = cfg.ranges.lo, cfg.ranges.hi
    H, e1, e2 = np.histogram2d(ds.states[:, 0], ds.states[:, 3], bins=HIST_BINS,
                               range=[[lo[0], hi[0]], [lo[3], hi[3]]])
    rows = [[e1[i], e1[i + 1], e2[j], e2[j + 1], int(H[i, j])]
            for i in range(HIST_BINS) for j in range(HIST_BINS)]
    write_csv(out / "hist_theta1_dtheta1.csv", ["theta1_lo", "theta1_hi", "dtheta1_lo", "dtheta1_hi", "count"],
              rows, c)
    summary = {"k": len(ds.labels), "n_ud": spec.n_ud, "n_mnd": spec.n_mnd, "safe_fraction": ds.safe_fraction()}
    write_json(out / "dataset_summary.json", summary, c)
    return summary


def cmd_build_region(cfg: ExperimentConfig, dataset: str | None = None) -> dict:
    out = _out(cfg)
    c = cfg.to_dict()
    states, labels, prov = read_labeled_csv(dataset or out / "dataset.csv")
    emb = run_tsne(states, labels, cfg.ranges, cfg.tsne)
    gain_path = out / "gain.json"
    gain = FeedbackGain.from_dict(read_json(gain_path)["gain"]) if gain_path.exists() else _gain(cfg)
    model = SafeRegionModel(emb, cfg.region.bandwidth_fraction * bbox_diagonal(emb.points), cfg.region.p_t,
                            gain, cfg.ranges)
    _write_config(cfg, out)
    write_json(out / "region_model.json", {"model": model.to_dict()}, c)

    axes, values = model.region_grid(resolution=cfg.region.grid_resolution)
    rows = [[axes[0][i], axes[1][j], values[i, j]] for i in range(len(axes[0])) for j in range(len(axes[1]))]
    write_csv(out / "region_grid.csv", ["y1", "y2", "gamma"], rows, c)
    prov = prov or [""] * len(labels)
    rows = [[p[0], p[1], int(z), s] for p, z, s in zip(emb.points, labels, prov)]
    write_csv(out / "embedding_scatter.csv", ["y1", "y2", "label", "provenance"], rows, c)
    summary = {
        "loo_5nn_accuracy": loo_knn_accuracy(emb.points, labels, 5),
        "final_kl": emb.final_kl,
        "gamma_bandwidth": model.gamma_bandwidth,
        "train_predicted_safe_fraction": float(model.predict_many(states).mean()),
    }
    write_json(out / "region_summary.json", summary, c)
    return summary


def load_model(path) -> SafeRegionModel:
    return SafeRegionModel.from_dict(read_json(path)["model"])


def _subsample(X: np.ndarray, n: int) -> np.ndarray:
    if len(X) <= n:
        return X
    idx = np.linspace(0, len(X) - 1, n).round().astype(np.int64)
    return X[idx]


def cmd_train(cfg: ExperimentConfig, model_path: str | None = None) -> dict:
    out = _out(cfg)
    c = cfg.to_dict()
    model = None
    if cfg.run.supervised:
        model = load_model(model_path or out / "region_model.json")
    gain = model.gain if model is not None and model.gain is not None else _gain(cfg)
    per_seed, curves = {}, []
    for seed in cfg.run.seeds:
        res = train(cfg.policy, model, cfg.pendulum, gain, cfg.sim, cfg.run.total_steps, int(seed), cfg.task,
                    cfg.ranges, log_steps=cfg.run.log_steps)
        m = res.metrics
        rows = m.rows()
        curves.append(np.array([r[1:] for r in rows], dtype=np.float64))
        write_csv(out / f"metrics_seed{seed}.csv", METRIC_COLUMNS, rows, c)
        write_json(out / f"policy_seed{seed}.json", {"policy": res.policy.to_dict()}, c)
        write_csv(out / f"visited_seed{seed}.csv", STATE_COLUMNS,
                  _subsample(res.visited_states, cfg.eval.n_bound_samples).tolist(), c)
        rec = {"activations": m.activations, "failures": m.failures, "failures_ground": m.failures_ground,
               "failures_timeout": m.failures_timeout, "violations": m.violations,
               "success_rate": None if m.activations == 0 else m.success_rate,
               "episodes": len(m.episodes)}
        if res.step_log is not None:
            rec["supervisor_invariant_breaches"] = check_supervisor_log(res.step_log)
        per_seed[str(seed)] = rec
    n = min(len(cv) for cv in curves)
    mean = np.mean([cv[:n] for cv in curves], axis=0)
    rows = [[i] + mean[i].tolist() for i in range(n)]
    write_csv(out / "metrics_mean.csv", METRIC_COLUMNS, rows, c)
    act = sum(r["activations"] for r in per_seed.values())
    fail = sum(r["failures"] for r in per_seed.values())
    summary = {"per_seed": per_seed, "activations": act, "failures": fail,
               "success_rate": None if act == 0 else 1.0 - fail / act,
               "violations": sum(r["violations"] for r in per_seed.values())}
    _write_config(cfg, out)
    write_json(out / "train_summary.json", summary, c)
    return summary


def cmd_eval(cfg: ExperimentConfig, model_path: str | None = None) -> dict:
    """Predicted-safe fraction and confusion against the real-system oracle on UD states."""
    out = _out(cfg)
    model = load_model(model_path or out / "region_model.json")
    X = sample_ud(cfg.eval.n_eval, cfg.ranges, np.random.default_rng(cfg.eval.seed))
    pred = model.predict_many(X)
    gain = model.gain if model.gain is not None else _gain(cfg)
    truth = _oracle(cfg, cfg.pendulum, gain)(X)
    summary = {
        "n_eval": int(len(X)),
        "eval_seed": cfg.eval.seed,
        "predicted_safe_fraction": float(pred.mean()),
        "true_safe_fraction": float(truth.mean()),
        "fp_rate": float(np.mean((pred == 1) & (truth == 0))),
        "fn_rate": float(np.mean((pred == 0) & (truth == 1))),
        "accuracy": float(np.mean(pred == truth)),
    }
    write_json(out / "eval.json", summary, cfg.to_dict())
    return summary


def cmd_bounds(cfg: ExperimentConfig, model_path: str | None = None, visited=None) -> dict:
    out = _out(cfg)
    model = load_model(model_path or out / "region_model.json")
    paths = visited or sorted(out.glob("visited_seed*.csv"))
    if not paths:
        raise FileNotFoundError("no visited-state logs found; run train first or pass --visited")
    XD = np.concatenate([np.array([[float(v) for v in r] for r in read_csv(p)[1]]).reshape(-1, 6)
                         for p in paths])
    XD = _subsample(XD, cfg.eval.n_bound_samples)
    XDn = model.embedding.source_states
    gain = model.gain if model.gain is not None else _gain(cfg)
    rep = bnd.estimate_errors(model.predict_many, XD, XDn, _oracle(cfg, cfg.pendulum, gain),
                              _oracle(cfg, cfg.pendulum.nominal(), gain))
    rep.div_proxy = bnd.divergence_proxy(XD, XDn, cfg.eval.seed, cfg.ranges)
    rep.seeds = {"proxy_split": cfg.eval.seed, "training_seeds": list(cfg.run.seeds)}
    payload = rep.to_dict()
    payload["visited_logs"] = [str(p) for p in paths]
    write_json(out / "bounds.json", payload, cfg.to_dict())
    return payload


def cmd_verify_toy(cfg: ExperimentConfig) -> dict:
    out = _out(cfg)
    reports = []
    for i in range(cfg.eval.n_toys):
        seed = cfg.eval.toy_seed + i
        r = bnd.toy_report_json(bnd.verify_bound_toy(bnd.random_toy(seed)))
        r["seed"] = seed
        reports.append(r)
    bad = [r["seed"] for r in reports
           if not (r["bound_holds"] and r["branch_1_holds"] and r["branch_2_holds"])]
    summary = {"n_toys": len(reports), "violations": bad, "all_hold": not bad}
    write_json(out / "toys.json", {"summary": summary, "toys": reports}, cfg.to_dict())
    if bad:
        raise VerificationFailed(f"bound violated on toy seeds {bad}")
    return summary


def _sweep_job(cfg_dict: dict, stage: str) -> dict:
    cfg = ExperimentConfig.from_dict(cfg_dict)
    if stage == "region":
        cmd_gen_data(cfg)
        return cmd_build_region(cfg)
    return cmd_train(cfg, str(Path(cfg.output_dir).parent / "region_model.json") if cfg.run.supervised else None)


def cmd_sweep(cfg: ExperimentConfig, alphas=ALPHAS, deltas=DELTAS, jobs: int = 1, free: bool = True) -> dict:
    """Datasets and regions per alpha, then training per (alpha, delta) and free runs per delta.

    Layout: <out>/alpha<a>/ holds data and region; <out>/alpha<a>/delta<d>/ and
    <out>/free/delta<d>/ hold training runs.
    """
    root = _out(cfg)
    region_jobs, train_jobs = [], []
    for a in alphas:
        d = cfg.with_overrides([f"dataset.alpha={a}", f"output_dir={root / f'alpha{a}'}"])
        region_jobs.append(d.to_dict())
        for dl in deltas:
            train_jobs.append(d.with_overrides([f"pendulum.delta={dl}",
                                                f"output_dir={root / f'alpha{a}' / f'delta{dl}'}"]).to_dict())
    if free:
        for dl in deltas:
            train_jobs.append(cfg.with_overrides([f"pendulum.delta={dl}", "run.supervised=false",
                                                  f"output_dir={root / 'free' / f'delta{dl}'}"]).to_dict())
    results = {}
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            regions = list(ex.map(_sweep_job, region_jobs, ["region"] * len(region_jobs)))
            trains = list(ex.map(_sweep_job, train_jobs, ["train"] * len(train_jobs)))
    else:
        regions = [_sweep_job(j, "region") for j in region_jobs]
        trains = [_sweep_job(j, "train") for j in train_jobs]
    for j, r in zip(region_jobs, regions):
        results[j["output_dir"]] = r
    for j, r in zip(train_jobs, trains):
        results[j["output_dir"]] = {"success_rate": r["success_rate"], "activations": r["activations"],
                                    "failures": r["failures"], "violations": r["violations"]}
    write_json(root / "sweep_summary.json", {"runs": results}, cfg.to_dict())
    return results


# -- entry point -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="srlab", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config value, e.g. dataset.alpha=1")
    common.add_argument("--out", help="output directory (overrides output_dir)")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-data", parents=[common], help="generate and label the training dataset")
    p = sub.add_parser("build-region", parents=[common], help="embed the dataset and build the safe-region model")
    p.add_argument("--dataset")
    p = sub.add_parser("train", parents=[common], help="train PPO with or without the supervisor")
    p.add_argument("--model")
    p.add_argument("--free", action="store_true", help="no supervisor; episodes end at constraint violation")
    p = sub.add_parser("eval", parents=[common], help="predicted-safe fraction and confusion on UD states")
    p.add_argument("--model")
    p = sub.add_parser("bounds", parents=[common], help="estimate the generalization-bound terms")
    p.add_argument("--model")
    p.add_argument("--visited", nargs="+")
    sub.add_parser("verify-toy", parents=[common], help="exact bound check on seeded finite toys")
    p = sub.add_parser("sweep", parents=[common], help="all alpha and delta conditions")
    p.add_argument("--alphas", type=float, nargs="+", default=list(ALPHAS))
    p.add_argument("--deltas", type=float, nargs="+", default=list(DELTAS))
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--no-free", action="store_true")
    return ap


def run(argv=None) -> dict:
    args = build_parser().parse_args(argv)
    overrides = list(args.set)
    if args.out:
        overrides.append(f"output_dir={args.out}")
    if getattr(args, "free", False):
        overrides.append("run.supervised=false")
    cfg = load_config(args.config, overrides)
    if args.command == "gen-data":
        return cmd_gen_data(cfg)
    if args.command == "build-region":
        return cmd_build_region(cfg, args.dataset)
    if args.command == "train":
        return cmd_train(cfg, args.model)
    if args.command == "eval":
        return cmd_eval(cfg, args.model)
    if args.command == "bounds":
        return cmd_bounds(cfg, args.model, args.visited)
    if args.command == "verify-toy":
        return cmd_verify_toy(cfg)
    return cmd_sweep(cfg, tuple(args.alphas), tuple(args.deltas), args.jobs, not args.no_free)


def main(argv=None) -> int:
    try:
        result = run(argv)
    except SystemExit:
        raise
    except Exception as exc:  # one parseable line, no traceback
        msg = " ".join(str(exc).split())
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 2 if isinstance(exc, VerificationFailed) else 1
    print(f"ok: {result}" if not isinstance(result, dict) or len(str(result)) < 400 else "ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
