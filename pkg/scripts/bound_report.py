"""Generalization-bound terms for one trained condition.

Uses the region model of the given alpha and the visited states logged by
its training run on the real system, and also reports the monotone-trend
check at delta = 1: source error of the alpha = 0 and alpha = 1 hypotheses
against the nominal labels over MND-distributed states.

    python scripts/bound_report.py --regions runs/regions --runs runs/learning --alpha 0.5 --delta 1.5
"""
import argparse
from pathlib import Path

import numpy as np

from srlab.bounds import estimate_errors
from srlab.cli import cmd_bounds, load_model
from srlab.config import load_config
from srlab.datagen import MndModel, sample_mnd
from srlab.io import read_json
from srlab.safety import SafetyOracle


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config")
    ap.add_argument("--regions", default="runs/regions")
    ap.add_argument("--runs", default="runs/learning")
    ap.add_argument("--alpha", type=float, default=0.5)
    ap.add_argument("--delta", type=float, default=1.5)
    ap.add_argument("--set", action="append", default=[])
    args = ap.parse_args()

    run_dir = Path(args.runs) / f"alpha{args.alpha}" / f"delta{args.delta}"
    cfg = load_config(args.config, [*args.set, f"pendulum.delta={args.delta}", f"output_dir={run_dir}"])
    rep = cmd_bounds(cfg, str(Path(args.regions) / f"alpha{args.alpha}" / "region_model.json"))
    print(rep["inequality"])

    # monotone trend at delta = 1 over MND samples
    mnd_path = Path(args.regions) / "alpha0.0" / "mnd.json"
    if mnd_path.exists() and (Path(args.regions) / "alpha1.0" / "region_model.json").exists():
        mnd = MndModel.from_dict(read_json(mnd_path)["mnd"])
        X = sample_mnd(mnd, cfg.eval.n_bound_samples, cfg.ranges, np.random.default_rng(cfg.eval.seed))
        eps = {}
        for a in (0.0, 1.0):
            model = load_model(Path(args.regions) / f"alpha{a}" / "region_model.json")
            oracle = SafetyOracle(cfg.pendulum.nominal(), model.gain, cfg.sim, cfg.ranges)
            eps[a] = estimate_errors(model.predict_many, X, X, oracle, oracle).eps_hat
        print(f"delta = 1 error over MND samples: alpha=0 {eps[0.0]:.4f}, alpha=1 {eps[1.0]:.4f}")


if __name__ == "__main__":
    main()
