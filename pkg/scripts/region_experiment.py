"""Datasets, embeddings and safe regions for alpha in {0, 0.5, 1}.

Writes per-alpha data files (theta1/dtheta1 histogram, embedding scatter,
gamma grid) and a conservativeness table: the predicted-safe fraction of
each hypothesis over a fixed uniform evaluation set, plus its confusion
against the real-system labels.

    python scripts/region_experiment.py --out runs/regions [--delta 1.5] [--set tsne.iterations=500]
"""
import argparse
from pathlib import Path

from srlab.cli import cmd_build_region, cmd_eval, cmd_gen_data
from srlab.config import ALPHAS, load_config
from srlab.io import write_csv


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config")
    ap.add_argument("--out", default="runs/regions")
    ap.add_argument("--delta", type=float, default=1.0, help="real-system mismatch for the confusion columns")
    ap.add_argument("--set", action="append", default=[])
    args = ap.parse_args()

    rows = []
    for a in ALPHAS:
        out = Path(args.out) / f"alpha{a}"
        cfg = load_config(args.config, [*args.set, f"dataset.alpha={a}", f"output_dir={out}",
                                        f"pendulum.delta={args.delta}"])
        data = cmd_gen_data(cfg)
        region = cmd_build_region(cfg)
        ev = cmd_eval(cfg)
        rows.append([a, data["safe_fraction"], region["loo_5nn_accuracy"], ev["predicted_safe_fraction"],
                     ev["fp_rate"], ev["fn_rate"]])
        print(f"alpha={a}: safe fraction {data['safe_fraction']:.3f}, LOO 5-NN {region['loo_5nn_accuracy']:.3f}, "
              f"predicted safe {ev['predicted_safe_fraction']:.4f}, fp {ev['fp_rate']:.4f}, fn {ev['fn_rate']:.4f}")
    write_csv(Path(args.out) / "conservativeness.csv",
              ["alpha", "dataset_safe_fraction", "loo_5nn", "predicted_safe_fraction", "fp_rate", "fn_rate"],
              rows, cfg.to_dict())


if __name__ == "__main__":
    main()
