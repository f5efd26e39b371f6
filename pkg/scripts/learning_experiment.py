"""Learning runs for every (alpha, delta) condition plus free learning.

Expects the per-alpha region models from ``region_experiment.py`` (or builds them
when missing) and trains each condition over the configured seed list.
Prints the pooled corrective-recovery success rate per condition.

    python scripts/learning_experiment.py --regions runs/regions --out runs/learning --deltas 1.5 [--jobs 3]
"""
import argparse
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from srlab.cli import cmd_build_region, cmd_gen_data, cmd_train
from srlab.config import ALPHAS, DELTAS, ExperimentConfig, load_config
from srlab.io import write_csv


def _run(job):
    cfg_dict, model = job
    return cmd_train(ExperimentConfig.from_dict(cfg_dict), model)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config")
    ap.add_argument("--regions", default="runs/regions")
    ap.add_argument("--out", default="runs/learning")
    ap.add_argument("--alphas", type=float, nargs="+", default=list(ALPHAS))
    ap.add_argument("--deltas", type=float, nargs="+", default=list(DELTAS))
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--set", action="append", default=[])
    args = ap.parse_args()

    jobs, names = [], []
    for a in args.alphas:
        region_dir = Path(args.regions) / f"alpha{a}"
        model = region_dir / "region_model.json"
        if not model.exists():
            rcfg = load_config(args.config, [*args.set, f"dataset.alpha={a}", f"output_dir={region_dir}"])
            cmd_gen_data(rcfg)
            cmd_build_region(rcfg)
        for d in args.deltas:
            out = Path(args.out) / f"alpha{a}" / f"delta{d}"
            cfg = load_config(args.config, [*args.set, f"dataset.alpha={a}", f"pendulum.delta={d}",
                                            f"output_dir={out}"])
            jobs.append((cfg.to_dict(), str(model)))
            names.append((a, d))
    for d in args.deltas:
        cfg = load_config(args.config, [*args.set, f"pendulum.delta={d}", "run.supervised=false",
                                        f"output_dir={Path(args.out) / 'free' / f'delta{d}'}"])
        jobs.append((cfg.to_dict(), None))
        names.append(("free", d))

    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as ex:
            results = list(ex.map(_run, jobs))
    else:
        results = [_run(j) for j in jobs]

    rows = []
    for (a, d), r in zip(names, results):
        rows.append([a, d, r["activations"], r["failures"], r["success_rate"], r["violations"]])
        rate = "n/a" if r["success_rate"] is None else f"{r['success_rate']:.4f}"
        print(f"alpha={a} delta={d}: activations {r['activations']}, failures {r['failures']}, "
              f"success {rate}, violations {r['violations']}")
    write_csv(Path(args.out) / "success_rates.csv",
              ["alpha", "delta", "activations", "failures", "success_rate", "violations"], rows,
              ExperimentConfig.from_dict(jobs[0][0]).to_dict())


if __name__ == "__main__":
    main()
