"""Run the two 20000-trial power-law experiments and the cost-ratio sweep.

Writes one directory per experiment under ``--out`` with trials.csv,
events.csv, distribution.csv, compare.csv and fit.json, plus sweep.csv.

    python scripts/reproduce_experiments.py --seed 20240601 --out runs
"""

import argparse
import json
from pathlib import Path

from coalesce.cli import main as cli


def run(argv):
    code = cli(argv)
    print(f"  exit {code}: coalesce {' '.join(argv)}")
    return code


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--seed", type=int, default=20240601)
    ap.add_argument("--out", default="runs")
    ap.add_argument("--trials", type=int, default=20000)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    root = Path(args.out)
    root.mkdir(parents=True, exist_ok=True)

    codes = []
    for c in ("0.75", "0.625"):
        cfg = root / f"c{c.replace('.', '')}.cfg"
        cfg.write_text(
            "n = 20\nm = 2\npayoff.kind = power_law\npayoff.theta = 0.8\n"
            f"payoff.lambda = 1\npayoff.c = {c}\ninit.kind = box\ninit.low = 0\ninit.high = 10\n"
        )
        out = root / cfg.stem
        common = ["--config", str(cfg), "--seed", str(args.seed), "--trials", str(args.trials),
                  "--workers", str(args.workers), "--out", str(out)]
        print(f"c = {c}")
        codes.append(run(["simulate", *common]))
        codes.append(run(["theory", *common]))
        codes.append(run(["compare", *common, "--summary", str(out / "trials.csv")]))
        fit = json.loads((out / "fit.json").read_text())
        print(f"  mean {fit['empirical_mean']:.4f} (theory {fit['theory_mean']:.4f}), "
              f"var {fit['empirical_var']:.4f} (theory {fit['theory_var']:.4f}), TV {fit['tv_distance']:.4f}")

    print("sweep")
    codes.append(run(["sweep", "--seed", str(args.seed), "--c-values", "0.5,0.625,0.75",
                      "--trials", str(args.trials), "--workers", str(args.workers),
                      "--out", str(root / "sweep")]))
    return max(codes)


if __name__ == "__main__":
    raise SystemExit(main())
