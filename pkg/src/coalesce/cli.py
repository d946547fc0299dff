"""Command-line entry point.

    coalesce simulate --config exp.cfg --seed 7 --out runs/c075
    coalesce theory   --config exp.cfg --seed 7 --out runs/c075
    coalesce compare  --config exp.cfg --seed 7 --out runs/c075
    coalesce sweep    --config exp.cfg --seed 7 --c-values 0.5,0.625,0.75

Exit status: 0 when every statistical gate passed, 1 on a gate failure
(cap-exceeded trials, TV above threshold, monotonicity inversion), 2 on a
usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import analysis
from .config import ConfigError, ExperimentConfig
from .dynamics import TrialResult, monte_carlo

log = logging.getLogger("coalesce")

EXIT_OK, EXIT_GATE, EXIT_USAGE = 0, 1, 2

SUMMARY_HEADER = ["trial", "k_star"]
EVENT_HEADER = [
    "trial", "k", "id_a", "id_b", "size_a", "size_b",
    "xi", "p_star", "strat_a", "strat_b", "merged",
]
DIST_HEADER = ["T", "empirical_freq", "theory_pmf", "bound_lower", "bound_upper"]
SWEEP_HEADER = ["c", "p_hat", "theory_mean", "empirical_mean", "empirical_se", "inversion"]
THEORY_MASS = 1e-8


class SchemaError(ValueError):
    pass


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _prepare_out(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.to_text(), encoding="utf-8")
    return out


# ------------------------------------------------------------------ simulate


def write_summary_csv(path: Path, results: Sequence[TrialResult]) -> None:
    _write_csv(path, SUMMARY_HEADER, ((i, r.k_star) for i, r in enumerate(results)))


def write_events_csv(path: Path, results: Sequence[TrialResult]) -> None:
    def rows():
        for i, r in enumerate(results):
            for ev in r.events:
                yield (
                    i, ev.time, ev.pair[0], ev.pair[1], ev.sizes[0], ev.sizes[1],
                    ev.xi, ev.p_star, ev.strategies[0], ev.strategies[1], ev.merged,
                )

    _write_csv(path, EVENT_HEADER, rows())


def read_summary_csv(path) -> analysis.EmpiricalDist:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != SUMMARY_HEADER:
            raise SchemaError(f"{path}: expected header {SUMMARY_HEADER}, got {header}")
        ks = [int(row[1]) for row in reader if row and row[1] != ""]
    if not ks:
        raise SchemaError(f"{path}: no completed trials")
    return analysis.EmpiricalDist.from_samples(ks)


def read_distribution_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != DIST_HEADER:
            raise SchemaError(f"{path}: expected header {DIST_HEADER}, got {reader.fieldnames}")
        return [
            {k: (None if v == "" else (int(v) if k == "T" else float(v))) for k, v in row.items()}
            for row in reader
        ]


def simulate(cfg: ExperimentConfig, keep_events: bool = True):
    tc = cfg.trial_config()
    log.info("n=%d, xi range [%g, %g], step cap %d", tc.n, tc.xi_min, tc.xi_max, tc.step_cap)
    results = monte_carlo(tc, cfg.trials, cfg.master_seed, cfg.workers, keep_events)
    return tc, results


def _summarise(results: Sequence[TrialResult]) -> dict:
    done = [r.k_star for r in results if not r.cap_exceeded]
    capped = len(results) - len(done)
    out = {"trials": len(results), "cap_exceeded": capped}
    if done:
        emp = analysis.EmpiricalDist.from_samples(done)
        out.update(mean=emp.mean(), var=emp.variance(), min=min(done), max=max(done))
    return out


def cmd_simulate(cfg: ExperimentConfig) -> int:
    tc, results = simulate(cfg)
    out = _prepare_out(cfg)
    write_summary_csv(out / "trials.csv", results)
    write_events_csv(out / "events.csv", results)
    s = _summarise(results)
    print(
        f"trials={s['trials']} mean={s.get('mean', math.nan):.4f} "
        f"var={s.get('var', math.nan):.4f} min={s.get('min')} max={s.get('max')} "
        f"cap_exceeded={s['cap_exceeded']}"
    )
    return EXIT_GATE if s["cap_exceeded"] else EXIT_OK


# ------------------------------------------------------------------ theory


def theory_rows(cfg: ExperimentConfig, tc, empirical=None) -> list[dict]:
    dist, bounds = cfg.theory(tc)
    # with no exact law, stop where the slowest admissible law is exhausted
    stopper = dist if dist is not None else analysis.negbinom(cfg.n, bounds.p_low)
    hi = stopper.quantile_cutoff(THEORY_MASS)
    if empirical is not None:
        hi = max(hi, max(empirical.counts))
    return analysis.pmf_table(cfg.n, range(cfg.n - 1, hi + 1), dist, bounds, empirical)


def _write_dist(path: Path, rows: list[dict]) -> None:
    _write_csv(path, DIST_HEADER, ([r[k] for k in DIST_HEADER] for r in rows))


def cmd_theory(cfg: ExperimentConfig) -> int:
    tc = cfg.trial_config()
    out = _prepare_out(cfg)
    rows = theory_rows(cfg, tc)
    _write_dist(out / "distribution.csv", rows)
    print(f"wrote {len(rows)} rows, T = {rows[0]['T']} .. {rows[-1]['T']}")
    return EXIT_OK


# ------------------------------------------------------------------ compare


def cmd_compare(
    cfg: ExperimentConfig,
    summary_path: Optional[str] = None,
    distribution_path: Optional[str] = None,
) -> int:
    tc = cfg.trial_config()
    dist, bounds = cfg.theory(tc)
    monitor_hits = None
    if summary_path is None:
        _, results = simulate(cfg, keep_events=False)
        capped = sum(r.cap_exceeded for r in results)
        emp = analysis.EmpiricalDist.from_samples(r.k_star for r in results if not r.cap_exceeded)
        monitor_hits = sum(r.xi_excursions for r in results)
    else:
        capped = 0
        emp = read_summary_csv(summary_path)

    if min(emp.counts) < cfg.n - 1:
        raise SchemaError(f"empirical K* below n-1={cfg.n - 1}: summary does not match n")

    if distribution_path is not None:
        rows = read_distribution_csv(distribution_path)
        if not rows or rows[0]["T"] != cfg.n - 1:
            raise SchemaError("distribution support does not start at n-1")
        have = {r["T"] for r in rows}
        for r in rows:
            r["empirical_freq"] = emp.freq(r["T"])
        extra = sorted(t for t in emp.counts if t not in have)
        for t in extra:
            rows.append({"T": t, "empirical_freq": emp.freq(t), "theory_pmf": None,
                         "bound_lower": None, "bound_upper": None})
    else:
        rows = theory_rows(cfg, tc, emp)

    out = _prepare_out(cfg)
    _write_dist(out / "compare.csv", rows)

    passed = capped == 0
    if dist is not None:
        report = analysis.compare(emp, dist).to_json_dict()
        report["threshold"] = cfg.tv_threshold
        passed = passed and report["tv_distance"] <= cfg.tv_threshold
        print(
            f"tv={report['tv_distance']:.4f} (threshold {cfg.tv_threshold}) "
            f"mean={report['empirical_mean']:.4f} theory={report['theory_mean']:.4f} "
            f"z={report['mean_z']:+.2f}"
        )
    else:
        checked = [r for r in analysis.envelope_check(emp, cfg.n, bounds) if r.checked]
        outside = [r.T for r in checked if not r.inside]
        lo, up = analysis.expectation_bounds(cfg.n, bounds)
        report = {
            "empirical_mean": emp.mean(),
            "empirical_var": emp.variance(),
            "expectation_lower": lo,
            "expectation_upper": up,
            "envelope_checked": len(checked),
            "envelope_excursions": outside,
            "xi_monitor_hits": monitor_hits,
        }
        # excursions are tolerated only when the distance monitor explains them
        passed = passed and (not outside or bool(monitor_hits))
        print(f"envelope excursions at T={outside}, xi monitor hits={monitor_hits}")
    report["cap_exceeded"] = capped
    report["passed"] = passed
    (out / "fit.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return EXIT_OK if passed else EXIT_GATE


# ------------------------------------------------------------------ sweep


def cmd_sweep(cfg: ExperimentConfig, c_values: Sequence[float]) -> int:
    cs = [float(c) for c in c_values]
    if not cs:
        raise ConfigError("sweep.c_values", "no c values given")
    if any(not 0 < c < 1 for c in cs) or any(b <= a for a, b in zip(cs, cs[1:])):
        raise ConfigError("sweep.c_values", "must be strictly increasing inside (0, 1)")
    if cfg.payoff_kind != "power_law":
        raise ConfigError("payoff.kind", "sweep needs power_law payoffs")
    mono = analysis.monotonicity_scan(cfg.lam, cs, cfg.n)
    rows = []
    prev = None
    inversions = 0
    for c, p, mean in zip(cs, mono.p_hats, mono.means):
        emp_mean = emp_se = None
        inv = False
        if cfg.sweep_trials > 0:
            _, results = simulate(cfg.replace(c=c, trials=cfg.sweep_trials), keep_events=False)
            emp = analysis.EmpiricalDist.from_samples(r.k_star for r in results if not r.cap_exceeded)
            emp_mean, emp_se = emp.mean(), emp.mean_se()
            if prev is not None:
                # a drop larger than 3 combined standard errors is an inversion
                inv = emp_mean < prev[0] - 3 * math.hypot(emp_se, prev[1])
            prev = (emp_mean, emp_se)
        inversions += inv
        rows.append((c, p, mean, emp_mean, emp_se, inv))
    out = _prepare_out(cfg)
    _write_csv(out / "sweep.csv", SWEEP_HEADER, rows)
    for r in rows:
        print("c={:<8g} p_hat={:.6f} theory_mean={:.4f}".format(*r[:3]))
    return EXIT_OK if mono.passed and inversions == 0 else EXIT_GATE


# ------------------------------------------------------------------ main


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--seed", type=int, help="master seed (u64); overrides config")
    common.add_argument("--trials", type=int, help="number of trials (per point for sweep)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--threshold", type=float, help="TV-distance gate for compare")
    common.add_argument("--workers", type=int, help="worker processes")

    p = argparse.ArgumentParser(prog="coalesce", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="run Monte Carlo trials")
    sub.add_parser("theory", parents=[common], help="write theoretical pmf and bounds")
    cmp_ = sub.add_parser("compare", parents=[common], help="fit empirical K* against theory")
    cmp_.add_argument("--summary", help="existing trial-summary CSV instead of simulating")
    cmp_.add_argument("--distribution", help="existing distribution-report CSV")
    sw = sub.add_parser("sweep", parents=[common], help="monotonicity in the cost ratio c")
    sw.add_argument("--c-values", help="comma-separated, strictly increasing")
    return p


def _setup_logging() -> None:
    level = os.environ.get("COALESCE_LOG", "error").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.ERROR),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
        overrides = {}
        if args.seed is not None:
            overrides["master_seed"] = args.seed
        if args.out is not None:
            overrides["output_dir"] = args.out
        if args.threshold is not None:
            overrides["tv_threshold"] = args.threshold
        if args.workers is not None:
            overrides["workers"] = args.workers
        if args.trials is not None:
            overrides["sweep_trials" if args.command == "sweep" else "trials"] = args.trials
        cfg = cfg.replace(**overrides)

        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "theory":
            return cmd_theory(cfg)
        if args.command == "compare":
            return cmd_compare(cfg, args.summary, args.distribution)
        c_values = cfg.sweep_c_values
        if args.c_values:
            try:
                c_values = [float(v) for v in args.c_values.split(",")]
            except ValueError:
                raise ConfigError("--c-values", f"cannot parse {args.c_values!r}") from None
        return cmd_sweep(cfg, c_values or [cfg.c])
    except (ConfigError, SchemaError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
