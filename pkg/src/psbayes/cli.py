"""Batch command-line front end.

Subcommands: ``fit`` (full Bayesian analysis), ``bounds`` (nonparametric
identification bounds only), ``simulate`` (synthetic dataset generation),
``sbc`` (simulation-based calibration of the pipeline), ``summarize``
(aggregate counts table).

Exit codes: 0 success, 1 usage error, 2 data/config error, 3 sampling
diagnostics failure under ``--strict``.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ._version import __version__
from .data_io import DataError, emit_results, parse_dataset, render_summary, summarize, write_dataset, aggregate
from .estimands import EstimandError
from .pipeline import DEFAULT_SEED, build_prior, load_config, resolve_settings, run_bounds, run_fit
from .sbc import SbcConfig, run_sbc
from .simulate import CellTruth, GroundTruth, example_trial_truth, gen_dataset

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DIAGNOSTICS = 3


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; this tool reserves 2 for data."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="psbayes", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    fit = sub.add_parser("fit", help="fit the Bayesian model and summarize the estimands")
    fit.add_argument("data", help="subject-level CSV (header z,s,y,cell)")
    fit.add_argument("--config", help="JSON config file")
    fit.add_argument("--seed", type=int, help="master seed (overrides config)")
    fit.add_argument("--mode", choices=["hard", "weak", "none"], help="monotonicity mode")
    fit.add_argument("--sensitivity", action="store_true", help="run all three monotonicity modes")
    fit.add_argument("--weights", choices=["available", "randomized"], help="covariate weight source")
    fit.add_argument("--strict", action="store_true", help="diagnostic warnings become exit code 3")
    fit.add_argument("--out", help="result JSON path (default: results.json)")

    bounds = sub.add_parser("bounds", help="nonparametric identification bounds (no sampling)")
    bounds.add_argument("data")
    bounds.add_argument("--config")
    bounds.add_argument("--out")

    sim = sub.add_parser("simulate", help="generate a synthetic trial CSV")
    sim.add_argument("--truth", help="JSON ground-truth file (default: bundled example-like truth)")
    sim.add_argument("-n", type=int, default=1000, help="number of subjects")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", required=True, help="output CSV path")

    sbc = sub.add_parser("sbc", help="simulation-based calibration of the pipeline")
    sbc.add_argument("--config", help="JSON config (prior section is honored)")
    sbc.add_argument("--mode", choices=["hard", "weak", "none"], default="hard")
    sbc.add_argument("--reps", type=int, default=200)
    sbc.add_argument("-n", type=int, default=500, help="subjects per replication")
    sbc.add_argument("--seed", type=int, default=DEFAULT_SEED)
    sbc.add_argument("--out", help="rank-report JSON path")

    summ = sub.add_parser("summarize", help="print the aggregated count table")
    summ.add_argument("data")

    return parser


def _load_truth(path) -> GroundTruth:
    if path is None:
        return example_trial_truth()
    with Path(path).open(encoding="utf-8") as fh:
        raw = json.load(fh)
    cells = {}
    weights = {}
    for label, entry in raw["cells"].items():
        weights[label] = float(entry["weight"])
        cells[label] = CellTruth(
            strata_probs=tuple(entry["strata_probs"]),
            risks=tuple(tuple(r) for r in entry["risks"]),
            missingness=tuple(entry.get("missingness", (0.0, 0.0))),
        )
    return GroundTruth(cells=cells, cell_weights=weights, treat_ratio=float(raw.get("treat_ratio", 2.0)))


def _cmd_fit(args) -> int:
    config = load_config(args.config)
    settings = resolve_settings(
        config, mode=args.mode, seed=args.seed, weights=args.weights, sensitivity=args.sensitivity
    )
    records = parse_dataset(args.data)
    doc = run_fit(records, settings)
    out = args.out or config.get("out", "results.json")
    emit_results(doc, out)

    all_warnings = [w for a in doc["analyses"] for w in a["warnings"]]
    for analysis in doc["analyses"]:
        est = analysis["estimands"]
        rr = est["risk_ratio"]
        print(
            f"mode={analysis['mode']}: RR median {rr['median']:.3f} "
            f"95% CI ({rr['ci95'][0]:.3f}, {rr['ci95'][1]:.3f}), "
            f"P(RR<1) = {est['prob_rr_below_1']:.3f}"
        )
    for w in all_warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"results written to {out}")
    if args.strict and all_warnings:
        print("strict mode: sampling diagnostics failed", file=sys.stderr)
        return EXIT_DIAGNOSTICS
    return EXIT_OK


def _cmd_bounds(args) -> int:
    config = load_config(args.config)
    settings = resolve_settings(config)
    records = parse_dataset(args.data)
    doc = run_bounds(records, settings)
    out = args.out or config.get("out", "bounds.json")
    emit_results(doc, out)
    b = doc["bounds"]
    rr_hi = b["risk_ratio"][1]
    print(
        f"numerator in [{b['numerator'][0]:.4f}, {b['numerator'][1]:.4f}], "
        f"risk ratio in [{b['risk_ratio'][0]:.4f}, {'inf' if rr_hi is None else format(rr_hi, '.4f')}]"
    )
    if b["proportions"]["monotonicity_violated"]:
        print("warning: monotonicity violated empirically", file=sys.stderr)
    print(f"bounds written to {out}")
    return EXIT_OK


def _cmd_simulate(args) -> int:
    truth = _load_truth(args.truth)
    trial = gen_dataset(truth, args.n, args.seed)
    write_dataset(trial.records, args.out)
    print(f"{args.n} subjects written to {args.out}")
    return EXIT_OK


def _cmd_sbc(args) -> int:
    config = load_config(args.config)
    prior = build_prior(config.get("prior"), args.mode)
    sub = config.get("sbc", {})
    cfg = SbcConfig(
        n_reps=args.reps,
        n_subjects=args.n,
        prior=prior,
        seed=args.seed,
        n_chains=int(sub.get("chains", 2)),
        n_warmup=int(sub.get("warmup", 400)),
        n_sampling=int(sub.get("sampling", 400)),
        n_ranks=int(sub.get("ranks", 99)),
    )
    result = run_sbc(cfg, progress=True)
    doc = result.to_dict()
    if args.out:
        emit_results(doc, args.out)
        print(f"rank report written to {args.out}")
    uniform = result.n_uniform(0.01)
    print(f"rank uniformity: {uniform}/11 parameters pass chi-square at p > 0.01")
    for name, p in doc["pvalues"].items():
        print(f"  {name}: p = {p:.4f}")
    return EXIT_OK


def _cmd_summarize(args) -> int:
    records = parse_dataset(args.data)
    print(render_summary(summarize(aggregate(records))))
    return EXIT_OK


_COMMANDS = {
    "fit": _cmd_fit,
    "bounds": _cmd_bounds,
    "simulate": _cmd_simulate,
    "sbc": _cmd_sbc,
    "summarize": _cmd_summarize,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (DataError, EstimandError) as exc:
        print(f"psbayes: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        print(f"psbayes: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
