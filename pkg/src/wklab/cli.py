"""Command-line entry point: ``wklab <subcommand> [--config FILE] ...``.

Exit codes: 0 all checks pass, 1 a criterion failed, 2 usage or
configuration error (nothing is written in that case).
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

from . import experiments as ex
from . import output
from .config import ConfigError, RunConfig, load_config, schema_text, with_overrides
from .solver import CausalityError

SUBCOMMANDS = {
    "evolve": "single evolution with the full diagnostics series",
    "decay": "local-energy decay of the reference amplitude",
    "budget": "virial budget across the amplitude sweep",
    "lemmas": "randomized auxiliary-lemma constants",
    "spectrum": "repulsivity, Darboux residuals and eigenvalues",
    "converge": "solver orders, energy drift and the virial-rate ladder",
    "report": "all of the above plus orbital stability",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration file")
    common.add_argument("--seed", type=int, help="random seed (default: config, then WKLAB_SEED, then 0)")
    common.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                        help="parallel sweep members (default: number of processors)")
    common.add_argument("--output", help="output directory (overrides [output] path)")
    common.add_argument("--no-plots", action="store_true", help="skip SVG plots")

    parser = _Parser(prog="wklab",
                     description="Kink stability laboratory: evolutions, budgets, lemmas, spectra.",
                     epilog=schema_text(), formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, help_ in SUBCOMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_, description=help_,
                           epilog=schema_text(), formatter_class=argparse.RawDescriptionHelpFormatter)
        if name in ("spectrum", "report"):
            p.add_argument("--domain", type=float, help="half-width of the eigenvalue domain")
            p.add_argument("--n", type=int, help="intervals across the eigenvalue domain")
        if name in ("converge", "report"):
            p.add_argument("--quick", action="store_true", help="shorter drift and ladder runs")
    return parser


def _resolve_seed(args, cfg: RunConfig) -> int:
    if args.seed is not None:
        return args.seed
    if cfg.seed_in_file:
        return cfg.experiment.seed
    env = os.environ.get("WKLAB_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"WKLAB_SEED must be an integer, got {env!r}", "WKLAB_SEED")
    return cfg.experiment.seed


def _spectrum_args(args, exp):
    domain = args.domain if getattr(args, "domain", None) is not None else exp.spectrum_domain
    n = args.n if getattr(args, "n", None) is not None else exp.spectrum_n
    if domain <= 0 or n < 16:
        raise ConfigError("--domain must be positive and --n at least 16", "<argv>")
    return domain, 2.0 * domain / n


def _combine(name, reports, config):
    summary = {r.name: r.summary for r in reports}
    summary["pass"] = all(r.passed for r in reports)
    ref = next((r for r in reports if r.series), reports[0])
    return ex.ExperimentReport(name, ref.series, summary, ex._provenance(config), ref.r_list, ref.figures)


def run(args, cfg: RunConfig) -> ex.ExperimentReport:
    exp = cfg.experiment
    cmd = args.command
    if cmd == "evolve":
        return ex.run_evolve(exp)
    if cmd == "decay":
        return ex.run_decay(exp)
    if cmd == "budget":
        return ex.run_virial_budget(exp, jobs=args.jobs)
    if cmd == "lemmas":
        return ex.run_lemma_suite(exp.seed, exp.lemma_trials, exp.lemma_spacings, exp.lemma_eps,
                                  exp.weights, xeps_eps=exp.xeps_eps, config=exp)
    if cmd == "spectrum":
        domain, spacing = _spectrum_args(args, exp)
        return ex.run_spectral_report((domain, 2.0 * domain), spacing, config=exp)
    if cmd == "converge":
        return ex.run_convergence(exp, quick=args.quick)
    # report
    domain, spacing = _spectrum_args(args, exp)
    sweep = ex.run_sweep(exp, jobs=args.jobs)
    ref = next((m for m in sweep if m.delta == exp.data.amplitude), None)
    reports = [
        ex.run_decay(exp, member=ref),
        ex.run_virial_budget(exp, sweep=sweep),
        ex.run_orbital_stability(exp, sweep=sweep),
        ex.run_lemma_suite(exp.seed, exp.lemma_trials, exp.lemma_spacings, exp.lemma_eps, exp.weights,
                           xeps_eps=exp.xeps_eps, config=exp),
        ex.run_spectral_report((domain, 2.0 * domain), spacing, config=exp),
        ex.run_convergence(exp, quick=args.quick),
    ]
    return _combine("report", reports, exp)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        cfg = with_overrides(cfg, output=args.output, plots=False if args.no_plots else None)
        cfg = replace(cfg, experiment=replace(cfg.experiment, seed=_resolve_seed(args, cfg)))
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1", "<argv>")
        if args.command in ("decay", "budget", "evolve", "report"):
            deltas = None if args.command in ("budget", "report") else [cfg.experiment.data.amplitude]
            ex.check_causality(cfg.experiment, deltas)
        if args.command in ("spectrum", "report"):
            _spectrum_args(args, cfg.experiment)
    except (ConfigError, CausalityError, ValueError) as exc:
        print(f"wklab: error: {exc}", file=sys.stderr)
        return 2

    report = run(args, cfg)
    out_dir = cfg.experiment.output_path
    try:
        paths = output.emit_outputs(report, out_dir, plots=cfg.plots)
    except output.OutputError as exc:
        print(f"wklab: error: {exc}", file=sys.stderr)
        return 1
    status = "PASS" if report.passed else "FAIL"
    print(f"{args.command}: {status} ({len(paths)} files in {out_dir})")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
