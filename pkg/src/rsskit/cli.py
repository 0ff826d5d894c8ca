"""Command-line interface: ``rsskit <subcommand> ...``.

Exit codes: 0 success, 2 usage error, 3 infeasible design, 4 verification failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from pathlib import Path
from typing import Optional, TextIO

import numpy as np

from . import sheep
from .designs import Design, DesignSpec, RankedSetSample, RankingMode, draw_rss, feasibility_check
from .errors import InfeasibleDesignError, MissingInclusionError
from .estimators import NegativeVarianceWarning, hajek_edf, median_ci, variance_report
from .inclusion import InclusionTable, inclusion_table
from .population import DistributionKind, Population, attach_auxiliary, generate_grid_population
from .simulation import SimulationConfig, run_imperfect_re, run_perfect_re
from .verify import run_verification

EXIT_USAGE = 2
EXIT_INFEASIBLE = 3
EXIT_VERIFY = 4
OUT_DIR_ENV = "RSSKIT_OUT_DIR"

DIST_NAMES = {d.value: d for d in DistributionKind}
DESIGN_NAMES = {d.value: d for d in Design}


def _out_path(name: Optional[str]) -> Optional[Path]:
    if name is None:
        return None
    path = Path(name)
    base = os.environ.get(OUT_DIR_ENV)
    if base and not path.is_absolute():
        path = Path(base) / path
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _emit(text: str, out: Optional[str]) -> None:
    path = _out_path(out)
    if path is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        path.write_text(text, encoding="utf-8")


def _spec_from_args(args) -> DesignSpec:
    design = DESIGN_NAMES[args.design]
    if design is Design.SRS:
        n = args.sample_size if args.sample_size is not None else args.k * args.m
        return DesignSpec.srs(n)
    pattern = tuple(int(t) for t in args.pattern.split(",")) if getattr(args, "pattern", None) else ()
    return DesignSpec(design, args.k, args.m, pattern)


def _add_design_args(p: argparse.ArgumentParser, require_n: bool = True) -> None:
    if require_n:
        p.add_argument("--n", type=int, required=True, help="population size N")
    p.add_argument("--design", choices=sorted(DESIGN_NAMES), required=True)
    p.add_argument("--k", type=int, default=1, help="set size")
    p.add_argument("--m", type=int, default=1, help="number of cycles")
    p.add_argument("--pattern", help="comma-separated measured ranks (default: balanced)")
    p.add_argument("--sample-size", type=int, help="SRS sample size (default k*m)")


def cmd_gen_pop(args) -> int:
    pop = generate_grid_population(args.n, DIST_NAMES[args.dist])
    if args.rho is not None:
        pop = attach_auxiliary(pop, args.rho, np.random.default_rng(args.seed))
    _emit(pop.to_csv(), args.out)
    return 0


def cmd_inclusion(args) -> int:
    spec = _spec_from_args(args)
    if not feasibility_check(spec, args.n):
        raise InfeasibleDesignError(f"{spec.describe()} is infeasible for N={args.n}")
    table = inclusion_table(spec, args.n, method=args.method, reps=args.reps, seed=args.seed)
    _emit(table.to_json(), args.out)
    return 0


def cmd_sample(args) -> int:
    if args.sheep:
        _emit(sheep.sample().to_csv(), args.out)
        return 0
    if not args.pop_csv:
        raise _Usage("sample needs --pop-csv (or --sheep)")
    pop = Population.from_csv(args.pop_csv)
    spec = _spec_from_args(args)
    mode = RankingMode.BY_AUXILIARY if args.ranking == "auxiliary" else RankingMode.PERFECT
    drawn = draw_rss(pop, spec, mode, np.random.default_rng(args.seed))
    _emit(drawn.to_csv(), args.out)
    return 0


def cmd_estimate(args) -> int:
    table = InclusionTable.from_json(Path(args.inclusion).read_text(encoding="utf-8"))
    smp = RankedSetSample.from_csv(args.sample_csv, table.spec)
    edf = hajek_edf(smp, table)
    if args.edf_out:
        edf.to_csv(_out_path(args.edf_out))
    report: dict = {}
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", NegativeVarianceWarning)
        if args.at is not None:
            try:
                report = variance_report(smp, table, args.at, args.alpha).to_dict()
            except MissingInclusionError as exc:
                report = {"x": args.at, "F_hat": edf(args.at), "V_hat": None, "note": str(exc), "alpha": args.alpha}
        if args.median_ci:
            mi = median_ci(smp, table, args.alpha, inversion=args.inversion)
            report["median"] = {
                "M_hat": mi.median, "V_hat": mi.vhat, "c1": mi.c1, "c2": mi.c2,
                "ci_low": mi.lower, "ci_high": mi.upper, "inversion": mi.inversion,
            }
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    if not report:
        _emit(edf.to_csv(), args.out)
    else:
        if not args.edf_out:
            report["edf"] = [{"x": x, "F_hat": f} for x, f in edf.table_rows()]
        _emit(json.dumps(report, indent=2), args.out)
    return 0


def cmd_simulate(args) -> int:
    if args.config:
        config = SimulationConfig.from_json(args.config)
    else:
        if args.n is None:
            raise _Usage("simulate needs --config or --n")
        designs = tuple(DESIGN_NAMES[d] for d in args.designs.split(","))
        config = SimulationConfig(
            args.n, DIST_NAMES[args.dist], designs, args.m, args.k, rho=args.rho,
            reps=args.reps, master_seed=args.seed, workers=args.workers,
        )
    if config.rho >= 1.0 and not args.mc:
        result = run_perfect_re(config)
    else:
        result = run_imperfect_re(config)
    _emit(result.to_csv(), args.out)
    return 0


def cmd_verify(args) -> int:
    spec = _spec_from_args(args)
    if not feasibility_check(spec, args.n):
        raise InfeasibleDesignError(f"{spec.describe()} is infeasible for N={args.n}")
    checks = run_verification(args.n, spec, mc_reps=args.mc_reps, seed=args.seed)
    lines = [c.line() for c in checks]
    _emit("\n".join(lines), args.out)
    return 0 if all(c.passed for c in checks) else EXIT_VERIFY


def cmd_field_session(args) -> int:
    from .field import FieldSession, ScriptedIO, TerminalIO

    pop = FieldSession.read_population(args.pop_csv)
    spec = _spec_from_args(args)
    io = ScriptedIO(Path(args.responses).read_text(encoding="utf-8").splitlines()) if args.responses else TerminalIO()
    session = FieldSession(
        pop["N"], spec, np.random.default_rng(args.seed), io,
        aux=pop["aux"], population_ranks=pop["population_ranks"], use_auxiliary=args.use_aux,
    )
    smp = session.run()
    out = _out_path(args.out or "field_sample.csv")
    smp.to_csv(out)
    report = session.report(smp, args.at, args.alpha)
    report_path = _out_path(args.report) if args.report else out.with_suffix(".json")
    report_path.write_text(json.dumps(report, indent=2), encoding="utf-8")
    io.say(f"sample written to {out}; report written to {report_path}")
    return 0


class _Usage(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rsskit", description="Finite-population ranked set sampling toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", help="output file (default stdout); relative to $%s if set" % OUT_DIR_ENV)
        p.add_argument("--format", choices=("csv", "json"), help="accepted for uniformity; each output has one format")

    p = sub.add_parser("gen-pop", help="quantile-grid population CSV")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--dist", choices=sorted(DIST_NAMES), required=True)
    p.add_argument("--rho", type=float, help="attach an auxiliary ranking variable with this correlation")
    common(p)
    p.set_defaults(func=cmd_gen_pop)

    p = sub.add_parser("inclusion", help="inclusion-probability table JSON")
    _add_design_args(p)
    p.add_argument("--method", choices=("closed", "exact", "enumeration", "mc"), default="closed")
    p.add_argument("--reps", type=int, default=100_000)
    common(p)
    p.set_defaults(func=cmd_inclusion)

    p = sub.add_parser("sample", help="draw one sample from a population CSV")
    p.add_argument("--pop-csv")
    p.add_argument("--design", choices=sorted(DESIGN_NAMES), default="l2")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--pattern")
    p.add_argument("--sample-size", type=int)
    p.add_argument("--ranking", choices=("perfect", "auxiliary"), default="perfect")
    p.add_argument("--sheep", action="store_true", help="emit the published sheep sample instead of drawing")
    common(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("estimate", help="Hajek EDF, variance estimate and intervals")
    p.add_argument("--sample-csv", required=True)
    p.add_argument("--inclusion", required=True, help="inclusion table JSON")
    p.add_argument("--at", type=float, help="point x for F_hat(x), its variance and CI")
    p.add_argument("--median-ci", action="store_true")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--inversion", choices=("step", "linear"), default="linear")
    p.add_argument("--edf-out", help="write the EDF table CSV here")
    common(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("simulate", help="relative-efficiency experiment")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--n", type=int)
    p.add_argument("--dist", choices=sorted(DIST_NAMES), default="normal")
    p.add_argument("--designs", default="srs,l0,l1,l2")
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--rho", type=float, default=1.0)
    p.add_argument("--reps", type=int, default=10_000)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--mc", action="store_true", help="simulate even under perfect ranking")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="run the invariant suite for one design")
    _add_design_args(p)
    p.add_argument("--mc-reps", type=int, default=20_000)
    common(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("field-session", help="guided set-by-set sampling session")
    p.add_argument("--pop-csv", required=True)
    _add_design_args(p, require_n=False)
    p.add_argument("--responses", help="replay operator answers from this file, one per line")
    p.add_argument("--use-aux", action="store_true", help="rank sets by the y column instead of asking")
    p.add_argument("--at", type=float, help="report F_hat at this point")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--report", help="report JSON path (default: next to the sample CSV)")
    common(p)
    p.set_defaults(func=cmd_field_session)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InfeasibleDesignError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except _Usage as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
