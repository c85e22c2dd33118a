"""Command-line interface.

Subcommands ``summarize``, ``plan``, ``choose``, ``stratify`` and ``simulate`` each
build a report (metadata plus plot-ready tables) and render it as aligned text,
delimited tables or JSON.  Exit codes: 0 success, 1 usage error, 2 data error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import re
import sys
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

from .estimator_selector import select
from .population_model import ClaimPopulation, PopulationFormatError, load_population, moments
from .sample_planner import PlanRequest, UnsupportedPlan, plan
from .sim_lab import (
    BAND_HEADER,
    COVERAGE_HEADER,
    SCENARIOS,
    ScenarioSpec,
    coverage_experiment,
    make_edwards_like,
    make_neter_like,
    mc_sigma_r_bands,
)
from .stratifier import (
    cum_sqrt_f,
    optimal_two_strata,
    stratified_sample_size,
    stratify_at,
    unstratified_objective,
)
from .variance_engine import DomainError, PartialErrorSpec, conservative_pi

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


@dataclass
class Table:
    name: str
    header: tuple[str, ...]
    rows: list[tuple] = field(default_factory=list)


@dataclass
class Report:
    command: str
    meta: dict[str, Any] = field(default_factory=dict)
    tables: list[Table] = field(default_factory=list)
    headline: str = ""


# ---------------------------------------------------------------- rendering

def _clean(v: Any) -> Any:
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, (list, tuple)):
        return [_clean(a) for a in v]
    return v


def _fmt(v: Any) -> str:
    if v is None:
        return "-"
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, (list, tuple)):
        return ", ".join(_fmt(a) for a in v)
    return str(v)


def render_human(rep: Report) -> str:
    out = []
    if rep.headline:
        out.append(rep.headline)
    width = max((len(k) for k in rep.meta), default=0)
    out.extend(f"{k.ljust(width)}  {_fmt(v)}" for k, v in rep.meta.items())
    for t in rep.tables:
        cells = [list(t.header)] + [[_fmt(v) for v in row] for row in t.rows]
        widths = [max(len(r[i]) for r in cells) for i in range(len(t.header))]
        out.append("")
        out.append(f"[{t.name}]")
        for r in cells:
            out.append("  ".join(c.rjust(w) for c, w in zip(r, widths)).rstrip())
    return "\n".join(out) + "\n"


def _plain(v: Any) -> Any:
    v = _clean(v)
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, list):
        return ";".join(str(_plain(a)) for a in v)
    return v


def render_delimited(rep: Report) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for k, v in rep.meta.items():
        buf.write(f"# {k}={_plain(v)}\n")
    for i, t in enumerate(rep.tables):
        if i or rep.meta:
            buf.write(f"# table={t.name}\n")
        w.writerow(t.header)
        for row in t.rows:
            w.writerow([_plain(v) for v in row])
    return buf.getvalue()


def render_json(rep: Report) -> str:
    doc = {
        "command": rep.command,
        "meta": {k: _clean(v) for k, v in rep.meta.items()},
        "tables": [{"name": t.name, "header": list(t.header),
                    "rows": [[_clean(v) for v in row] for row in t.rows]} for t in rep.tables],
    }
    return json.dumps(doc, indent=2) + "\n"


RENDERERS = {"human": render_human, "delimited": render_delimited, "json": render_json}


# ---------------------------------------------------------------- argument parsing

def parse_grid(text: str) -> list[float]:
    """``lo:hi:step`` inclusive of both ends, e.g. ``0.05:0.95:0.05``."""
    try:
        lo, hi, step = (float(p) for p in text.split(":"))
    except ValueError:
        raise UsageError(f"bad grid {text!r}; expected lo:hi:step") from None
    if step <= 0 or hi < lo or not (0.0 <= lo and hi <= 1.0):
        raise UsageError(f"bad grid {text!r}; need 0 <= lo <= hi <= 1 and step > 0")
    count = int(round((hi - lo) / step)) + 1
    return [round(lo + i * step, 10) for i in range(count) if lo + i * step <= hi + 1e-9]


def parse_partial(text: str) -> tuple[float, float, float]:
    try:
        pi_t, pi_p, q = (float(p) for p in text.split(","))
    except ValueError:
        raise UsageError(f"bad partial spec {text!r}; expected piT,piP,q") from None
    if not 0.0 <= pi_p <= pi_t <= 1.0 or not 0.0 < q < 1.0:
        raise UsageError("partial spec needs 0 <= piP <= piT <= 1 and 0 < q < 1")
    return pi_t, pi_p, q


_CUSTOM = re.compile(r"^full=([0-9.]+)(?::q=([0-9.]+)(?:-([0-9.]+))?)?$")


def parse_scenario(text: str) -> list[int | ScenarioSpec]:
    """Preset numbers (``1,2,3,4``) or a custom ``full=F[:q=Q|:q=LO-HI]``."""
    text = text.strip()
    m = _CUSTOM.match(text)
    if m:
        full = float(m.group(1))
        if m.group(3):
            q: float | tuple[float, float] = (float(m.group(2)), float(m.group(3)))
        elif m.group(2):
            q = float(m.group(2))
        else:
            q = (0.2, 0.8)
        try:
            return [ScenarioSpec(full, q, 0.0, text)]
        except ValueError as exc:
            raise UsageError(f"bad scenario {text!r}: {exc}") from None
    out: list[int | ScenarioSpec] = []
    for part in text.split(","):
        if not part.strip().isdigit() or int(part) not in SCENARIOS:
            raise UsageError(f"bad scenario {part!r}; presets are {sorted(SCENARIOS)}")
        out.append(int(part))
    return out


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _fraction(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"{v} outside [0, 1]")
    return v


def _level(text: str) -> float:
    v = _fraction(text)
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError("confidence must lie strictly between 0 and 1")
    return v


def _positive(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v > 0.0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _count(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group()
    src.add_argument("--input", help="population file: one amount per line, or amount,count")
    src.add_argument("--synthetic", metavar="NAME[:SEED]",
                     help="generated population instead of a file: edwards or neter")
    common.add_argument("--format", choices=("plain", "run-length"), default="plain",
                        help="input file layout (default plain)")
    common.add_argument("--out", help="write output here instead of stdout")
    common.add_argument("--out-format", choices=tuple(RENDERERS), default="human")

    def rates(p):
        g = p.add_mutually_exclusive_group()
        g.add_argument("--pi", type=_fraction, help="error rate")
        g.add_argument("--pi-grid", metavar="LO:HI:STEP", help="grid of error rates")

    def estimator(p):
        p.add_argument("--estimator", choices=("simple_expansion", "ratio"),
                       default="simple_expansion")

    parser = _Parser(prog="auditdesign", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("summarize", parents=[common], help="population size, totals and moments")

    p = sub.add_parser("plan", parents=[common], help="sample size for a margin of error")
    p.add_argument("--margin", type=_positive, required=True, help="margin of error, dollars")
    p.add_argument("--confidence", type=_level, default=0.90)
    estimator(p)
    rates(p)
    p.add_argument("--partial", metavar="PIT,PIP,Q",
                   help="partial error model: error rate, partial rate, partial proportion")
    p.add_argument("--exact-partial", action="store_true",
                   help="use the exact partial-error variance instead of its bound")

    p = sub.add_parser("choose", parents=[common], help="confidence that ratio estimation wins")
    rates(p)
    p.add_argument("--threshold", type=_fraction, default=0.5)
    p.add_argument("--replicates", type=_count, help="add a Monte Carlo column")
    p.add_argument("--seed", type=int)

    p = sub.add_parser("stratify", parents=[common], help="optimal two-strata design")
    estimator(p)
    rates(p)
    p.add_argument("--n", type=_count, default=100,
                   help="sample size at which standard errors are reported (default 100)")
    p.add_argument("--margin", type=_positive, help="also size the stratified sample")
    p.add_argument("--confidence", type=_level, default=0.90)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo experiments")
    p.add_argument("--experiment", choices=("bands", "coverage"), default="bands")
    p.add_argument("--scenario", action="append",
                   help="preset list such as 1,2,3,4 or custom full=F[:q=LO-HI]; repeatable")
    rates(p)
    estimator(p)
    p.add_argument("--replicates", type=_count, default=500)
    p.add_argument("--seed", type=int)
    p.add_argument("--n", type=_count, help="coverage sample size")
    p.add_argument("--margin", type=_positive, help="plan the coverage sample size instead")
    p.add_argument("--confidence", type=_level, default=0.90)
    return parser


# ---------------------------------------------------------------- commands

def _population(args) -> ClaimPopulation:
    if args.synthetic:
        name, _, seed = args.synthetic.partition(":")
        makers = {"edwards": make_edwards_like, "neter": make_neter_like}
        if name not in makers:
            raise UsageError(f"unknown synthetic population {name!r}; use edwards or neter")
        try:
            return makers[name](int(seed) if seed else 0)
        except ValueError:
            raise UsageError(f"bad synthetic seed {seed!r}") from None
    if not args.input:
        raise UsageError("one of --input or --synthetic is required")
    try:
        return load_population(args.input, args.format)
    except PopulationFormatError as exc:
        raise DataError(str(exc)) from None
    except OSError as exc:
        raise DataError(f"cannot read {args.input}: {exc.strerror or exc}") from None


def _rates(args, default: Optional[list[float]] = None) -> Optional[list[float]]:
    if args.pi_grid:
        return parse_grid(args.pi_grid)
    if args.pi is not None:
        return [args.pi]
    return default


def cmd_summarize(args) -> Report:
    pop = _population(args)
    m = moments(pop)
    cons = conservative_pi(m)
    rep = Report("summarize", headline=f"N={pop.N}, unique={pop.unique}")
    rep.meta.update({
        "N": pop.N,
        "unique": pop.unique,
        "total": pop.total / 100,
        "total_squares": pop.total_squares / 10**4,
        "mu_x": m.mu_x,
        "sigma2_x": m.sigma2_x,
        "mu_x2": m.mu_x2,
        "mu12": m.mu12,
        "sigma2_x2": m.sigma2_x2,
        "g1": m.g1,
        "cv": math.sqrt(m.cv2),
        "pi_crit": cons.pi_crit,
        "pi_crit_unclamped": cons.pi_crit_unclamped,
        "pi_conservative": cons.pi_max,
    })
    return rep


PLAN_HEADER = ("pi", "n", "n_real", "variance", "achieved_margin", "conservative")


def cmd_plan(args) -> Report:
    if args.partial and (args.pi is not None or args.pi_grid):
        raise UsageError("--partial cannot be combined with --pi/--pi-grid")
    if args.exact_partial and not args.partial:
        raise UsageError("--exact-partial needs --partial")
    pop = _population(args)
    rep = Report("plan")
    rep.meta.update({"N": pop.N, "estimator": args.estimator, "margin": args.margin,
                     "confidence": args.confidence})
    try:
        if args.partial:
            pi_t, pi_p, q = parse_partial(args.partial)
            spec = PartialErrorSpec.from_rates(pop.N, pi_t, pi_p, q)
            req = PlanRequest(args.margin, args.confidence, args.estimator, "partial",
                              args.exact_partial)
            sp = plan(pop, req, spec)
            _plan_meta(rep, sp)
            rep.meta.update({"partial_T": spec.T, "partial_p": spec.p, "partial_q": q})
            return rep
        cons = plan(pop, PlanRequest(args.margin, args.confidence, args.estimator, "conservative"))
        grid = _rates(args)
        if grid is None:
            _plan_meta(rep, cons)
            return rep
        table = Table("sample_size_by_error_rate", PLAN_HEADER)
        plans = [plan(pop, PlanRequest(args.margin, args.confidence, args.estimator), p)
                 for p in grid]
        for p, sp in zip(grid, plans):
            table.rows.append((p, sp.n, sp.n_real, sp.variance_used.value, sp.achieved_margin, False))
        table.rows.append((cons.pi, cons.n, cons.n_real, cons.variance_used.value,
                           cons.achieved_margin, True))
        if len(grid) == 1:
            _plan_meta(rep, plans[0])
        else:
            best = max(range(len(grid)), key=lambda i: (plans[i].n_real, -i))
            rep.meta["argmax_pi"] = grid[best]
            rep.meta["max_n"] = plans[best].n
        rep.meta["conservative_pi"] = cons.pi
        rep.meta["conservative_n"] = cons.n
        rep.tables.append(table)
    except UnsupportedPlan as exc:
        raise UsageError(str(exc)) from None
    except DomainError as exc:
        raise DataError(str(exc)) from None
    return rep


def _plan_meta(rep: Report, sp) -> None:
    rep.meta.update({
        "n": sp.n,
        "n_real": sp.n_real,
        "pi": sp.pi,
        "variance": sp.variance_used.value,
        "variance_method": sp.variance_used.method,
        "achieved_margin": sp.achieved_margin,
        "z": sp.z,
        "conservative": sp.conservative,
        "clamped": sp.clamped,
    })
    if sp.warnings:
        rep.meta["warnings"] = list(sp.warnings)


CHOOSE_HEADER = ("pi", "ne", "mean_g", "var_g", "prob_normal", "recommendation", "degenerate")


def cmd_choose(args) -> Report:
    if args.replicates and args.seed is None:
        raise UsageError("--replicates needs --seed")
    grid = _rates(args)
    if grid is None:
        raise UsageError("one of --pi or --pi-grid is required")
    pop = _population(args)
    m = moments(pop)
    header = CHOOSE_HEADER + (("prob_mc",) if args.replicates else ())
    table = Table("ratio_confidence_by_error_rate", header)
    for p in grid:
        try:
            r = select(pop, p, threshold=args.threshold, replicates=args.replicates,
                       seed=args.seed, m=m)
        except DomainError:
            row: tuple = (p, int(round(p * pop.N)), None, None, None, "undefined", None)
            table.rows.append(row + ((None,) if args.replicates else ()))
            continue
        row = (p, r.ne, r.mean_g, r.var_g, r.prob_normal, r.recommendation, r.degenerate)
        table.rows.append(row + ((r.prob_mc,) if args.replicates else ()))
    rep = Report("choose", tables=[table])
    rep.meta.update({"N": pop.N, "threshold": args.threshold})
    if args.replicates:
        rep.meta.update({"replicates": args.replicates, "seed": args.seed})
    return rep


STRATIFY_HEADER = ("pi", "threshold", "n_lower", "se_optimal", "se_cum_sqrt_f", "se_srs")


def cmd_stratify(args) -> Report:
    pop = _population(args)
    if pop.N < 2:
        raise DataError("need at least two claims to stratify")
    grid = _rates(args, [0.5])
    kind = args.estimator
    rep = Report("stratify")
    rep.meta.update({"N": pop.N, "kind": kind, "n": args.n})
    try:
        cum_cut: Optional[int] = cum_sqrt_f(pop)[0]
    except ValueError as exc:
        cum_cut = None
        rep.meta["cum_sqrt_f_note"] = str(exc)
    table = Table("standard_error_by_error_rate", STRATIFY_HEADER)
    root_n = math.sqrt(args.n)
    first = None
    for p in grid:
        best = optimal_two_strata(pop, p, kind)
        first = first or best
        cum_se = None
        if cum_cut is not None:
            try:
                cum_se = stratify_at(pop, cum_cut, p, kind).objective / root_n
            except ValueError:
                cum_se = None
        table.rows.append((p, best.threshold / 100, best.n_lower, best.objective / root_n,
                           cum_se, unstratified_objective(pop, p, kind) / root_n))
    assert first is not None
    rep.meta.update({
        "threshold": first.threshold / 100,
        "n_lower": first.n_lower,
        "n_upper": pop.N - first.n_lower,
        "objective": first.objective,
        "cum_sqrt_f_threshold": cum_cut / 100 if cum_cut is not None else None,
        "degenerate": first.degenerate,
    })
    if first.notes:
        rep.meta["notes"] = list(first.notes)
    if first.degenerate:
        rep.headline = "warning: degenerate population (a single distinct amount)"
    if args.margin:
        sp = stratified_sample_size(first, args.margin, args.confidence)
        rep.meta.update({"stratified_n": sp.n, "allocation": list(sp.allocation.sizes),
                         "stratified_margin": sp.achieved_margin})
    rep.tables.append(table)
    return rep


def cmd_simulate(args) -> Report:
    if args.seed is None:
        raise UsageError("simulate needs --seed")
    scenarios: list[int | ScenarioSpec] = []
    for s in args.scenario or []:
        scenarios.extend(parse_scenario(s))
    if args.experiment == "bands":
        rates = _rates(args)
        if rates is None:
            raise UsageError("bands need --pi or --pi-grid")
        pop = _population(args)
        rows = mc_sigma_r_bands(pop, scenarios or [1, 2, 3, 4], rates, args.replicates,
                                args.seed)
        table = Table("realized_sigma_r_bands", BAND_HEADER, [r.as_tuple() for r in rows])
        rep = Report("simulate", tables=[table])
        rep.meta.update({"N": pop.N, "replicates": args.replicates, "seed": args.seed})
        return rep
    if args.pi is None:
        raise UsageError("coverage needs a single --pi")
    if len(scenarios) > 1:
        raise UsageError("coverage takes one scenario")
    if (args.n is None) == (args.margin is None):
        raise UsageError("coverage needs exactly one of --n or --margin")
    pop = _population(args)
    spec = scenarios[0] if scenarios else 1
    spec = SCENARIOS[spec] if isinstance(spec, int) else spec
    n = args.n
    if n is None:
        try:
            n = plan(pop, PlanRequest(args.margin, args.confidence, args.estimator), args.pi).n
        except DomainError as exc:
            raise DataError(str(exc)) from None
    if not 2 <= n <= pop.N:
        raise UsageError(f"coverage sample size {n} outside [2, {pop.N}]")
    res = coverage_experiment(pop, spec.at_rate(args.pi), n, args.estimator, args.confidence,
                              args.replicates, args.seed)
    rep = Report("simulate", tables=[Table("coverage", COVERAGE_HEADER, [res.as_tuple()])])
    rep.meta.update({"N": pop.N, "pi": args.pi, "scenario": spec.name})
    return rep


COMMANDS = {
    "summarize": cmd_summarize,
    "plan": cmd_plan,
    "choose": cmd_choose,
    "stratify": cmd_stratify,
    "simulate": cmd_simulate,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        rep = COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DomainError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    text = RENDERERS[args.out_format](rep)
    if args.out:
        try:
            with open(args.out, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            print(f"error: cannot write {args.out}: {exc.strerror or exc}", file=sys.stderr)
            return EXIT_USAGE
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
