"""Scenario runner: ingest, route, pre-process, build, solve, verify, report.

Verbs: ``plan`` (one scenario), ``sweep`` (seeds x scenarios with a
comparison table), ``pairs`` (route pairs), ``export-lp`` and ``verify``
(re-check an assignments file).
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
import time
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from . import milp
from .feasibility import Channel, FeasibilityTable, InfeasibleInstanceError, build_feasibility
from .netmodel import (
    EXAMPLE_FIXED,
    EXAMPLE_SERVICES,
    Demand,
    Mode,
    ParseError,
    PlanningInstance,
    Topology,
    ValidationError,
    as_fraction,
    cost239,
    example_demands,
    example_topology,
    fraction_text,
    generate_traffic,
    load_demands,
    load_topology,
)
from .pathing import pairs_csv, pairs_for_instance
from .solver import Assignment, Solution, Status, solve_exact, solve_heuristic, verify_solution

log = logging.getLogger("eonplan")

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_TIMEOUT = 3
EXIT_INVALID = 4

QUARTERS = (Fraction(1, 4), Fraction(1, 2), Fraction(3, 4), Fraction(1))

METRICS_HEADER = ["seed", "mode", "sla", "phi", "link_usage", "status", "wall_s"]
ASSIGNMENTS_HEADER = [
    "demand", "pair", "service_fraction", "fmt_w", "fmt_b",
    "chan_w_start", "chan_w_width", "chan_b_start", "chan_b_width",
]


class StageError(RuntimeError):
    """A pipeline failure tagged with the stage it came from."""

    def __init__(self, stage: str, cause: Exception, exit_code: int = EXIT_INVALID):
        self.stage = stage
        self.cause = cause
        self.exit_code = exit_code
        super().__init__(f"[{stage}] {cause}")


@dataclass(frozen=True)
class RunConfig:
    topology: str | None = None
    cost239: bool = False
    example: bool = False
    demands: str | None = None
    gen_seeds: tuple[int, ...] = ()
    mode: Mode = Mode.FULL
    sla: Fraction = Fraction(0)
    services: tuple[Fraction, ...] = QUARTERS
    fixed: Mapping[str, Fraction] | None = None
    slices: int = 320
    k_pairs: int = 4
    solver: str = "exact"
    time_limit: float = 300.0
    threads: int = 1
    out: str | None = None
    wall_time: bool = False

    def __post_init__(self):
        sources = sum([self.topology is not None, self.cost239, self.example])
        if sources != 1:
            raise ValidationError("give exactly one topology source (--topology, --cost239 or --example)")
        demand_sources = sum([self.demands is not None, bool(self.gen_seeds), self.example])
        if demand_sources != 1:
            raise ValidationError("give exactly one demand source (--demands or --gen-seed/--gen-seeds)")
        if not self.services:
            raise ValidationError("protection service set K is empty")
        if self.solver not in ("exact", "heuristic"):
            raise ValidationError(f"unknown solver {self.solver!r}")
        if self.threads < 1:
            raise ValidationError("threads must be >= 1")


@dataclass
class RunMetrics:
    seed: int | None
    mode: Mode
    sla: Fraction
    phi: int | None
    link_usage: int | None
    status: Status
    wall_s: float
    solution: Solution | None = field(default=None, repr=False)
    table: FeasibilityTable | None = field(default=None, repr=False)

    @property
    def label(self) -> str:
        return scenario_label(self.mode, self.sla)

    def row(self, wall_time: bool = False) -> list[str]:
        return [
            "" if self.seed is None else str(self.seed),
            self.mode.value,
            fraction_text(self.sla),
            "" if self.phi is None else str(self.phi),
            "" if self.link_usage is None else str(self.link_usage),
            self.status.value,
            f"{self.wall_s:.3f}" if wall_time else "",
        ]


def scenario_label(mode: Mode, sla) -> str:
    if mode in (Mode.FULL, Mode.FIXED_PER_DEMAND):
        return mode.value
    return f"{mode.value}-{fraction_text(as_fraction(sla))}"


# --------------------------------------------------------------------------- pipeline


def load_network(config: RunConfig) -> Topology:
    try:
        if config.example:
            return example_topology()
        if config.cost239:
            return cost239()
        return load_topology(config.topology)
    except (OSError, ParseError, ValidationError) as exc:
        raise StageError("ingest", exc) from exc


def demand_sets(config: RunConfig, topology: Topology) -> list[tuple[int | None, tuple[Demand, ...]]]:
    try:
        if config.example:
            return [(None, tuple(example_demands()))]
        if config.demands is not None:
            return [(None, tuple(load_demands(config.demands)))]
        return [(s, tuple(generate_traffic(topology, s))) for s in config.gen_seeds]
    except (OSError, ParseError, ValidationError) as exc:
        raise StageError("ingest", exc) from exc


def random_fixed_fractions(demands: Sequence[Demand], services: Sequence[Fraction], seed: int | None) -> dict[str, Fraction]:
    """Per-demand protection drawn uniformly from K without full protection
    (unless K only offers 1)."""
    partial = [f for f in services if f < 1] or list(services)
    rng = np.random.default_rng([0 if seed is None else seed, 7])
    picks = rng.integers(0, len(partial), size=len(demands))
    return {d.id: partial[i] for d, i in zip(demands, picks)}


def make_instance(config: RunConfig, topology: Topology, demands, seed, mode: Mode, sla) -> PlanningInstance:
    fixed = None
    if mode is Mode.FIXED_PER_DEMAND:
        if config.fixed is not None:
            fixed = dict(config.fixed)
        elif config.example:
            fixed = dict(EXAMPLE_FIXED)
        else:
            fixed = random_fixed_fractions(demands, config.services, seed)
    if mode in (Mode.FULL, Mode.FIXED_PER_DEMAND):
        sla = Fraction(0)
    try:
        return PlanningInstance(
            topology, tuple(demands), slices=config.slices, services=config.services,
            sla=as_fraction(sla), mode=mode, fixed_fractions=fixed, k_pairs=config.k_pairs,
        )
    except ValidationError as exc:
        raise StageError("ingest", exc) from exc


def solve_instance(instance: PlanningInstance, config: RunConfig, seed=None, pairs=None) -> RunMetrics:
    """Run pathing -> feasibility -> build -> solve -> verify on one instance.

    Infeasibility is a result, not an error. A solution that fails
    verification raises ``StageError("verify")``.
    """
    t0 = time.perf_counter()
    if pairs is None:
        pairs = pairs_for_instance(instance)
    table = build_feasibility(instance, pairs)
    if table.unservable:
        log.warning("%s", InfeasibleInstanceError(table.unservable))
        return RunMetrics(seed, instance.mode, instance.sla, None, None, Status.INFEASIBLE,
                          time.perf_counter() - t0, None, table)
    if config.solver == "exact":
        try:
            model = milp.build_model(instance, table)
        except (milp.BuildError, InfeasibleInstanceError) as exc:
            raise StageError("build", exc) from exc
        sol = solve_exact(model, time_limit=config.time_limit, threads=config.threads)
    else:
        sol = solve_heuristic(table)
    wall = time.perf_counter() - t0
    if sol.status is Status.INFEASIBLE:
        log.warning("infeasible: %s", sol.hint)
        return RunMetrics(seed, instance.mode, instance.sla, None, None, sol.status, wall, sol, table)
    report = verify_solution(table, sol)
    if not report.ok:
        raise StageError("verify", RuntimeError("solution failed verification\n" + report.summary()))
    return RunMetrics(seed, instance.mode, instance.sla, report.phi, report.link_usage, sol.status, wall, sol, table)


def run_scenario(config: RunConfig) -> list[RunMetrics]:
    """The configured scenario on every demand set; writes output files when
    ``config.out`` is set."""
    topology = load_network(config)
    runs = []
    for seed, demands in demand_sets(config, topology):
        inst = make_instance(config, topology, demands, seed, config.mode, config.sla)
        runs.append(solve_instance(inst, config, seed))
    if config.out:
        write_outputs(config.out, runs, config.wall_time)
    return runs


def sweep(config: RunConfig, scenarios: Sequence[tuple[Mode, Fraction]]) -> list[RunMetrics]:
    """Every (demand set, scenario); route pairs are computed once per demand set."""
    topology = load_network(config)
    runs = []
    for seed, demands in demand_sets(config, topology):
        pairs = None
        for mode, sla in scenarios:
            inst = make_instance(config, topology, demands, seed, mode, sla)
            if pairs is None:
                pairs = pairs_for_instance(inst)
            runs.append(solve_instance(inst, config, seed, pairs))
    return runs


# --------------------------------------------------------------------------- reporting


def metrics_csv(runs: Sequence[RunMetrics], wall_time: bool = False) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(METRICS_HEADER)
    for r in runs:
        w.writerow(r.row(wall_time))
    return out.getvalue()


def assignments_csv(run: RunMetrics) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(ASSIGNMENTS_HEADER)
    if run.solution is not None and run.status is not Status.INFEASIBLE:
        for d in run.table.instance.demands:
            a = run.solution.assignments[d.id]
            cfg = run.table.config(d.id, a.pair, a.service)
            w.writerow([
                d.id, a.pair, fraction_text(a.service), cfg.working_format.name, cfg.backup_format.name,
                a.working.start, a.working.width, a.backup.start, a.backup.width,
            ])
    return out.getvalue()


def read_assignments(text: str, table: FeasibilityTable) -> Solution:
    """Solution from an assignments CSV, resolved against ``table``'s pairs."""
    rows = list(csv.DictReader(io.StringIO(text)))
    if rows and set(ASSIGNMENTS_HEADER) - set(rows[0]):
        raise ParseError(f"assignments file needs columns {','.join(ASSIGNMENTS_HEADER)}", 1)
    out = {}
    for lineno, row in enumerate(rows, start=2):
        try:
            did = row["demand"]
            p = int(row["pair"])
            pair = table.pairs[did][p]
            out[did] = Assignment(
                did, p, as_fraction(row["service_fraction"]),
                Channel(int(row["chan_w_start"]), int(row["chan_w_width"])),
                Channel(int(row["chan_b_start"]), int(row["chan_b_width"])),
                pair.working.links, pair.backup.links,
            )
        except (KeyError, IndexError, ValueError) as exc:
            raise ParseError(f"bad assignment row: {exc}", lineno) from None
    return Solution(out, Status.FEASIBLE)


@dataclass
class CompareReport:
    baseline: str
    labels: list[str]
    seeds: list
    phi: dict[str, dict]
    savings: dict[str, dict]
    mean: dict[str, float]

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        others = [l for l in self.labels if l != self.baseline]
        w.writerow(["seed"] + [f"phi_{l}" for l in self.labels] + [f"saving_pct_{l}" for l in others])
        for s in self.seeds:
            w.writerow(
                ["" if s is None else s]
                + [_cell(self.phi[l][s]) for l in self.labels]
                + [_pct(self.savings[l][s]) for l in others]
            )
        w.writerow(["mean"] + [""] * len(self.labels) + [_pct(self.mean[l]) for l in others])
        return out.getvalue()


def _cell(v):
    return "" if v is None else v


def _pct(v):
    return "" if v is None else f"{100 * v:.2f}"


def compare_report(runs: Sequence[RunMetrics], baseline: str = "full") -> CompareReport:
    """Per-seed phi for every scenario and relative saving (base - phi) / base
    against the ``baseline`` scenario label."""
    by_label: dict[str, dict] = {}
    for r in runs:
        by_label.setdefault(r.label, {})[r.seed] = r.phi
    if len(by_label) < 2:
        raise ValueError("comparison needs at least two scenarios")
    if baseline not in by_label:
        raise ValueError(f"baseline scenario {baseline!r} not among {sorted(by_label)}")
    seeds = list(by_label[baseline])
    for label, per_seed in by_label.items():
        if sorted(per_seed, key=str) != sorted(seeds, key=str):
            raise ValueError(f"scenario {label} covers different instances than {baseline}")
    savings: dict[str, dict] = {}
    mean: dict[str, float] = {}
    for label, per_seed in by_label.items():
        if label == baseline:
            continue
        savings[label] = {}
        for s in seeds:
            base, phi = by_label[baseline][s], per_seed[s]
            savings[label][s] = None if not base or phi is None else (base - phi) / base
        vals = [v for v in savings[label].values() if v is not None]
        mean[label] = float(np.mean(vals)) if vals else None
    return CompareReport(baseline, list(by_label), seeds, by_label, savings, mean)


def write_outputs(out_dir: str, runs: Sequence[RunMetrics], wall_time: bool = False, compare: bool = False) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "metrics.csv"), "w", encoding="utf-8") as fh:
        fh.write(metrics_csv(runs, wall_time))
    if len(runs) == 1:
        with open(os.path.join(out_dir, "assignments.csv"), "w", encoding="utf-8") as fh:
            fh.write(assignments_csv(runs[0]))
    else:
        for r in runs:
            sub = os.path.join(out_dir, "runs", f"{r.label}_seed{'' if r.seed is None else r.seed}")
            os.makedirs(sub, exist_ok=True)
            with open(os.path.join(sub, "assignments.csv"), "w", encoding="utf-8") as fh:
                fh.write(assignments_csv(r))
    if compare:
        with open(os.path.join(out_dir, "compare.csv"), "w", encoding="utf-8") as fh:
            fh.write(compare_report(runs).to_csv())


def exit_code(runs: Sequence[RunMetrics]) -> int:
    statuses = {r.status for r in runs}
    if Status.INFEASIBLE in statuses:
        return EXIT_INFEASIBLE
    if Status.TIMEOUT in statuses:
        return EXIT_TIMEOUT
    return EXIT_OK


# --------------------------------------------------------------------------- argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _fractions(text: str) -> tuple[Fraction, ...]:
    try:
        return tuple(as_fraction(t.strip()) for t in text.split(",") if t.strip())
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"bad fraction list {text!r}") from None


def _seeds(text: str) -> tuple[int, ...]:
    try:
        if ".." in text:
            a, b = text.split("..")
            return tuple(range(int(a), int(b) + 1))
        return tuple(int(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None


def _fixed_map(text: str) -> dict[str, Fraction]:
    try:
        return {k.strip(): as_fraction(v) for k, v in (item.split("=") for item in text.split(","))}
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad fixed map {text!r}, expected D1=0.5,D2=0.75") from None


def _common(p: argparse.ArgumentParser, scenario=True):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--topology", help="topology file (node/link records)")
    src.add_argument("--cost239", action="store_true", help="built-in COST239 network")
    src.add_argument("--example", action="store_true", help="built-in two-demand worked example")
    dem = p.add_mutually_exclusive_group()
    dem.add_argument("--demands", help="demand CSV (id,src,dst,rate_gbps)")
    dem.add_argument("--gen-seed", type=int, help="generate traffic with this seed")
    dem.add_argument("--gen-seeds", type=_seeds, help="generate traffic for seeds A..B or a,b,c")
    if scenario:
        p.add_argument("--mode", default="full", choices=[m.value for m in Mode])
        p.add_argument("--sla", type=as_fraction, default=None)
    p.add_argument("--services", type=_fractions, default=None, help="protection fractions K, e.g. 0.25,0.5,0.75,1")
    p.add_argument("--fixed", type=_fixed_map, default=None, help="per-demand fractions for --mode fixed, D1=0.5,...")
    p.add_argument("--slices", type=int, default=320)
    p.add_argument("--kpairs", type=int, default=4)
    p.add_argument("--solver", choices=["exact", "heuristic"], default="exact")
    p.add_argument("--time-limit", type=float, default=300.0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", default=None)
    p.add_argument("--wall-time", action="store_true", help="record wall time in metrics.csv (breaks byte-identical reruns)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="eonplan", description="Spectrum planning with partial protection.")
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)
    _common(sub.add_parser("plan", help="solve one scenario"))
    sw = sub.add_parser("sweep", help="seeds x scenarios, with compare.csv")
    _common(sw, scenario=False)
    sw.add_argument("--modes", default="full,uniform,demandwise")
    sw.add_argument("--slas", type=_fractions, default=(Fraction(3, 4), Fraction(1, 2), Fraction(1, 4)))
    _common(sub.add_parser("pairs", help="write the route pairs of every demand"), scenario=False)
    ex = sub.add_parser("export-lp", help="write the binary program")
    _common(ex)
    ex.add_argument("--format", choices=["lp", "mps"], default="lp")
    ex.add_argument("--output", "-o", default=None)
    ve = sub.add_parser("verify", help="re-check an assignments file")
    _common(ve)
    ve.add_argument("--solution", required=True)
    return parser


def config_from_args(args) -> RunConfig:
    seeds = ()
    if getattr(args, "gen_seed", None) is not None:
        seeds = (args.gen_seed,)
    elif getattr(args, "gen_seeds", None):
        seeds = args.gen_seeds
    services = args.services or (EXAMPLE_SERVICES if args.example else QUARTERS)
    mode = Mode(getattr(args, "mode", "full"))
    sla = getattr(args, "sla", None)
    if sla is None:
        sla = Fraction(3, 4) if args.example and mode in (Mode.UNIFORM_SLA, Mode.DEMAND_WISE) else Fraction(0)
    return RunConfig(
        topology=args.topology, cost239=args.cost239, example=args.example,
        demands=args.demands, gen_seeds=seeds, mode=mode, sla=sla, services=services,
        fixed=args.fixed, slices=args.slices, k_pairs=args.kpairs, solver=args.solver,
        time_limit=args.time_limit, threads=args.threads, out=args.out, wall_time=args.wall_time,
    )


def _scenarios(args) -> list[tuple[Mode, Fraction]]:
    out = []
    for name in args.modes.split(","):
        mode = Mode(name.strip())
        if mode in (Mode.FULL, Mode.FIXED_PER_DEMAND):
            out.append((mode, Fraction(0)))
        else:
            out += [(mode, s) for s in args.slas]
    return out


def _single_instance(config: RunConfig) -> PlanningInstance:
    topology = load_network(config)
    sets = demand_sets(config, topology)
    if len(sets) != 1:
        raise StageError("ingest", ValueError("this verb takes a single demand set"))
    seed, demands = sets[0]
    return make_instance(config, topology, demands, seed, config.mode, config.sla)


def _emit(text: str, path: str | None):
    if path:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.verb == "sweep" and args.gen_seed is None and not args.gen_seeds and not args.demands and not args.example:
            parser.error("sweep needs a demand source")
        if args.verb == "sweep":
            args.mode, args.sla = "full", None
        config = config_from_args(args)
        if args.verb == "plan":
            runs = run_scenario(config)
            sys.stdout.write(metrics_csv(runs, config.wall_time))
            for r in runs:
                log.info("%s seed=%s wall=%.3fs", r.label, r.seed, r.wall_s)
            return exit_code(runs)
        if args.verb == "sweep":
            runs = sweep(config, _scenarios(args))
            if config.out:
                write_outputs(config.out, runs, config.wall_time, compare=True)
            report = compare_report(runs)
            sys.stdout.write(report.to_csv())
            return exit_code(runs)
        if args.verb == "pairs":
            inst = _single_instance(config)
            text = pairs_csv(pairs_for_instance(inst))
            _emit(text, os.path.join(config.out, "pairs.csv") if config.out else None)
            return EXIT_OK
        if args.verb == "export-lp":
            inst = _single_instance(config)
            table = build_feasibility(inst, pairs_for_instance(inst))
            try:
                model = milp.build_model(inst, table)
            except (milp.BuildError, InfeasibleInstanceError) as exc:
                raise StageError("build", exc, EXIT_INFEASIBLE) from exc
            text = milp.lp_text(model) if args.format == "lp" else milp.mps_text(model)
            path = args.output or (os.path.join(config.out, f"model.{args.format}") if config.out else None)
            _emit(text, path)
            return EXIT_OK
        if args.verb == "verify":
            inst = _single_instance(config)
            table = build_feasibility(inst, pairs_for_instance(inst))
            try:
                with open(args.solution, encoding="utf-8") as fh:
                    sol = read_assignments(fh.read(), table)
            except (OSError, ParseError) as exc:
                raise StageError("ingest", exc) from exc
            report = verify_solution(table, sol)
            print(report.summary())
            print(f"phi={report.phi} link_usage={report.link_usage}")
            return EXIT_OK if report.ok else EXIT_INVALID
    except StageError as exc:
        print(f"eonplan: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValidationError as exc:
        print(f"eonplan: [config] {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_INVALID


if __name__ == "__main__":
    raise SystemExit(main())
