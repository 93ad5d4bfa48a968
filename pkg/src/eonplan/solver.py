"""Solvers for the joint routing / modulation / spectrum / protection problem.

Both backends search directly over per-demand assignments (route pair,
protection level, working channel, backup channel) instead of the binary
program's columns. Occupancy of each link is an int bitmask over slices.

Any solution can be compacted so the used slices form a prefix 0..phi-1
without breaking contiguity or introducing collisions, so minimising the
number of used slices is the same as minimising the highest occupied slice
end. Both backends work with that high-water mark.
"""
from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Mapping

import numpy as np

from .feasibility import Channel, FeasibilityTable, ServiceConfig, build_feasibility
from .netmodel import Demand, Mode, PlanningInstance

log = logging.getLogger(__name__)


class Status(enum.Enum):
    OPTIMAL = "OPTIMAL"
    FEASIBLE = "FEASIBLE"
    INFEASIBLE = "INFEASIBLE"
    TIMEOUT = "TIMEOUT"


@dataclass(frozen=True)
class Assignment:
    demand_id: str
    pair: int
    service: Fraction
    working: Channel
    backup: Channel
    working_links: tuple[int, ...]
    backup_links: tuple[int, ...]


@dataclass
class Solution:
    assignments: dict[str, Assignment]
    status: Status
    lower_bound: int | None = None
    nodes: int = 0
    wall_time: float = 0.0
    hint: str | None = None

    def usage(self) -> dict[int, set[int]]:
        """link id -> occupied slices (the r map)."""
        used: dict[int, set[int]] = {}
        for a in self.assignments.values():
            for links, ch in ((a.working_links, a.working), (a.backup_links, a.backup)):
                for e in links:
                    used.setdefault(e, set()).update(ch.slices())
        return used

    def theta(self, n_slices: int) -> np.ndarray:
        theta = np.zeros(n_slices, dtype=bool)
        for slices in self.usage().values():
            theta[list(slices)] = True
        return theta

    @property
    def phi(self) -> int:
        used = set()
        for slices in self.usage().values():
            used |= slices
        return len(used)

    @property
    def link_usage(self) -> int:
        return sum(len(s) for s in self.usage().values())

    @property
    def max_end(self) -> int:
        return max((max(a.working.end, a.backup.end) for a in self.assignments.values()), default=0)

    def compacted(self) -> "Solution":
        """Relabel used slices onto 0..phi-1, keeping their order."""
        used = set()
        for slices in self.usage().values():
            used |= slices
        remap = {s: i for i, s in enumerate(sorted(used))}
        out = {}
        for d, a in self.assignments.items():
            out[d] = replace(
                a,
                working=Channel(remap[a.working.start], a.working.width),
                backup=Channel(remap[a.backup.start], a.backup.width),
            )
        return replace(self, assignments=out)


def canonical_order(demands: Iterable[Demand]) -> list[Demand]:
    """Descending rate, ties by id."""
    return sorted(demands, key=lambda d: (-d.rate, d.id))


def _mask(start: int, width: int) -> int:
    return ((1 << width) - 1) << start


def _first_fit(occ: list[int], links, width: int, limit: int) -> int | None:
    """Lowest start with [start, start+width) free on every link and end <= limit."""
    busy = 0
    for e in links:
        busy |= occ[e]
    m = (1 << width) - 1
    for s in range(0, limit - width + 1):
        if not busy & (m << s):
            return s
    return None


def _free_starts(occ: list[int], links, width: int, limit: int) -> list[int]:
    busy = 0
    for e in links:
        busy |= occ[e]
    m = (1 << width) - 1
    return [s for s in range(0, limit - width + 1) if not busy & (m << s)]


@dataclass(frozen=True)
class _Option:
    cfg: ServiceConfig
    wlinks: tuple[int, ...]
    blinks: tuple[int, ...]
    prot: Fraction  # protected traffic f * t


class _Problem:
    """Flattened view of a feasibility table for the search backends."""

    def __init__(self, table: FeasibilityTable):
        self.table = table
        inst = table.instance
        self.instance = inst
        self.n_links = len(inst.topology.links)
        self.demands = canonical_order(inst.demands)
        self.rates = {d.id: d.rate for d in self.demands}
        self.options: dict[str, list[_Option]] = {}
        for d in self.demands:
            opts = []
            for cfg in table.options(d):
                pair = table.pairs[d.id][cfg.pair]
                opts.append(_Option(cfg, pair.working.links, pair.backup.links, cfg.service * d.rate))
            self.options[d.id] = opts
        total = inst.total_rate()
        self.sla_target = Fraction(0) if inst.literal_sla else inst.sla * total

    def unreachable_sla(self) -> bool:
        best = sum((max((o.prot for o in self.options[d.id]), default=Fraction(0)) for d in self.demands), Fraction(0))
        return best < self.sla_target

    def assignment(self, d: Demand, opt: _Option, ws: int, bs: int) -> Assignment:
        return Assignment(
            d.id, opt.cfg.pair, opt.cfg.service,
            Channel(ws, opt.cfg.working_width), Channel(bs, opt.cfg.backup_width),
            opt.wlinks, opt.blinks,
        )

    def diagnose(self) -> str:
        empty = [d.id for d in self.demands if not self.options[d.id]]
        if empty:
            return "demand(s) without feasible pair/service: " + ", ".join(empty)
        if self.unreachable_sla():
            return "SLA cannot be met with the allowed protection services"
        return f"spectrum exhausted: demands do not fit in {self.instance.slices} slices"


def lower_bound(table: FeasibilityTable) -> int:
    """Cheap valid bound on the optimum: widest unavoidable channel, and at
    every node the slices its demands must push through its incident links."""
    prob = _Problem(table)
    inst = table.instance
    lb = 0
    load: dict[str, int] = {}
    for d in prob.demands:
        opts = prob.options[d.id]
        if not opts:
            continue
        lb = max(lb, min(max(o.cfg.working_width, o.cfg.backup_width) for o in opts))
        both = min(o.cfg.working_width + o.cfg.backup_width for o in opts)
        load[d.src] = load.get(d.src, 0) + both
        load[d.dst] = load.get(d.dst, 0) + both
    for node, slots in load.items():
        deg = inst.topology.degree(node)
        lb = max(lb, -(-slots // deg))
    return lb


# --------------------------------------------------------------------------- exact


def solve_exact(table_or_model, time_limit: float = 300.0, threads: int = 1) -> Solution:
    """Depth-first branch and bound over per-demand assignments.

    Demands are branched in canonical order (descending rate, then id). At a
    node every (pair, service, working start, backup start) that keeps the
    high-water mark below the incumbent is a child; children are visited by
    ascending resulting high-water mark, then option order (pair index, then
    service), then working start, then backup start. A node is pruned when
    max(current high-water mark, widest channel any remaining demand must
    use) reaches the incumbent, or when the SLA can no longer be met.

    Only ``threads=1`` is implemented; the search is fully deterministic.
    """
    table = _as_table(table_or_model)
    if threads != 1:
        log.warning("threads=%d requested; the search runs single-threaded", threads)
    started = time.perf_counter()
    prob = _Problem(table)
    inst = prob.instance
    demands = prob.demands
    n = len(demands)
    if n == 0:
        return Solution({}, Status.OPTIMAL, lower_bound=0, wall_time=time.perf_counter() - started)
    if table.unservable or any(not prob.options[d.id] for d in demands) or prob.unreachable_sla():
        return Solution({}, Status.INFEASIBLE, wall_time=time.perf_counter() - started, hint=prob.diagnose())

    root_lb = lower_bound(table)
    suffix_width = [0] * (n + 1)
    suffix_prot = [Fraction(0)] * (n + 1)
    for i in range(n - 1, -1, -1):
        opts = prob.options[demands[i].id]
        need = min(max(o.cfg.working_width, o.cfg.backup_width) for o in opts)
        suffix_width[i] = max(suffix_width[i + 1], need)
        suffix_prot[i] = suffix_prot[i + 1] + max(o.prot for o in opts)

    occ = [0] * prob.n_links
    chosen: list[tuple[_Option, int, int]] = []
    best: dict = {"value": inst.slices + 1, "sol": None}
    # primal heuristic: its layout is the first incumbent
    primal = solve_heuristic(table)
    if primal.status is Status.FEASIBLE:
        best["value"] = primal.phi
        best["sol"] = primal.assignments
        log.info("nodes=0 incumbent=%d bound=%d t=%.3f", primal.phi, root_lb, time.perf_counter() - started)
    counter = {"nodes": 0, "timeout": False}
    deadline = started + time_limit

    def dfs(i: int, hw: int, prot: Fraction):
        counter["nodes"] += 1
        if counter["nodes"] & 1023 == 0 and time.perf_counter() > deadline:
            counter["timeout"] = True
        if counter["timeout"]:
            return
        if i == n:
            best["value"] = hw
            best["sol"] = {
                d.id: prob.assignment(d, opt, ws, bs) for d, (opt, ws, bs) in zip(demands, chosen)
            }
            log.info("nodes=%d incumbent=%d bound=%d t=%.3f", counter["nodes"], hw, root_lb,
                     time.perf_counter() - started)
            return
        d = demands[i]
        limit = best["value"] - 1  # channels must end at or below this
        children = []
        for order, opt in enumerate(prob.options[d.id]):
            if prot + opt.prot + suffix_prot[i + 1] < prob.sla_target:
                continue
            ww, wb = opt.cfg.working_width, opt.cfg.backup_width
            ws_list = _free_starts(occ, opt.wlinks, ww, limit)
            if not ws_list:
                continue
            bs_list = _free_starts(occ, opt.blinks, wb, limit)
            for ws in ws_list:
                for bs in bs_list:
                    children.append((max(hw, ws + ww, bs + wb), order, ws, bs, opt))
        children.sort(key=lambda c: c[:4])
        for new_hw, _, ws, bs, opt in children:
            if max(new_hw, suffix_width[i + 1]) >= best["value"]:
                break  # children are sorted, the rest are no better
            wm = _mask(ws, opt.cfg.working_width)
            bm = _mask(bs, opt.cfg.backup_width)
            for e in opt.wlinks:
                occ[e] |= wm
            for e in opt.blinks:
                occ[e] |= bm
            chosen.append((opt, ws, bs))
            dfs(i + 1, new_hw, prot + opt.prot)
            chosen.pop()
            for e in opt.wlinks:
                occ[e] &= ~wm
            for e in opt.blinks:
                occ[e] &= ~bm
            if counter["timeout"] or best["value"] <= root_lb:
                return

    if best["value"] > root_lb:
        dfs(0, 0, Fraction(0))
    wall = time.perf_counter() - started
    if best["sol"] is None:
        if counter["timeout"]:
            return Solution({}, Status.TIMEOUT, lower_bound=root_lb, nodes=counter["nodes"], wall_time=wall,
                            hint="time limit reached before any incumbent")
        return Solution({}, Status.INFEASIBLE, nodes=counter["nodes"], wall_time=wall, hint=prob.diagnose())
    assignments = best["sol"]
    status = Status.TIMEOUT if counter["timeout"] else Status.OPTIMAL
    bound = root_lb if counter["timeout"] else best["value"]
    return Solution(assignments, status, lower_bound=bound, nodes=counter["nodes"], wall_time=wall)


def _as_table(table_or_model) -> FeasibilityTable:
    if isinstance(table_or_model, FeasibilityTable):
        return table_or_model
    return table_or_model.feasibility  # a milp.Model


# --------------------------------------------------------------------------- heuristic


def _layout_key(assignments: Mapping[str, Assignment]):
    ends = [max(a.working.end, a.backup.end) for a in assignments.values()]
    top = max(ends, default=0)
    return (top, ends.count(top), sum(a.working.end + a.backup.end for a in assignments.values()))


class _Layout:
    """Mutable occupancy used by construction and local search."""

    def __init__(self, prob: _Problem):
        self.prob = prob
        self.occ = [0] * prob.n_links
        self.assigned: dict[str, Assignment] = {}

    def add(self, a: Assignment):
        wm, bm = a.working.mask, a.backup.mask
        for e in a.working_links:
            self.occ[e] |= wm
        for e in a.backup_links:
            self.occ[e] |= bm
        self.assigned[a.demand_id] = a

    def remove(self, demand_id: str) -> Assignment:
        a = self.assigned.pop(demand_id)
        for e in a.working_links:
            self.occ[e] &= ~a.working.mask
        for e in a.backup_links:
            self.occ[e] &= ~a.backup.mask
        return a

    def protected(self) -> Fraction:
        return sum((a.service * self.prob_rate(a.demand_id) for a in self.assigned.values()), Fraction(0))

    def prob_rate(self, demand_id: str) -> Fraction:
        return self.prob.rates[demand_id]

    def best_placement(self, d: Demand, opts: Iterable[_Option]) -> Assignment | None:
        limit = self.prob.instance.slices
        top = max((max(a.working.end, a.backup.end) for a in self.assigned.values()), default=0)
        best, best_key = None, None
        for order, opt in enumerate(opts):
            ws = _first_fit(self.occ, opt.wlinks, opt.cfg.working_width, limit)
            if ws is None:
                continue
            bs = _first_fit(self.occ, opt.blinks, opt.cfg.backup_width, limit)
            if bs is None:
                continue
            we, be = ws + opt.cfg.working_width, bs + opt.cfg.backup_width
            usage = opt.cfg.working_width * len(opt.wlinks) + opt.cfg.backup_width * len(opt.blinks)
            key = (max(top, we, be), we + be, usage, order)
            if best_key is None or key < best_key:
                best, best_key = self.prob.assignment(d, opt, ws, bs), key
        return best


def _waterfill(prob: _Problem) -> dict[str, Fraction] | None:
    """Lowest allowed protection per demand, raised one level at a time on the
    demand whose cheapest backup grows least (in slices) until the SLA holds."""
    levels: dict[str, list[Fraction]] = {}
    width_at: dict[tuple[str, Fraction], int] = {}
    for d in prob.demands:
        by_level: dict[Fraction, int] = {}
        for o in prob.options[d.id]:
            f = o.cfg.service
            by_level[f] = min(by_level.get(f, o.cfg.backup_width), o.cfg.backup_width)
        if not by_level:
            return None
        levels[d.id] = sorted(by_level)
        width_at.update({(d.id, f): w for f, w in by_level.items()})
    choice = {d.id: levels[d.id][0] for d in prob.demands}
    protected = sum((choice[d.id] * d.rate for d in prob.demands), Fraction(0))
    while protected < prob.sla_target:
        best = None
        for rank, d in enumerate(prob.demands):
            lv = levels[d.id]
            i = lv.index(choice[d.id])
            if i + 1 == len(lv):
                continue
            nxt = lv[i + 1]
            cost = width_at[(d.id, nxt)] - width_at[(d.id, choice[d.id])]
            gain = (nxt - choice[d.id]) * d.rate
            key = (cost, -gain, rank)
            if best is None or key < best[0]:
                best = (key, d, nxt)
        if best is None:
            return None
        _, d, nxt = best
        protected += (nxt - choice[d.id]) * d.rate
        choice[d.id] = nxt
    return choice


def _construct(prob: _Problem) -> dict[str, Assignment] | None:
    if prob.instance.mode is Mode.DEMAND_WISE:
        services = _waterfill(prob)
        if services is None:
            return None
    else:
        services = None
    layout = _Layout(prob)
    for d in prob.demands:
        opts = prob.options[d.id]
        if services is not None:
            opts = [o for o in opts if o.cfg.service == services[d.id]]
        a = layout.best_placement(d, opts)
        if a is None:
            return None
        layout.add(a)
    return dict(layout.assigned)


def _local_search(prob: _Problem, start: Mapping[str, Assignment], rng: np.random.Generator | None) -> dict[str, Assignment]:
    """Re-place one demand at a time (any pair, any allowed service that keeps
    the SLA) while the layout key (top end, channels at the top, sum of ends)
    strictly decreases."""
    layout = _Layout(prob)
    for a in start.values():
        layout.add(a)
    current = _layout_key(layout.assigned)
    order = list(prob.demands)
    improved = True
    while improved:
        improved = False
        if rng is not None:
            order = [order[i] for i in rng.permutation(len(order))]
        for d in order:
            old = layout.remove(d.id)
            others = layout.protected()
            opts = [o for o in prob.options[d.id] if others + o.prot >= prob.sla_target]
            cand = layout.best_placement(d, opts)
            if cand is not None:
                layout.add(cand)
                key = _layout_key(layout.assigned)
                if key < current:
                    current = key
                    improved = True
                    continue
                layout.remove(d.id)
            layout.add(old)
    return dict(layout.assigned)


def project_solution(solution: Solution, table: FeasibilityTable) -> Solution | None:
    """Carry a layout over to a less demanding scenario of the same network.

    Each demand keeps its pair and channel starts and takes the largest
    protection level allowed by ``table``'s mode that does not exceed its
    current one. Lower protection never widens a backup channel, so the
    result stays collision-free; returns None if some demand has no such
    level or the SLA of the target scenario fails.
    """
    inst = table.instance
    out = {}
    for d in inst.demands:
        a = solution.assignments.get(d.id)
        if a is None:
            return None
        allowed = [f for f in inst.allowed_services(d) if f <= a.service]
        if not allowed:
            return None
        f = max(allowed)
        cfg = table.configs.get((d.id, a.pair, f))
        if cfg is None or not cfg.feasible or cfg.backup_width > a.backup.width:
            return None
        out[d.id] = replace(a, service=f, backup=Channel(a.backup.start, cfg.backup_width))
    candidate = Solution(out, Status.FEASIBLE)
    if not verify_solution(table, candidate).ok:
        return None
    return candidate


def _dominating_scenarios(inst: PlanningInstance) -> list[PlanningInstance]:
    """Stricter scenarios whose solutions project onto ``inst``.

    FULL is the root. Uniform protection at level s is dominated by uniform
    protection at the next larger level of K (or FULL). Demand-wise at SLA s
    is dominated by uniform at s (when s is in K) and by demand-wise at the
    next larger level of K below 1. Fixed fractions are dominated by FULL.
    """
    mode = inst.mode
    if mode is Mode.FULL:
        return []
    if mode is Mode.FIXED_PER_DEMAND:
        return [inst.with_mode(Mode.FULL)]
    above = [f for f in inst.services if f > inst.sla]
    if mode is Mode.UNIFORM_SLA:
        if above and above[0] < 1:
            return [inst.with_mode(Mode.UNIFORM_SLA, sla=above[0])]
        return [inst.with_mode(Mode.FULL)]
    out = []
    if inst.sla in inst.services and inst.sla > 0:
        out.append(inst.with_mode(Mode.UNIFORM_SLA, sla=inst.sla))
    if above and above[0] < 1:
        out.append(inst.with_mode(Mode.DEMAND_WISE, sla=above[0]))
    return out


def solve_heuristic(table_or_model, seed: int = 0, _memo: dict | None = None) -> Solution:
    """Greedy first-fit construction plus single-demand local search.

    Construction visits demands in canonical order and places each on the
    (pair, service) giving the lowest top slice, channels first-fit. In
    demand-wise mode services are fixed beforehand by water-filling. The
    local search starts from the best of the construction and the projected
    heuristic solutions of the stricter scenarios listed by
    :func:`_dominating_scenarios`, so results never get worse when
    protection requirements are relaxed. ``seed`` != 0 shuffles the local
    search visiting order.
    """
    table = _as_table(table_or_model)
    started = time.perf_counter()
    memo = {} if _memo is None else _memo
    key = (table.instance, seed)
    if key in memo:
        return memo[key]
    prob = _Problem(table)
    if not prob.demands:
        return Solution({}, Status.FEASIBLE, lower_bound=0)
    if table.unservable or any(not prob.options[d.id] for d in prob.demands) or prob.unreachable_sla():
        return Solution({}, Status.INFEASIBLE, hint=prob.diagnose())

    starts = []
    built = _construct(prob)
    if built is not None:
        starts.append(built)
    for stricter in _dominating_scenarios(table.instance):
        sub_table = build_feasibility(stricter, table.pairs)
        sub = solve_heuristic(sub_table, seed, memo)
        if sub.status is Status.INFEASIBLE:
            continue
        projected = project_solution(sub, table)
        if projected is not None:
            starts.append(projected.assignments)
    if not starts:
        hint = f"no layout found within {table.instance.slices} slices by first-fit; the exact solver may still find one"
        sol = Solution({}, Status.INFEASIBLE, hint=hint)
        memo[key] = sol
        return sol
    start = min(starts, key=lambda s: (Solution(s, Status.FEASIBLE).phi, _layout_key(s)))
    rng = np.random.default_rng(seed) if seed else None
    result = _local_search(prob, start, rng)
    sol = Solution(result, Status.FEASIBLE)
    if sol.phi > Solution(start, Status.FEASIBLE).phi:
        sol = Solution(dict(start), Status.FEASIBLE)
    sol = sol.compacted()
    sol.lower_bound = lower_bound(table)
    sol.wall_time = time.perf_counter() - started
    report = verify_solution(table, sol)
    if not report.ok:
        raise AssertionError(f"heuristic produced an invalid layout: {report.summary()}")
    memo[key] = sol
    return sol


# --------------------------------------------------------------------------- verification


@dataclass
class VerificationReport:
    violations: dict[str, list[str]] = field(default_factory=dict)
    phi: int = 0
    link_usage: int = 0

    FAMILIES = (
        "one_service",
        "backup",
        "working",
        "sla",
        "slice_unique",
        "objective",
    )

    @property
    def ok(self) -> bool:
        return not any(self.violations.values())

    def add(self, family: str, message: str):
        self.violations.setdefault(family, []).append(message)

    def passed(self, family: str) -> bool:
        return not self.violations.get(family)

    def summary(self) -> str:
        lines = []
        for fam in self.FAMILIES:
            errs = self.violations.get(fam, [])
            lines.append(f"{fam}: {'pass' if not errs else 'FAIL ' + '; '.join(errs[:5])}")
        return "\n".join(lines)


def verify_solution(table: FeasibilityTable, solution: Solution) -> VerificationReport:
    """Re-check a solution against every constraint family from scratch."""
    inst = table.instance
    report = VerificationReport()
    S = inst.slices
    by_id = {d.id: d for d in inst.demands}

    for d in inst.demands:
        if d.id not in solution.assignments:
            report.add("one_service", f"demand {d.id} unassigned")
    for did in solution.assignments:
        if did not in by_id:
            report.add("one_service", f"unknown demand {did}")

    protected = Fraction(0)
    occupancy: dict[tuple[int, int], list[str]] = {}
    for did, a in solution.assignments.items():
        d = by_id.get(did)
        if d is None:
            continue
        if a.service not in inst.allowed_services(d):
            report.add("one_service", f"{did}: protection {a.service} not allowed in mode {inst.mode.value}")
        pairs = table.pairs.get(did, [])
        if not 0 <= a.pair < len(pairs):
            report.add("backup", f"{did}: pair index {a.pair} out of range")
            continue
        pair = pairs[a.pair]
        cfg = table.configs.get((did, a.pair, a.service))
        if cfg is None or not cfg.feasible:
            report.add("backup", f"{did}: pair {a.pair} infeasible at protection {a.service}")
        else:
            if a.backup.width != cfg.backup_width:
                report.add("backup", f"{did}: backup width {a.backup.width} != {cfg.backup_width}")
            if a.working.width != cfg.working_width:
                report.add("working", f"{did}: working width {a.working.width} != {cfg.working_width}")
        if a.backup.end > S:
            report.add("backup", f"{did}: backup channel beyond slice {S}")
        if a.working.end > S:
            report.add("working", f"{did}: working channel beyond slice {S}")
        if tuple(a.working_links) != tuple(pair.working.links):
            report.add("working", f"{did}: working links differ from pair {a.pair}")
        if tuple(a.backup_links) != tuple(pair.backup.links):
            report.add("backup", f"{did}: backup links differ from pair {a.pair}")
        protected += (1 if inst.literal_sla else a.service) * d.rate
        for links, ch, role in ((pair.working.links, a.working, "w"), (pair.backup.links, a.backup, "b")):
            for e in links:
                for s in ch.slices():
                    occupancy.setdefault((e, s), []).append(f"{did}/{role}")

    if protected < inst.sla * inst.total_rate():
        report.add("sla", f"protected {float(protected):g} Gbps < SLA {float(inst.sla):g} x {float(inst.total_rate()):g}")

    for (e, s), users in sorted(occupancy.items()):
        if len(users) > 1:
            report.add("slice_unique", f"link {e} slice {s}: {', '.join(users)}")

    used = {s for (_, s) in occupancy}
    report.phi = len(used)
    report.link_usage = len(occupancy)
    if solution.assignments and solution.phi != report.phi:
        report.add("objective", f"reported phi {solution.phi} != recomputed {report.phi}")
    return report
