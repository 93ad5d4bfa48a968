"""The binary program over x (working channel), y (backup channel), z
(protection level), r (link-slice occupancy) and theta (slice in use), with
LP / MPS export and matching readers.

Variable names are stable and positional: ``x_d{D}_p{P}_c{C}``,
``y_d{D}_p{P}_c{C}_k{K}``, ``z_d{D}_k{K}``, ``r_e{E}_s{S}``, ``theta_s{S}``,
where D is the demand's position in the instance, P the pair index, C the
first slice of the channel, K the position of the protection level in
``instance.service_levels()``, E the link id and S the slice index.

Row families, one name prefix each:

* ``svc_d{D}``: sum_k z = 1
* ``bkp_d{D}_k{K}``: sum over feasible pairs and backup channels of y - z = 0
* ``wrk_d{D}_p{P}``: sum_c x - sum_k sum_c y = 0
* ``sla``: sum z * f_k * t_d >= SLA * sum t_d  (``literal_sla`` drops f_k),
  multiplied through by the least common denominator of its coefficients
* ``occ_e{E}_s{S}``: x and y covering (E, S) - r = 0
* ``use_s{S}``: sum_e r - |E| theta <= 0

Only (link, slice) cells some channel can touch get an r variable and an
occ row; every other cell is empty in any solution.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Mapping

from .feasibility import Channel, FeasibilityTable
from .netmodel import PlanningInstance, format_number
from .solver import Assignment, Solution, Status


class BuildError(ValueError):
    pass


@dataclass(frozen=True)
class Variable:
    name: str
    kind: str  # x, y, z, r, theta
    index: tuple


@dataclass(frozen=True)
class Row:
    name: str
    coeffs: tuple[tuple[str, Fraction], ...]
    sense: str  # "=", "<=", ">="
    rhs: Fraction

    def satisfied(self, values: Mapping[str, int]) -> bool:
        lhs = sum((c * values.get(v, 0) for v, c in self.coeffs), Fraction(0))
        if self.sense == "=":
            return lhs == self.rhs
        if self.sense == "<=":
            return lhs <= self.rhs
        return lhs >= self.rhs


class Model:
    """All columns are binary; the objective is the sum of the theta columns."""

    def __init__(self, instance: PlanningInstance, feasibility: FeasibilityTable):
        self.instance = instance
        self.feasibility = feasibility
        self.levels = instance.service_levels()
        self.demand_pos = {d.id: i for i, d in enumerate(instance.demands)}
        self.variables: list[Variable] = []
        self._by_name: dict[str, Variable] = {}
        self._register()

    # -- variables

    def _add(self, name, kind, index):
        var = Variable(name, kind, index)
        self.variables.append(var)
        self._by_name[name] = var

    def _register(self):
        inst, table = self.instance, self.feasibility
        S = inst.slices
        touched = set()
        for D, d in enumerate(inst.demands):
            for P, pair in enumerate(table.pairs[d.id]):
                for ch in table.working_channels(d.id, P):
                    self._add(f"x_d{D}_p{P}_c{ch.start}", "x", (d.id, P, ch))
                    touched.update((e, s) for e in pair.working.links for s in ch.slices())
                for f in inst.allowed_services(d):
                    K = self.levels.index(f)
                    for ch in table.backup_channels(d.id, P, f):
                        self._add(f"y_d{D}_p{P}_c{ch.start}_k{K}", "y", (d.id, P, ch, f))
                        touched.update((e, s) for e in pair.backup.links for s in ch.slices())
            for f in inst.allowed_services(d):
                self._add(f"z_d{D}_k{self.levels.index(f)}", "z", (d.id, f))
        for e, s in sorted(touched):
            self._add(f"r_e{e}_s{s}", "r", (e, s))
        for s in range(S):
            self._add(f"theta_s{s}", "theta", (s,))

    def variable(self, name: str) -> Variable:
        return self._by_name[name]

    def names(self, kind: str | None = None) -> list[str]:
        return [v.name for v in self.variables if kind is None or v.kind == kind]

    @property
    def objective(self) -> tuple[tuple[str, Fraction], ...]:
        return tuple((n, Fraction(1)) for n in self.names("theta"))

    # -- rows

    @cached_property
    def rows(self) -> tuple[Row, ...]:
        inst = self.instance
        one = Fraction(1)
        rows: list[Row] = []
        xs: dict[tuple[str, int], list[str]] = {}
        ys: dict[tuple[str, int], list[str]] = {}
        ys_k: dict[tuple[str, Fraction], list[str]] = {}
        zs: dict[str, list[tuple[str, Fraction]]] = {}
        cover: dict[tuple[int, int], list[str]] = {}
        pairs = self.feasibility.pairs
        for v in self.variables:
            if v.kind == "x":
                did, P, ch = v.index
                xs.setdefault((did, P), []).append(v.name)
                for e in pairs[did][P].working.links:
                    for s in ch.slices():
                        cover.setdefault((e, s), []).append(v.name)
            elif v.kind == "y":
                did, P, ch, f = v.index
                ys.setdefault((did, P), []).append(v.name)
                ys_k.setdefault((did, f), []).append(v.name)
                for e in pairs[did][P].backup.links:
                    for s in ch.slices():
                        cover.setdefault((e, s), []).append(v.name)
            elif v.kind == "z":
                did, f = v.index
                zs.setdefault(did, []).append((v.name, f))

        for D, d in enumerate(inst.demands):
            rows.append(Row(f"svc_d{D}", tuple((n, one) for n, _ in zs[d.id]), "=", one))
        for D, d in enumerate(inst.demands):
            for zname, f in zs[d.id]:
                K = self.levels.index(f)
                terms = [(n, one) for n in ys_k.get((d.id, f), [])] + [(zname, -one)]
                rows.append(Row(f"bkp_d{D}_k{K}", tuple(terms), "=", Fraction(0)))
        for D, d in enumerate(inst.demands):
            for P in range(len(pairs[d.id])):
                if (d.id, P) not in xs:
                    continue
                terms = [(n, one) for n in xs[(d.id, P)]] + [(n, -one) for n in ys.get((d.id, P), [])]
                rows.append(Row(f"wrk_d{D}_p{P}", tuple(terms), "=", Fraction(0)))
        sla_terms = []
        for d in inst.demands:
            for zname, f in zs[d.id]:
                sla_terms.append((zname, d.rate if inst.literal_sla else f * d.rate))
        if sla_terms:
            rhs = inst.sla * inst.total_rate()
            # scaled to integers so text formats carry it exactly (17/28 x 100 has no decimal form)
            scale = math.lcm(rhs.denominator, *(c.denominator for _, c in sla_terms))
            rows.append(Row("sla", tuple((n, c * scale) for n, c in sla_terms), ">=", rhs * scale))
        r_by_slice: dict[int, list[str]] = {}
        for (e, s), names in sorted(cover.items()):
            rname = f"r_e{e}_s{s}"
            rows.append(Row(f"occ_e{e}_s{s}", tuple((n, one) for n in names) + ((rname, -one),), "=", Fraction(0)))
            r_by_slice.setdefault(s, []).append(rname)
        n_links = len(inst.topology.links)
        for s in range(inst.slices):
            if s in r_by_slice:
                terms = tuple((n, one) for n in r_by_slice[s]) + ((f"theta_s{s}", Fraction(-n_links)),)
                rows.append(Row(f"use_s{s}", terms, "<=", Fraction(0)))
        return tuple(rows)

    # -- points

    def point(self, solution: Solution) -> dict[str, int]:
        """0/1 column values encoding ``solution``."""
        values = {v.name: 0 for v in self.variables}
        for did, a in solution.assignments.items():
            D = self.demand_pos[did]
            K = self.levels.index(a.service)
            values[f"x_d{D}_p{a.pair}_c{a.working.start}"] = 1
            values[f"y_d{D}_p{a.pair}_c{a.backup.start}_k{K}"] = 1
            values[f"z_d{D}_k{K}"] = 1
        for e, slices in solution.usage().items():
            for s in slices:
                values[f"r_e{e}_s{s}"] = 1
        for s in range(self.instance.slices):
            if solution.theta(self.instance.slices)[s]:
                values[f"theta_s{s}"] = 1
        return values

    def violated(self, values: Mapping[str, int]) -> list[str]:
        bad = [n for n, v in values.items() if v not in (0, 1)]
        bad += [r.name for r in self.rows if not r.satisfied(values)]
        return bad

    def decode(self, values: Mapping[str, float], status: Status = Status.OPTIMAL) -> Solution:
        """Solution from (possibly float) column values of a solved model."""
        inst = self.instance
        pairs = self.feasibility.pairs
        chosen_x, chosen_y = {}, {}
        for v in self.variables:
            if round(values.get(v.name, 0)) != 1:
                continue
            if v.kind == "x":
                did, P, ch = v.index
                chosen_x[did] = (P, ch)
            elif v.kind == "y":
                did, P, ch, f = v.index
                chosen_y[did] = (P, ch, f)
        out = {}
        for d in inst.demands:
            if d.id not in chosen_x or d.id not in chosen_y:
                raise ValueError(f"column values leave demand {d.id} unassigned")
            P, wch = chosen_x[d.id]
            _, bch, f = chosen_y[d.id]
            pair = pairs[d.id][P]
            out[d.id] = Assignment(d.id, P, f, wch, bch, pair.working.links, pair.backup.links)
        return Solution(out, status)


def build_model(instance: PlanningInstance, feasibility: FeasibilityTable) -> Model:
    if feasibility.instance != instance:
        raise BuildError("feasibility table was computed for a different instance/scenario")
    feasibility.raise_if_unservable()
    missing = [d.id for d in instance.demands if d.id not in feasibility.pairs]
    if missing:
        raise BuildError(f"no route pairs for demands {missing}")
    return Model(instance, feasibility)


# --------------------------------------------------------------------------- LP format


def _fmt(c: Fraction) -> str:
    return format_number(c)


def _terms(coeffs: Iterable[tuple[str, Fraction]]) -> list[str]:
    out = []
    for i, (name, c) in enumerate(coeffs):
        sign = "-" if c < 0 else "+"
        mag = abs(c)
        body = name if mag == 1 else f"{_fmt(mag)} {name}"
        out.append(f"{sign} {body}" if (i or sign == "-") else body)
    return out


def _wrap(head: str, parts: list[str], width: int = 78) -> list[str]:
    lines, cur = [], head
    for p in parts:
        if len(cur) + 1 + len(p) > width and cur.strip():
            lines.append(cur)
            cur = "   " + p
        else:
            cur = f"{cur} {p}" if cur else p
    lines.append(cur)
    return lines


def lp_text(model: Model) -> str:
    lines = ["\\ routing, modulation, spectrum and protection assignment", "Minimize"]
    obj = _terms(model.objective) or ["0 theta_s0"]
    lines += _wrap(" phi:", obj)
    lines.append("Subject To")
    for row in model.rows:
        parts = _terms(row.coeffs) + [row.sense, _fmt(row.rhs)]
        lines += _wrap(f" {row.name}:", parts)
    lines.append("Binary")
    names = model.names()
    for i in range(0, len(names), 6):
        lines.append(" " + " ".join(names[i:i + 6]))
    lines.append("End")
    return "\n".join(lines) + "\n"


def export_lp(model: Model, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(lp_text(model))


@dataclass
class ParsedModel:
    objective: tuple[tuple[str, Fraction], ...]
    rows: tuple[Row, ...]
    binaries: tuple[str, ...]


_TERM = re.compile(r"([+-])?\s*([0-9]*\.?[0-9]+(?:[eE][+-]?[0-9]+)?)?\s*([A-Za-z_][A-Za-z0-9_]*)")


def _parse_expr(text: str) -> tuple[tuple[str, Fraction], ...]:
    terms = []
    pos = 0
    text = text.strip()
    while pos < len(text):
        m = _TERM.match(text, pos)
        if not m or m.end() == pos:
            raise ValueError(f"cannot parse expression near {text[pos:pos + 20]!r}")
        sign, coef, name = m.groups()
        c = Fraction(coef) if coef else Fraction(1)
        if sign == "-":
            c = -c
        terms.append((name, c))
        pos = m.end()
        while pos < len(text) and text[pos] == " ":
            pos += 1
    return tuple(terms)


def read_lp(text: str) -> ParsedModel:
    """Read the subset of CPLEX LP written by :func:`lp_text`."""
    section = None
    objective: tuple = ()
    rows: list[Row] = []
    binaries: list[str] = []
    buf = ""

    def flush():
        nonlocal buf, objective
        if not buf.strip():
            buf = ""
            return
        name, _, body = buf.partition(":")
        name = name.strip()
        if section == "min":
            objective = tuple(t for t in _parse_expr(body) if t[1] != 0)
        else:
            m = re.search(r"(<=|>=|=)\s*(\S+)\s*$", body)
            if not m:
                raise ValueError(f"row {name} has no sense")
            rows.append(Row(name, _parse_expr(body[: m.start()]), m.group(1), Fraction(m.group(2))))
        buf = ""

    for raw in text.splitlines():
        line = raw.split("\\", 1)[0].rstrip()
        key = line.strip().lower()
        if key in ("minimize", "subject to", "binary", "end"):
            flush()
            section = {"minimize": "min", "subject to": "st", "binary": "bin", "end": None}[key]
            continue
        if not line.strip():
            continue
        if section == "bin":
            binaries += line.split()
        elif section in ("min", "st"):
            if re.match(r"^\s*[A-Za-z_][A-Za-z0-9_]*\s*:", line) and buf:
                flush()
            buf += " " + line.strip()
    flush()
    return ParsedModel(objective, tuple(rows), tuple(binaries))


# --------------------------------------------------------------------------- MPS format

_SENSE_TO_MPS = {"=": "E", "<=": "L", ">=": "G"}
_MPS_TO_SENSE = {v: k for k, v in _SENSE_TO_MPS.items()}


def mps_text(model: Model) -> str:
    """MPS with fixed-format section layout. Names exceed 8 characters, so
    readers must accept free-format fields (HiGHS, CPLEX, Gurobi, GLPK do)."""
    out = ["NAME          EONPLAN", "ROWS", " N  phi"]
    for row in model.rows:
        out.append(f" {_SENSE_TO_MPS[row.sense]}  {row.name}")
    column_entries: dict[str, list[tuple[str, Fraction]]] = {n: [] for n in model.names()}
    for name, c in model.objective:
        column_entries[name].append(("phi", c))
    for row in model.rows:
        for name, c in row.coeffs:
            column_entries[name].append((row.name, c))
    out.append("COLUMNS")
    for name in model.names():
        for rname, c in column_entries[name]:
            out.append(f"    {name:<24s}  {rname:<24s}  {_fmt(c)}")
    out.append("RHS")
    for row in model.rows:
        if row.rhs != 0:
            out.append(f"    {'RHS':<24s}  {row.name:<24s}  {_fmt(row.rhs)}")
    out.append("BOUNDS")
    for name in model.names():
        out.append(f" BV BND       {name}")
    out.append("ENDATA")
    return "\n".join(out) + "\n"


def export_mps(model: Model, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(mps_text(model))


def read_mps(text: str) -> ParsedModel:
    section = None
    senses: dict[str, str] = {}
    order: list[str] = []
    objective_row = None
    coeffs: dict[str, list[tuple[str, Fraction]]] = {}
    rhs: dict[str, Fraction] = {}
    binaries: list[str] = []
    for line in text.splitlines():
        if not line.strip():
            continue
        if not line.startswith(" "):
            section = line.split()[0]
            continue
        f = line.split()
        if section == "ROWS":
            if f[0] == "N":
                objective_row = f[1]
            else:
                senses[f[1]] = _MPS_TO_SENSE[f[0]]
                order.append(f[1])
        elif section == "COLUMNS":
            for rname, val in zip(f[1::2], f[2::2]):
                coeffs.setdefault(rname, []).append((f[0], Fraction(val)))
        elif section == "RHS":
            for rname, val in zip(f[1::2], f[2::2]):
                rhs[rname] = Fraction(val)
        elif section == "BOUNDS" and f[0] == "BV":
            binaries.append(f[2])
    objective = tuple(coeffs.get(objective_row, []))
    rows = tuple(Row(n, tuple(coeffs.get(n, [])), senses[n], rhs.get(n, Fraction(0))) for n in order)
    return ParsedModel(objective, rows, tuple(binaries))
