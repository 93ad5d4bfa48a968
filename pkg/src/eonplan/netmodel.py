"""Network model: topology, demands, modulation catalog and planning instances.

Rates and protection fractions are held as :class:`fractions.Fraction` so that
slot arithmetic (``ceil(rate / capacity)``) is exact; 131.25 Gbps over a
37.5 Gbps/slot format is 3.5 slots and rounds to 4, never 5.
"""
from __future__ import annotations

import csv
import enum
import io
import itertools
from collections import deque
from dataclasses import dataclass, replace
from fractions import Fraction
from importlib import resources
from typing import Iterable, Mapping, Sequence

import numpy as np

SLICE_GHZ = Fraction(25, 4)  # 6.25 GHz


class ParseError(ValueError):
    """Malformed input text; carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(ValueError):
    pass


def as_fraction(value) -> Fraction:
    """Exact rational from int, str, Fraction or float (floats via their shortest repr)."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        return Fraction(repr(value))
    return Fraction(value)


def format_number(value) -> str:
    """Shortest decimal text for a length, rate or fraction."""
    if isinstance(value, Fraction):
        if value.denominator == 1:
            return str(value.numerator)
        d = value.denominator
        while d % 2 == 0:
            d //= 2
        while d % 5 == 0:
            d //= 5
        if d == 1:
            # terminating decimal; print it exactly
            digits = 0
            while (value * 10**digits).denominator != 1:
                digits += 1
            return f"{float(value):.{digits}f}" if digits <= 15 else repr(float(value))
        return repr(float(value))
    value = float(value)
    if value.is_integer():
        return str(int(value))
    return repr(value)


def fraction_text(value: Fraction) -> str:
    """Decimal when it terminates, else ``p/q``; always parses back exactly."""
    value = as_fraction(value)
    text = format_number(value)
    return text if Fraction(text) == value else f"{value.numerator}/{value.denominator}"


# --------------------------------------------------------------------------- topology


@dataclass(frozen=True)
class Link:
    a: str
    b: str
    length: float
    id: int

    def other(self, node: str) -> str:
        return self.b if node == self.a else self.a


@dataclass(frozen=True)
class Topology:
    """Undirected fiber plant. Each link carries one shared spectrum grid."""

    nodes: tuple[str, ...]
    links: tuple[Link, ...]

    def __post_init__(self):
        validate_topology(self)

    @classmethod
    def from_edges(cls, nodes: Iterable[str], edges: Iterable[tuple[str, str, float]]) -> "Topology":
        links = tuple(Link(a, b, float(length), i) for i, (a, b, length) in enumerate(edges))
        return cls(tuple(nodes), links)

    @property
    def n_arcs(self) -> int:
        return 2 * len(self.links)

    def degree(self, node: str) -> int:
        return sum(1 for link in self.links if node in (link.a, link.b))

    def average_degree(self) -> float:
        return 2 * len(self.links) / len(self.nodes)

    def adjacency(self) -> dict[str, list[tuple[str, Link]]]:
        adj: dict[str, list[tuple[str, Link]]] = {n: [] for n in self.nodes}
        for link in self.links:
            adj[link.a].append((link.b, link))
            adj[link.b].append((link.a, link))
        return adj

    def link_between(self, u: str, v: str) -> Link:
        for link in self.links:
            if {link.a, link.b} == {u, v}:
                return link
        raise KeyError((u, v))


def validate_topology(topo: Topology) -> None:
    if len(set(topo.nodes)) != len(topo.nodes):
        raise ValidationError("duplicate node names")
    known = set(topo.nodes)
    seen = set()
    for link in topo.links:
        if link.a not in known or link.b not in known:
            raise ValidationError(f"link {link.a}-{link.b} references an unknown node")
        if link.a == link.b:
            raise ValidationError(f"self-loop on node {link.a}")
        if not link.length > 0:
            raise ValidationError(f"link {link.a}-{link.b} has non-positive length {link.length}")
        key = frozenset((link.a, link.b))
        if key in seen:
            raise ValidationError(f"duplicate link {link.a}-{link.b}")
        seen.add(key)
    if [link.id for link in topo.links] != list(range(len(topo.links))):
        raise ValidationError("link ids must be 0..|E|-1 in order")
    if topo.nodes and not _connected(topo):
        raise ValidationError("topology is not connected")


def _connected(topo: Topology) -> bool:
    adj = topo.adjacency()
    start = topo.nodes[0]
    reached = {start}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v, _ in adj[u]:
            if v not in reached:
                reached.add(v)
                queue.append(v)
    return len(reached) == len(topo.nodes)


def parse_topology(text: str) -> Topology:
    """Parse the line-oriented ``node``/``link`` format.

    ``#`` starts a comment. Links must reference declared nodes; they get ids in
    file order.
    """
    nodes: list[str] = []
    edges: list[tuple[str, str, float]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "node":
            if len(parts) != 2:
                raise ParseError("expected 'node <name>'", lineno)
            nodes.append(parts[1])
        elif parts[0] == "link":
            if len(parts) != 4:
                raise ParseError("expected 'link <a> <b> <length_km>'", lineno)
            try:
                length = float(parts[3])
            except ValueError:
                raise ParseError(f"bad length {parts[3]!r}", lineno) from None
            if parts[1] not in nodes or parts[2] not in nodes:
                raise ParseError(f"link {parts[1]}-{parts[2]} before its nodes are declared", lineno)
            edges.append((parts[1], parts[2], length))
        else:
            raise ParseError(f"unknown record {parts[0]!r}", lineno)
    return Topology.from_edges(nodes, edges)


def serialize_topology(topo: Topology) -> str:
    lines = [f"node {n}" for n in topo.nodes]
    lines += [f"link {l.a} {l.b} {format_number(l.length)}" for l in topo.links]
    return "\n".join(lines) + "\n"


def load_topology(path) -> Topology:
    with open(path, encoding="utf-8") as fh:
        return parse_topology(fh.read())


def _resource_text(name: str) -> str:
    return resources.files("eonplan.data").joinpath(name).read_text(encoding="utf-8")


def cost239() -> Topology:
    """The 11-node, 26-link (52 arc) pan-European COST239 reference network."""
    return parse_topology(_resource_text("cost239.topo"))


def cost239_text() -> str:
    return _resource_text("cost239.topo")


def example_topology() -> Topology:
    """Nine-node network carrying the two-demand worked example (see docs/worked_example.md)."""
    return parse_topology(_resource_text("example.topo"))


def example_demands() -> list[Demand]:
    return parse_demands(_resource_text("example_demands.csv"))


# --------------------------------------------------------------------------- demands


@dataclass(frozen=True)
class Demand:
    id: str
    src: str
    dst: str
    rate: Fraction  # Gbps

    def __post_init__(self):
        object.__setattr__(self, "rate", as_fraction(self.rate))
        if self.src == self.dst:
            raise ValidationError(f"demand {self.id}: source equals destination")
        if self.rate <= 0:
            raise ValidationError(f"demand {self.id}: rate must be positive")


def parse_demands(text: str) -> list[Demand]:
    reader = csv.reader(io.StringIO(text))
    rows = [r for r in reader if r and not r[0].startswith("#")]
    if not rows or [c.strip() for c in rows[0]] != ["id", "src", "dst", "rate_gbps"]:
        raise ParseError("demand file must start with header id,src,dst,rate_gbps", 1)
    demands = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 4:
            raise ParseError("expected 4 columns", lineno)
        try:
            rate = Fraction(row[3].strip())
        except ValueError:
            raise ParseError(f"bad rate {row[3]!r}", lineno) from None
        demands.append(Demand(row[0].strip(), row[1].strip(), row[2].strip(), rate))
    return demands


def serialize_demands(demands: Iterable[Demand]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["id", "src", "dst", "rate_gbps"])
    for d in demands:
        writer.writerow([d.id, d.src, d.dst, format_number(d.rate)])
    return out.getvalue()


def load_demands(path) -> list[Demand]:
    with open(path, encoding="utf-8") as fh:
        return parse_demands(fh.read())


def generate_traffic(
    topology: Topology,
    seed: int,
    pair_fraction: float = 0.5,
    rate_min=100,
    rate_max=200,
    rate_step=25,
) -> list[Demand]:
    """Random demand set over unordered node pairs.

    Uses numpy's PCG64 generator seeded with ``seed``. Node pairs are listed
    as ``(u, v)`` with ``u`` before ``v`` in topology order, a sample of
    ``floor(pair_fraction * #pairs)`` of them is drawn without replacement via
    ``Generator.choice``, and each gets a rate drawn uniformly from the grid
    ``rate_min, rate_min + rate_step, ..., rate_max`` via ``Generator.integers``.
    Demands come back sorted by pair position and are named ``d0, d1, ...``.
    """
    if not 0 < pair_fraction <= 1:
        raise ValueError("pair_fraction must lie in (0, 1]")
    lo, hi, step = as_fraction(rate_min), as_fraction(rate_max), as_fraction(rate_step)
    if step <= 0 or hi < lo or lo <= 0:
        raise ValueError("empty rate grid")
    grid = []
    r = lo
    while r <= hi:
        grid.append(r)
        r += step
    pairs = list(itertools.combinations(topology.nodes, 2))
    count = int(Fraction(repr(float(pair_fraction))) * len(pairs))
    rng = np.random.Generator(np.random.PCG64(seed))
    chosen = np.sort(rng.choice(len(pairs), size=count, replace=False))
    rate_idx = rng.integers(0, len(grid), size=count)
    return [
        Demand(f"d{i}", pairs[p][0], pairs[p][1], grid[int(j)])
        for i, (p, j) in enumerate(zip(chosen, rate_idx))
    ]


# --------------------------------------------------------------------------- formats & services


@dataclass(frozen=True)
class ModulationFormat:
    name: str
    efficiency: int  # bit/s/Hz

    @property
    def slot_capacity(self) -> Fraction:
        """Gbps carried by one 6.25 GHz slice."""
        return self.efficiency * SLICE_GHZ


DEFAULT_FORMATS: tuple[ModulationFormat, ...] = (
    ModulationFormat("PM-BPSK", 2),
    ModulationFormat("PM-QPSK", 4),
    ModulationFormat("PM-8QAM", 6),
    ModulationFormat("PM-16QAM", 8),
    ModulationFormat("PM-32QAM", 10),
    ModulationFormat("PM-64QAM", 12),
)

FORMATS_BY_NAME = {f.name: f for f in DEFAULT_FORMATS}


class Mode(enum.Enum):
    FULL = "full"
    FIXED_PER_DEMAND = "fixed"
    UNIFORM_SLA = "uniform"
    DEMAND_WISE = "demandwise"


@dataclass(frozen=True)
class PlanningInstance:
    """A complete planning problem.

    ``services`` is the protection-service set K (fractions, strictly
    increasing). ``mode`` decides which of them a demand may take:

    * FULL: 1.0 only
    * FIXED_PER_DEMAND: the fraction given in ``fixed_fractions``
    * UNIFORM_SLA: the SLA value only
    * DEMAND_WISE: any of K, subject to the network-wide SLA
    """

    topology: Topology
    demands: tuple[Demand, ...]
    slices: int = 320
    services: tuple[Fraction, ...] = (Fraction(1, 4), Fraction(1, 2), Fraction(3, 4), Fraction(1))
    sla: Fraction = Fraction(0)
    mode: Mode = Mode.FULL
    fixed_fractions: Mapping[str, Fraction] | None = None
    k_pairs: int = 4
    formats: tuple[ModulationFormat, ...] = DEFAULT_FORMATS
    literal_sla: bool = False  # unweighted SLA row (sum z*t); kept for auditing only

    def __post_init__(self):
        object.__setattr__(self, "demands", tuple(self.demands))
        object.__setattr__(self, "services", tuple(as_fraction(f) for f in self.services))
        object.__setattr__(self, "sla", as_fraction(self.sla))
        if self.fixed_fractions is not None:
            fixed = tuple(sorted((k, as_fraction(v)) for k, v in dict(self.fixed_fractions).items()))
            object.__setattr__(self, "fixed_fractions", _FrozenMap(fixed))
        self._validate()

    def _validate(self):
        if self.slices < 1:
            raise ValidationError("slice count must be >= 1")
        if self.k_pairs < 1:
            raise ValidationError("k_pairs must be >= 1")
        if not self.services:
            raise ValidationError("protection service set is empty")
        if any(not 0 < f <= 1 for f in self.services):
            raise ValidationError("protection fractions must lie in (0, 1]")
        if any(a >= b for a, b in zip(self.services, self.services[1:])):
            raise ValidationError("protection fractions must be strictly increasing")
        if not 0 <= self.sla <= 1:
            raise ValidationError("SLA must lie in [0, 1]")
        if self.sla > max(self.services):
            raise ValidationError("SLA exceeds the largest protection fraction")
        if self.mode is Mode.UNIFORM_SLA and self.sla <= 0:
            raise ValidationError("uniform mode needs a positive SLA")
        if list(self.formats) != sorted(self.formats, key=lambda f: f.efficiency):
            raise ValidationError("modulation catalog must be sorted by efficiency")
        ids = [d.id for d in self.demands]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate demand ids")
        nodes = set(self.topology.nodes)
        for d in self.demands:
            if d.src not in nodes or d.dst not in nodes:
                raise ValidationError(f"demand {d.id} references an unknown node")
        if self.mode is Mode.FIXED_PER_DEMAND:
            fixed = self.fixed_fractions or {}
            for d in self.demands:
                if d.id not in fixed:
                    raise ValidationError(f"fixed mode: demand {d.id} has no assigned fraction")
                if fixed[d.id] not in self.services:
                    raise ValidationError(f"fixed mode: fraction {fixed[d.id]} of {d.id} is not in K")

    def allowed_services(self, demand: Demand) -> tuple[Fraction, ...]:
        if self.mode is Mode.FULL:
            return (Fraction(1),)
        if self.mode is Mode.UNIFORM_SLA:
            return (self.sla,)
        if self.mode is Mode.FIXED_PER_DEMAND:
            return (self.fixed_fractions[demand.id],)
        return self.services

    def service_levels(self) -> tuple[Fraction, ...]:
        """Every fraction some demand may use under this mode, ascending."""
        levels = set()
        for d in self.demands:
            levels.update(self.allowed_services(d))
        return tuple(sorted(levels))

    def total_rate(self) -> Fraction:
        return sum((d.rate for d in self.demands), Fraction(0))

    def with_mode(self, mode: Mode, sla=None, fixed_fractions=None) -> "PlanningInstance":
        return replace(
            self,
            mode=mode,
            sla=self.sla if sla is None else as_fraction(sla),
            fixed_fractions=fixed_fractions if fixed_fractions is not None else self.fixed_fractions,
        )


class _FrozenMap(Mapping):
    """Hashable read-only mapping, so instances stay hashable."""

    def __init__(self, items: Sequence[tuple[str, Fraction]]):
        self._items = tuple(items)
        self._dict = dict(self._items)

    def __getitem__(self, key):
        return self._dict[key]

    def __iter__(self):
        return iter(self._dict)

    def __len__(self):
        return len(self._dict)

    def __hash__(self):
        return hash(self._items)

    def __eq__(self, other):
        return isinstance(other, Mapping) and dict(self) == dict(other)

    def __repr__(self):
        return f"{dict(self._dict)!r}"


# protection levels of the worked example: the usual quarters plus 17/28,
# which protects 106.25 of demand D2's 175 Gbps
EXAMPLE_SERVICES = (Fraction(1, 4), Fraction(1, 2), Fraction(17, 28), Fraction(3, 4), Fraction(1))
EXAMPLE_FIXED = {"D1": Fraction(1, 2), "D2": Fraction(3, 4)}
EXAMPLE_SLA = Fraction(3, 4)


def worked_example(mode: Mode = Mode.FULL, slices: int = 320, services=EXAMPLE_SERVICES) -> PlanningInstance:
    """The two-demand example under one scenario: FIXED uses D1 at 1/2 and
    D2 at 3/4; UNIFORM and DEMAND_WISE use an SLA of 3/4."""
    sla = EXAMPLE_SLA if mode in (Mode.UNIFORM_SLA, Mode.DEMAND_WISE) else Fraction(0)
    fixed = EXAMPLE_FIXED if mode is Mode.FIXED_PER_DEMAND else None
    return PlanningInstance(
        example_topology(), tuple(example_demands()), slices=slices, services=services,
        sla=sla, mode=mode, fixed_fractions=fixed,
    )
