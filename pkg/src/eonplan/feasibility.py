"""Pre-processing: optical reach, format selection, slot widths and channel sets."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .netmodel import Demand, ModulationFormat, PlanningInstance, as_fraction, format_number
from .pathing import RoutePair

REACH_TOLERANCE_KM = 1e-9


def optical_reach(efficiency: float, bit_rate: float) -> float:
    """Transparent reach in km of a signal with spectral efficiency ``efficiency``
    (bit/s/Hz) at ``bit_rate`` Gbps. Values <= 0 mean unreachable."""
    if efficiency <= 0 or bit_rate <= 0:
        raise ValueError("efficiency and bit rate must be positive")
    return 145.741 + (efficiency - 14.0344) * (60.2196 * math.log(bit_rate) - 465.82)


def select_format(path_length: float, bit_rate, catalog: Sequence[ModulationFormat]) -> ModulationFormat | None:
    """Highest-efficiency format whose reach covers ``path_length`` at ``bit_rate``."""
    if not catalog:
        raise ValueError("empty modulation catalog")
    if path_length <= 0 or bit_rate <= 0:
        raise ValueError("path length and bit rate must be positive")
    rate = float(bit_rate)
    best = None
    for fmt in catalog:
        if optical_reach(fmt.efficiency, rate) + REACH_TOLERANCE_KM >= path_length:
            if best is None or fmt.efficiency > best.efficiency:
                best = fmt
    return best


def slots_needed(bit_rate, fmt: ModulationFormat) -> int:
    rate = as_fraction(bit_rate)
    if rate <= 0:
        raise ValueError("bit rate must be positive")
    return math.ceil(rate / fmt.slot_capacity)


@dataclass(frozen=True, order=True)
class Channel:
    start: int
    width: int

    def __post_init__(self):
        if self.start < 0 or self.width < 1:
            raise ValueError(f"invalid channel {self}")

    @property
    def end(self) -> int:
        return self.start + self.width

    def slices(self) -> range:
        return range(self.start, self.end)

    def covers(self, s: int) -> bool:
        return self.start <= s < self.end

    @property
    def mask(self) -> int:
        return ((1 << self.width) - 1) << self.start


def enumerate_channels(width: int, total_slices: int) -> list[Channel]:
    if width < 1:
        raise ValueError("width must be >= 1")
    return [Channel(s, width) for s in range(max(0, total_slices - width + 1))]


@dataclass(frozen=True)
class ServiceConfig:
    demand_id: str
    pair: int
    service: Fraction
    working_format: ModulationFormat | None
    backup_format: ModulationFormat | None
    working_width: int | None
    backup_width: int | None
    feasible: bool


@dataclass(frozen=True)
class Unservable:
    demand_id: str
    reason: str


class InfeasibleInstanceError(ValueError):
    def __init__(self, unservable: Sequence[Unservable]):
        self.unservable = tuple(unservable)
        names = ", ".join(f"{u.demand_id} ({u.reason})" for u in self.unservable)
        super().__init__(f"unservable demands: {names}")


@dataclass
class FeasibilityTable:
    """Per (demand, pair, service) formats, widths and the feasibility flag."""

    instance: PlanningInstance
    pairs: dict[str, list[RoutePair]]
    configs: dict[tuple[str, int, Fraction], ServiceConfig]
    unservable: list[Unservable] = field(default_factory=list)

    def config(self, demand_id: str, pair: int, service) -> ServiceConfig:
        return self.configs[(demand_id, pair, as_fraction(service))]

    def options(self, demand: Demand) -> list[ServiceConfig]:
        """Feasible configs of ``demand`` under the instance's mode, pair-major order."""
        out = []
        for p in range(len(self.pairs[demand.id])):
            for f in self.instance.allowed_services(demand):
                cfg = self.configs[(demand.id, p, f)]
                if cfg.feasible:
                    out.append(cfg)
        return out

    def working_channels(self, demand_id: str, pair: int) -> list[Channel]:
        widths = {c.working_width for (d, p, _), c in self.configs.items() if d == demand_id and p == pair and c.feasible}
        if not widths:
            return []
        (w,) = widths
        return enumerate_channels(w, self.instance.slices)

    def backup_channels(self, demand_id: str, pair: int, service) -> list[Channel]:
        cfg = self.config(demand_id, pair, service)
        if not cfg.feasible:
            return []
        return enumerate_channels(cfg.backup_width, self.instance.slices)

    def raise_if_unservable(self):
        if self.unservable:
            raise InfeasibleInstanceError(self.unservable)

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["demand", "pair", "service", "beta", "fmt_w", "fmt_b", "width_w", "width_b"])
        for (d, p, f), c in self.configs.items():
            w.writerow([
                d, p, format_number(f), int(c.feasible),
                c.working_format.name if c.working_format else "",
                c.backup_format.name if c.backup_format else "",
                c.working_width if c.working_width is not None else "",
                c.backup_width if c.backup_width is not None else "",
            ])
        return out.getvalue()


def service_config(instance: PlanningInstance, demand: Demand, pair_index: int, pair: RoutePair, fraction) -> ServiceConfig:
    fraction = as_fraction(fraction)
    fmt_w = select_format(pair.working.length, demand.rate, instance.formats)
    backup_rate = fraction * demand.rate
    fmt_b = select_format(pair.backup.length, backup_rate, instance.formats)
    w_w = slots_needed(demand.rate, fmt_w) if fmt_w else None
    w_b = slots_needed(backup_rate, fmt_b) if fmt_b else None
    ok = (
        fmt_w is not None
        and fmt_b is not None
        and w_w <= instance.slices
        and w_b <= instance.slices
    )
    return ServiceConfig(demand.id, pair_index, fraction, fmt_w, fmt_b, w_w, w_b, ok)


def build_feasibility(instance: PlanningInstance, pairs_by_demand: dict[str, list[RoutePair]]) -> FeasibilityTable:
    """Evaluate every (demand, pair, service level) of the instance's mode.

    Demands with no feasible combination are collected in
    ``table.unservable`` rather than dropped.
    """
    configs = {}
    unservable = []
    for d in instance.demands:
        pairs = pairs_by_demand.get(d.id, [])
        if not pairs:
            unservable.append(Unservable(d.id, "no link-disjoint route pair"))
            continue
        any_ok = False
        for p, pair in enumerate(pairs):
            for f in instance.allowed_services(d):
                cfg = service_config(instance, d, p, pair, f)
                configs[(d.id, p, cfg.service)] = cfg
                any_ok |= cfg.feasible
        if not any_ok:
            unservable.append(Unservable(d.id, "no route pair reaches with any allowed protection service"))
    pairs = {d.id: list(pairs_by_demand.get(d.id, [])) for d in instance.demands}
    return FeasibilityTable(instance, pairs, configs, unservable)
