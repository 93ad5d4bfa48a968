"""
Two demands, four ways to protect them
======================================

Walks through the built-in two-demand network. It routes the demands, looks
at the modulation each path can afford, and then solves the spectrum problem
under full, fixed, uniform and demand-wise protection.

Run with ``python demos/worked_example.py``.
"""
from fractions import Fraction

from eonplan.feasibility import build_feasibility, optical_reach
from eonplan.netmodel import FORMATS_BY_NAME, Mode, fraction_text, worked_example
from eonplan.pathing import pairs_for_instance
from eonplan.solver import solve_exact, verify_solution

###############################################################################
# Reach first. Every format has a distance limit that shrinks as the line
# rate grows.

for fmt in (FORMATS_BY_NAME[n] for n in ("PM-64QAM", "PM-16QAM", "PM-8QAM")):
    reach = [optical_reach(fmt.efficiency, r) for r in (100, 106.25, 175)]
    print(f"{fmt.name:9s}" + "".join(f"{km:9.1f}" for km in reach))

###############################################################################
# Route pairs. Each demand gets its four cheapest link-disjoint pairs.

inst = worked_example(Mode.FULL)
pairs = pairs_for_instance(inst)
for did, ranked in pairs.items():
    for i, p in enumerate(ranked):
        print(did, i, "-".join(p.working.nodes), "/", "-".join(p.backup.nodes), p.working.length, p.backup.length)

###############################################################################
# Solve the four scenarios. Demand-wise mode may give one demand less backup
# than another, as long as the surviving traffic still meets the SLA overall.

for mode in (Mode.FULL, Mode.FIXED_PER_DEMAND, Mode.UNIFORM_SLA, Mode.DEMAND_WISE):
    table = build_feasibility(worked_example(mode), pairs)
    sol = solve_exact(table)
    assert verify_solution(table, sol).ok
    picks = ", ".join(f"{d}@{fraction_text(a.service)} pair {a.pair}" for d, a in sorted(sol.assignments.items()))
    print(f"{mode.value:10s} phi={sol.phi} link usage={sol.link_usage}  [{picks}]")

###############################################################################
# With protection levels restricted to quarters, D2 cannot drop to exactly
# the 106.25 Gbps it needs. The demand-wise optimum then falls back to 6 slots.

quarters = (Fraction(1, 4), Fraction(1, 2), Fraction(3, 4), Fraction(1))
coarse = worked_example(Mode.DEMAND_WISE, services=quarters)
print("quarters only:", solve_exact(build_feasibility(coarse, pairs)).phi)
