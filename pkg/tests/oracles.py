"""Independent brute-force references used by the test-suite."""
from __future__ import annotations

import itertools
from fractions import Fraction

import networkx as nx


def brute_force_pair_totals(topology, src, dst):
    """Sorted totals of every unordered pair of link-disjoint simple paths."""
    g = nx.Graph()
    for link in topology.links:
        g.add_edge(link.a, link.b, length=link.length)
    paths = []
    for nodes in nx.all_simple_paths(g, src, dst):
        edges = frozenset(frozenset(e) for e in zip(nodes, nodes[1:]))
        length = sum(g[u][v]["length"] for u, v in zip(nodes, nodes[1:]))
        paths.append((length, edges))
    return sorted(a[0] + b[0] for a, b in itertools.combinations(paths, 2) if not a[1] & b[1])


def all_tuples(table):
    """Every combination of one (pair, protection, working start, backup start)
    per demand, collisions and SLA included, as {demand: tuple}."""
    inst = table.instance
    S = inst.slices
    per_demand = []
    for d in inst.demands:
        choices = []
        for p in range(len(table.pairs[d.id])):
            for f in inst.allowed_services(d):
                cfg = table.configs[(d.id, p, f)]
                if not cfg.feasible:
                    continue
                for ws in range(S - cfg.working_width + 1):
                    for bs in range(S - cfg.backup_width + 1):
                        choices.append((p, f, ws, cfg.working_width, bs, cfg.backup_width))
        per_demand.append((d.id, choices))
    for combo in itertools.product(*(c for _, c in per_demand)):
        yield {did: c for (did, _), c in zip(per_demand, combo)}


def direct_check(table, tuples):
    """Conflict-free and SLA-respecting, by plain set arithmetic."""
    inst = table.instance
    cells = set()
    protected = Fraction(0)
    rates = {d.id: d.rate for d in inst.demands}
    for did, (p, f, ws, ww, bs, bw) in tuples.items():
        pair = table.pairs[did][p]
        for links, start, width in ((pair.working.links, ws, ww), (pair.backup.links, bs, bw)):
            for e in links:
                for s in range(start, start + width):
                    if (e, s) in cells:
                        return False
                    cells.add((e, s))
        protected += f * rates[did]
    return protected >= inst.sla * inst.total_rate()


def naive_beta(instance, pairs, demand, p, fraction):
    """Feasibility flag re-derived straight from the reach formula and the format catalogue capacities."""
    import math
    best_w = best_b = None
    for name, n in (("PM-BPSK", 2), ("PM-QPSK", 4), ("PM-8QAM", 6), ("PM-16QAM", 8), ("PM-32QAM", 10), ("PM-64QAM", 12)):
        reach_w = 145.741 + (n - 14.0344) * (60.2196 * math.log(float(demand.rate)) - 465.82)
        reach_b = 145.741 + (n - 14.0344) * (60.2196 * math.log(float(fraction * demand.rate)) - 465.82)
        if reach_w + 1e-9 >= pairs[p].working.length:
            best_w = n
        if reach_b + 1e-9 >= pairs[p].backup.length:
            best_b = n
    if best_w is None or best_b is None:
        return False
    width_w = -(-demand.rate // (Fraction(25, 4) * best_w))
    width_b = -(-(fraction * demand.rate) // (Fraction(25, 4) * best_b))
    return width_w <= instance.slices and width_b <= instance.slices


def random_two_connected(rng, n_min=4, n_max=6, lengths=(80, 150, 250, 400, 600), p_edge=0.5):
    from eonplan.netmodel import Topology
    while True:
        n = rng.randint(n_min, n_max)
        nodes = [f"n{i}" for i in range(n)]
        edges = [(a, b, rng.choice(lengths)) for a, b in itertools.combinations(nodes, 2) if rng.random() < p_edge]
        g = nx.Graph()
        g.add_nodes_from(nodes)
        g.add_edges_from((a, b) for a, b, _ in edges)
        if nx.is_connected(g) and nx.edge_connectivity(g) >= 2:
            return Topology.from_edges(nodes, edges)


def random_connected(rng, n, p_edge=0.4, lo=1, hi=100):
    """Connected graph on n nodes with random integer lengths."""
    from eonplan.netmodel import Topology
    while True:
        nodes = [f"v{i}" for i in range(n)]
        edges = [(a, b, rng.randint(lo, hi)) for a, b in itertools.combinations(nodes, 2) if rng.random() < p_edge]
        g = nx.Graph()
        g.add_nodes_from(nodes)
        g.add_edges_from((a, b) for a, b, _ in edges)
        if nx.is_connected(g):
            return Topology.from_edges(nodes, edges)


def random_small_instance(rng, max_demands=3, max_slices=10, k_pairs=2):
    """<= 3 demands, <= 2 pairs, <= 2 protection levels, |S| <= 10, random mode."""
    from eonplan.netmodel import Demand, Mode, PlanningInstance
    topo = random_two_connected(rng)
    nodes = list(topo.nodes)
    demands = [
        Demand(f"d{i}", *rng.sample(nodes, 2), Fraction(rng.choice([100, 125, 150, 175, 200])))
        for i in range(rng.randint(1, max_demands))
    ]
    services = tuple(sorted(rng.sample([Fraction(1, 4), Fraction(1, 2), Fraction(3, 4), Fraction(1)], 2)))
    mode = rng.choice(list(Mode))
    sla = rng.choice(services) if mode in (Mode.UNIFORM_SLA, Mode.DEMAND_WISE) else Fraction(0)
    fixed = {d.id: rng.choice(services) for d in demands} if mode is Mode.FIXED_PER_DEMAND else None
    return PlanningInstance(
        topo, tuple(demands), slices=rng.randint(5, max_slices), services=services,
        sla=sla, mode=mode, fixed_fractions=fixed, k_pairs=k_pairs,
    )


def brute_force_optimum(table):
    """Minimum used-slice count over all assignment tuples.

    Each candidate (pair, protection, working start, backup start) becomes a
    bitmask over (link, slice) cells plus a bitmask over slices. Depth-first
    over demands; a branch is cut on a cell collision or once its slice mask
    is no smaller than the best complete tuple (the mask only grows).
    Returns None if nothing fits.
    """
    inst = table.instance
    S = inst.slices
    per_demand = []
    for d in inst.demands:
        choices = []
        for p, pair in enumerate(table.pairs[d.id]):
            for f in inst.allowed_services(d):
                cfg = table.configs[(d.id, p, f)]
                if not cfg.feasible:
                    continue
                for ws in range(S - cfg.working_width + 1):
                    for bs in range(S - cfg.backup_width + 1):
                        cells = 0
                        slices = 0
                        for links, start, width in ((pair.working.links, ws, cfg.working_width),
                                                    (pair.backup.links, bs, cfg.backup_width)):
                            for s in range(start, start + width):
                                slices |= 1 << s
                                for e in links:
                                    cells |= 1 << (e * S + s)
                        choices.append((cells, slices, f * d.rate))
        choices.sort(key=lambda c: (c[1].bit_length(), bin(c[1]).count("1")))
        per_demand.append(choices)
    target = inst.sla * inst.total_rate()
    best_prot = [max((c[2] for c in ch), default=Fraction(-1)) for ch in per_demand]
    best = [None]

    def go(i, cells, used, protected):
        if best[0] is not None and bin(used).count("1") >= best[0]:
            return
        if i == len(per_demand):
            if protected >= target:
                best[0] = bin(used).count("1")
            return
        if protected + sum(best_prot[i:]) < target:
            return
        for c, sl, prot in per_demand[i]:
            if cells & c:
                continue
            go(i + 1, cells | c, used | sl, protected + prot)

    go(0, 0, 0, Fraction(0))
    return best[0]
