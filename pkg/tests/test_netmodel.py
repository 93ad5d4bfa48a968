from fractions import Fraction

import pytest

from eonplan.netmodel import (
    DEFAULT_FORMATS,
    Demand,
    Mode,
    ParseError,
    PlanningInstance,
    Topology,
    ValidationError,
    as_fraction,
    cost239,
    cost239_text,
    example_demands,
    example_topology,
    format_number,
    fraction_text,
    generate_traffic,
    parse_demands,
    parse_topology,
    serialize_demands,
    serialize_topology,
)

TRIANGLE = """\
# a small ring
node A
node B
node C
link A B 100
link B C 100
link C A 100
"""


def test_triangle_parses():
    topo = parse_topology(TRIANGLE)
    assert topo.nodes == ("A", "B", "C")
    assert len(topo.links) == 3
    assert [l.id for l in topo.links] == [0, 1, 2]
    assert topo.link_between("A", "C").length == 100


def test_self_loop_rejected():
    with pytest.raises(ValidationError, match="self-loop"):
        parse_topology("node A\nnode B\nlink A B 10\nlink A A 50\n")


@pytest.mark.parametrize("text, line", [
    ("node A\nnode B\nlink A B ten\n", 3),
    ("node A\nedge A B 3\n", 2),
    ("node A\nlink A B 3\n", 2),
    ("node\n", 1),
])
def test_parse_errors_carry_line(text, line):
    with pytest.raises(ParseError) as err:
        parse_topology(text)
    assert err.value.line == line


def test_disconnected_and_bad_lengths():
    with pytest.raises(ValidationError, match="not connected"):
        parse_topology("node A\nnode B\nnode C\nlink A B 5\n")
    with pytest.raises(ValidationError, match="non-positive"):
        parse_topology("node A\nnode B\nlink A B 0\n")
    with pytest.raises(ValidationError, match="duplicate link"):
        parse_topology("node A\nnode B\nlink A B 1\nlink B A 2\n")


def test_cost239_shape():
    topo = cost239()
    assert len(topo.nodes) == 11
    assert len(topo.links) == 26
    assert topo.n_arcs == 52
    assert topo.average_degree() == pytest.approx(4.7, abs=0.1)
    assert all(150 <= l.length <= 1100 for l in topo.links)
    assert all(200 <= l.length <= 1000 for l in topo.links)


def test_cost239_round_trip_is_byte_identical():
    text = cost239_text()
    assert serialize_topology(parse_topology(text)) == text


def test_example_fixture_loads():
    topo = example_topology()
    assert set(topo.nodes) >= {"A", "B", "Z"}
    assert [(d.id, d.src, d.dst, d.rate) for d in example_demands()] == [
        ("D1", "A", "Z", 100), ("D2", "B", "Z", 175)]


def test_traffic_generation_cost239():
    topo = cost239()
    first = generate_traffic(topo, 3)
    assert len(first) == 27
    assert first == generate_traffic(topo, 3)
    assert first != generate_traffic(topo, 4)
    assert {d.rate for d in first} <= {100, 125, 150, 175, 200}
    pairs = {frozenset((d.src, d.dst)) for d in first}
    assert len(pairs) == 27
    assert all(d.src in topo.nodes and d.dst in topo.nodes and d.src != d.dst for d in first)


def test_traffic_rates_cover_grid():
    topo = cost239()
    rates = {d.rate for s in range(10) for d in generate_traffic(topo, s)}
    assert rates == {100, 125, 150, 175, 200}


@pytest.mark.parametrize("frac", [0, -0.1, 1.5])
def test_traffic_fraction_bounds(frac):
    with pytest.raises(ValueError):
        generate_traffic(cost239(), 0, pair_fraction=frac)


def test_demand_csv_round_trip():
    demands = [Demand("a", "X", "Y", Fraction(10625, 100)), Demand("b", "Y", "Z", Fraction(100))]
    text = serialize_demands(demands)
    assert "106.25" in text
    assert parse_demands(text) == demands
    with pytest.raises(ParseError):
        parse_demands("a,b,c\n")


def test_format_catalogue():
    assert [f.efficiency for f in DEFAULT_FORMATS] == [2, 4, 6, 8, 10, 12]
    assert [f.slot_capacity for f in DEFAULT_FORMATS] == [
        Fraction(25, 2), 25, Fraction(75, 2), 50, Fraction(125, 2), 75]


def test_numbers_are_exact():
    assert as_fraction(131.25) == Fraction(525, 4)
    assert as_fraction(0.1) == Fraction(1, 10)
    assert format_number(Fraction(425, 4)) == "106.25"
    assert format_number(Fraction(1, 3)).startswith("0.333")
    assert fraction_text(Fraction(17, 28)) == "17/28"
    assert Fraction(fraction_text(Fraction(3, 4))) == Fraction(3, 4)


def _tiny():
    return Topology.from_edges("ABC", [("A", "B", 1), ("B", "C", 1), ("C", "A", 1)])


def test_instance_invariants():
    topo = _tiny()
    dem = (Demand("d", "A", "B", Fraction(100)),)
    with pytest.raises(ValidationError):
        PlanningInstance(topo, dem, sla=Fraction(1, 2), services=(Fraction(1, 4),), mode=Mode.UNIFORM_SLA)
    with pytest.raises(ValidationError):
        PlanningInstance(topo, dem, mode=Mode.FIXED_PER_DEMAND, fixed_fractions={})
    with pytest.raises(ValidationError):
        PlanningInstance(topo, dem, mode=Mode.FIXED_PER_DEMAND, fixed_fractions={"d": Fraction(1, 3)})
    with pytest.raises(ValidationError):
        PlanningInstance(topo, dem, slices=0)
    inst = PlanningInstance(topo, dem, mode=Mode.FIXED_PER_DEMAND, fixed_fractions={"d": Fraction(1, 2)})
    assert inst.allowed_services(dem[0]) == (Fraction(1, 2),)
    assert hash(inst) == hash(PlanningInstance(topo, dem, mode=Mode.FIXED_PER_DEMAND, fixed_fractions={"d": Fraction(1, 2)}))


def test_mode_specialisation():
    topo = _tiny()
    d = Demand("d", "A", "B", Fraction(100))
    base = PlanningInstance(topo, (d,))
    assert base.allowed_services(d) == (1,)
    assert base.with_mode(Mode.UNIFORM_SLA, sla=0.5).allowed_services(d) == (Fraction(1, 2),)
    assert base.with_mode(Mode.DEMAND_WISE, sla=0.5).allowed_services(d) == base.services
