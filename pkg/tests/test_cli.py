import csv
import io
from fractions import Fraction

import pytest

from eonplan import cli, milp
from eonplan.cli import RunConfig, RunMetrics, compare_report, main, read_assignments, run_scenario
from eonplan.netmodel import Mode, ValidationError, cost239_text
from eonplan.solver import Status


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


@pytest.mark.parametrize("args, phi, usage", [
    (["--mode", "full"], "7", "31"),
    (["--mode", "fixed"], "5", "25"),
    (["--mode", "uniform", "--sla", "0.75"], "6", "28"),
    (["--mode", "demandwise", "--sla", "0.75"], "4", "31"),
])
def test_plan_example(capsys, args, phi, usage):
    assert main(["plan", "--example", *args]) == 0
    (row,) = rows(capsys.readouterr().out)
    assert (row["phi"], row["link_usage"], row["status"]) == (phi, usage, "OPTIMAL")
    assert row["wall_s"] == ""


def test_plan_writes_files_and_verify_reads_them(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["plan", "--example", "--mode", "demandwise", "--out", str(out)]) == 0
    metrics = (out / "metrics.csv").read_text()
    assert metrics.splitlines()[0] == ",".join(cli.METRICS_HEADER)
    assigned = rows((out / "assignments.csv").read_text())
    assert [r["demand"] for r in assigned] == ["D1", "D2"]
    assert assigned[1]["service_fraction"] == "17/28"
    capsys.readouterr()
    args = ["verify", "--example", "--mode", "demandwise", "--solution", str(out / "assignments.csv")]
    assert main(args) == 0
    assert "phi=4 link_usage=31" in capsys.readouterr().out



def test_verify_catches_collision(tmp_path):
    out = tmp_path / "run"
    assert main(["plan", "--example", "--out", str(out)]) == 0
    header, d1, d2 = (line.split(",") for line in (out / "assignments.csv").read_text().splitlines())
    # both backups cross E-Z; slide D1's backup into D2's band
    assert d1[1] == d2[1] == "0"
    d1[7] = str(int(d2[7]) + 1)
    bad = tmp_path / "bad.csv"
    bad.write_text("\n".join(",".join(r) for r in (header, d1, d2)) + "\n")
    assert main(["verify", "--example", "--solution", str(bad)]) == cli.EXIT_INVALID


def test_metrics_are_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert main(["sweep", "--cost239", "--gen-seeds", "1,2", "--solver", "heuristic",
                     "--modes", "full,demandwise", "--slas", "0.5", "--out", str(tmp_path / name)]) == 0
    for f in ("metrics.csv", "compare.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    assert (tmp_path / "a" / "runs" / "demandwise-0.5_seed2" / "assignments.csv").exists()


def test_wall_time_opt_in(capsys):
    main(["plan", "--example", "--wall-time"])
    (row,) = rows(capsys.readouterr().out)
    assert float(row["wall_s"]) >= 0


def test_sweep_prints_comparison(capsys):
    assert main(["sweep", "--example", "--modes", "full,fixed,uniform,demandwise", "--slas", "0.75"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("seed,phi_full,phi_fixed,phi_uniform-0.75,phi_demandwise-0.75,saving_pct_fixed")
    assert out[1] == ",7,5,6,4,28.57,14.29,42.86"
    assert out[2] == "mean,,,,,28.57,14.29,42.86"


def test_pairs_verb(tmp_path, capsys):
    assert main(["pairs", "--example"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "demand_id,pair_idx,working_nodes,backup_nodes,len_w,len_b"
    assert "D1,0,A-C-Z,A-D-E-Z,1000,1140" in lines
    assert main(["pairs", "--example", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "pairs.csv").read_text().splitlines() == lines


@pytest.mark.parametrize("fmt", ["lp", "mps"])
def test_export_verb(tmp_path, fmt):
    path = tmp_path / f"m.{fmt}"
    assert main(["export-lp", "--example", "--slices", "10", "--format", fmt, "-o", str(path)]) == 0
    reader = milp.read_lp if fmt == "lp" else milp.read_mps
    parsed = reader(path.read_text())
    assert {n for n, _ in parsed.objective} == {f"theta_s{s}" for s in range(10)}


def test_topology_and_demand_files(tmp_path, capsys):
    topo = tmp_path / "net.topo"
    topo.write_text(cost239_text())
    dem = tmp_path / "d.csv"
    dem.write_text("id,src,dst,rate_gbps\nx,London,Paris,100\n")
    assert main(["plan", "--topology", str(topo), "--demands", str(dem)]) == 0
    (row,) = rows(capsys.readouterr().out)
    assert row["status"] == "OPTIMAL" and int(row["phi"]) >= 2


def test_exit_codes(tmp_path, capsys):
    # D2 needs a 5-slot backup at full protection
    assert main(["plan", "--example", "--slices", "4"]) == cli.EXIT_INFEASIBLE
    assert main(["plan", "--cost239", "--gen-seed", "1", "--time-limit", "0.5"]) == cli.EXIT_TIMEOUT
    assert main(["plan", "--topology", str(tmp_path / "missing.topo"), "--gen-seed", "1"]) == cli.EXIT_INVALID
    assert "[ingest]" in capsys.readouterr().err
    assert main(["plan", "--cost239"]) == cli.EXIT_INVALID
    with pytest.raises(SystemExit) as err:
        main(["plan", "--example", "--mode", "bogus"])
    assert err.value.code == cli.EXIT_INVALID
    with pytest.raises(SystemExit) as err:
        main(["plan", "--example", "--cost239"])
    assert err.value.code == cli.EXIT_INVALID


def test_timeout_still_writes_verified_incumbent(capsys):
    main(["plan", "--cost239", "--gen-seed", "1", "--time-limit", "0.5"])
    (row,) = rows(capsys.readouterr().out)
    assert row["status"] == "TIMEOUT" and row["phi"]


def test_run_config_invariants():
    with pytest.raises(ValidationError):
        RunConfig(cost239=True, example=True)
    with pytest.raises(ValidationError):
        RunConfig(cost239=True)
    with pytest.raises(ValidationError):
        RunConfig(cost239=True, gen_seeds=(1,), services=())
    RunConfig(cost239=True, gen_seeds=(1, 2))


def test_metrics_invariants():
    for r in run_scenario(RunConfig(cost239=True, gen_seeds=(3,), solver="heuristic", mode=Mode.DEMAND_WISE,
                                    sla=Fraction(1, 2))):
        assert r.phi <= 320 and r.link_usage >= r.phi


def test_random_fixed_fractions_are_partial_and_seeded():
    cfg = RunConfig(cost239=True, gen_seeds=(1,), mode=Mode.FIXED_PER_DEMAND, solver="heuristic")
    a = run_scenario(cfg)[0].table.instance.fixed_fractions
    assert a == run_scenario(cfg)[0].table.instance.fixed_fractions
    assert set(a.values()) <= {Fraction(1, 4), Fraction(1, 2), Fraction(3, 4)}


def _fake(seed, mode, sla, phi):
    return RunMetrics(seed, mode, Fraction(sla), phi, phi, Status.OPTIMAL, 0.0)


def test_compare_report_arithmetic():
    same = [_fake(s, Mode.FULL, 0, 10) for s in (1, 2)] + [_fake(s, Mode.UNIFORM_SLA, "0.5", 10) for s in (1, 2)]
    rep = compare_report(same)
    assert rep.mean["uniform-0.5"] == 0
    rep = compare_report([_fake(0, Mode.FULL, 0, 7), _fake(0, Mode.DEMAND_WISE, "0.75", 4)])
    assert rep.savings["demandwise-0.75"][0] == pytest.approx(3 / 7)
    assert "42.86" in rep.to_csv()


def test_compare_report_rejects_mismatch():
    with pytest.raises(ValueError):
        compare_report([_fake(1, Mode.FULL, 0, 7), _fake(2, Mode.UNIFORM_SLA, "0.5", 5)])
    with pytest.raises(ValueError):
        compare_report([_fake(1, Mode.FULL, 0, 7)])
    with pytest.raises(ValueError):
        compare_report([_fake(1, Mode.UNIFORM_SLA, "0.5", 7), _fake(1, Mode.DEMAND_WISE, "0.5", 5)])


def test_assignments_round_trip():
    (run,) = run_scenario(RunConfig(example=True, mode=Mode.FULL, services=(Fraction(1),)))
    back = read_assignments(cli.assignments_csv(run), run.table)
    assert back.assignments == run.solution.assignments
