import json
import math
import subprocess
import sys

import pytest
import yaml

from swiptcap.channel import ChannelParams
from swiptcap.cli import (
    EXIT_CERT,
    EXIT_INFEASIBLE,
    EXIT_OK,
    EXIT_PARSE,
    Scenario,
    ScenarioError,
    load_scenario,
    main,
    parse_scenario,
    run_oracles,
)
from swiptcap.rectenna import CircuitParams
from swiptcap.region import read_csv

STRONG = """\
channel:
  h_e: 5.0e-3
problem:
  a_v: 13.0
  sigma_x2_w: 10.0
  p_req_uw: {p}
"""


def write(tmp_path, text, name="scen.yaml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


# ---------------------------------------------------------------- scenario parsing


def test_golden_scenario_matches_defaults(scenario_dir):
    golden = load_scenario(scenario_dir / "default_link.yaml")
    default = Scenario()
    assert golden == default
    assert parse_scenario("") == default


def test_defaults_are_the_reference_link():
    c, ch, s = CircuitParams(), ChannelParams(), Scenario()
    assert (c.r_ant, c.i_s, c.eta, c.v_t, c.r_l) == (50.0, 100e-6, 1.5, 25.85e-3, 10e3)
    assert (ch.f_c, ch.alpha, ch.d_i, ch.d_e) == (2.45e9, 2.5, 500.0, 70.0)
    assert ch.sigma_n2 == pytest.approx(1e-11, rel=1e-15)
    assert s.a == (13.0,) and s.p_req == (3e-6,)


def test_golden_file_spells_out_every_default(scenario_dir):
    raw = yaml.safe_load((scenario_dir / "default_link.yaml").read_text())
    assert raw["circuit"] == {"r_ant_ohm": 50.0, "i_s_ua": 100.0, "eta": 1.5, "v_t_mv": 25.85, "r_l_kohm": 10.0}
    assert raw["channel"] == {"f_c_ghz": 2.45, "alpha": 2.5, "d_i_m": 500.0, "d_e_m": 70.0,
                              "sigma_n2_dbm": -80.0}
    assert raw["problem"]["a_v"] == 13.0 and raw["problem"]["p_req_uw"] == 3.0


def test_unit_conversion_and_string_numbers():
    scen = parse_scenario("circuit:\n  i_s_ua: '50'\nproblem:\n  p_req_uw: 2\n  a_t_v: 10\n  a_r_v: 1e-1\n"
                          "solver:\n  gap_bits: 1e-6\n")
    assert scen.circuit.i_s == pytest.approx(50e-6)
    assert scen.p_req == (2e-6,)
    assert scen.tol.gap == 1e-6
    assert scen.a_t == 10.0 and scen.a_r == pytest.approx(0.1)


@pytest.mark.parametrize("text,key,line", [
    ("problem:\n  a_v: 13\n  sigma_x2_ww: 1\n", "problem.sigma_x2_ww", 3),
    ("circuits:\n  eta: 1.5\n", "circuits", 1),
    ("problem:\n  a_v: 13\n  a_t_v: 10\n  a_r_v: 1\n", None, None),
    ("problem:\n  p_req_uw: 3\n  p_req_w: 3e-6\n", None, None),
    ("problem:\n  p_req_w: [2e-16, 1e-16]\n", "problem.p_req_w", 2),
    ("solver:\n  grid_points: abc\n", "solver.grid_points", 2),
])
def test_malformed_scenarios(text, key, line):
    with pytest.raises(ScenarioError) as info:
        parse_scenario(text)
    if key is not None:
        assert info.value.key == key
        assert info.value.line == line


def test_malformed_key_exit_code_names_key_and_line(tmp_path, capsys):
    path = write(tmp_path, "problem:\n  a_v: 13\n  p_req_mw: 3\n")
    assert main(["solve", path]) == EXIT_PARSE
    err = capsys.readouterr().err
    assert "problem.p_req_mw" in err and f"{path}:3" in err


def test_usage_errors_exit_one(tmp_path, capsys):
    assert main(["frobnicate"]) == EXIT_PARSE
    assert main(["solve", str(tmp_path / "missing.yaml")]) == EXIT_PARSE
    path = write(tmp_path, STRONG.format(p=3.0))
    assert main(["solve", path, "--grid", "100"]) == EXIT_PARSE
    assert main(["region", path, "--workers", "0"]) == EXIT_PARSE
    # region needs a list of demands
    assert main(["region", path]) == EXIT_PARSE


# ---------------------------------------------------------------- solve


def test_solve_writes_record_and_certificate(tmp_path, capsys):
    path = write(tmp_path, STRONG.format(p=3.0))
    out = tmp_path / "out"
    assert main(["solve", path, "--grid", "101", "--out", str(out)]) == EXIT_OK
    record = json.loads((out / "solution.json").read_text())
    assert record["certificate"]["passed"] is True
    assert record["problem"]["grid_points"] == 101
    assert record["p_out_w"] >= 3e-6 * (1 - 1e-7)
    assert 0 < record["rate_bits"] <= math.log2(1 + 10.0 * ChannelParams().h_i**2 / 1e-11) / 2
    assert record["dual_gap_bits"] <= 1e-5
    # sub-threshold grid mass between clusters is left out of the cluster list
    assert abs(sum(m["mass"] for m in record["mass_points"]) - 1.0) <= 1e-5
    assert (out / "certificate.txt").read_text().startswith("kkt certificate: PASS")


def test_solve_is_byte_identical_across_runs(tmp_path):
    path = write(tmp_path, STRONG.format(p=3.0))
    for d in ("a", "b"):
        assert main(["solve", path, "--grid", "101", "--out", str(tmp_path / d)]) == EXIT_OK
    for name in ("solution.json", "certificate.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_solve_default_link_is_infeasible(scenario_dir, tmp_path, capsys):
    code = main(["solve", str(scenario_dir / "default_link.yaml"), "--grid", "101", "--out", str(tmp_path)])
    assert code == EXIT_INFEASIBLE
    assert "max_feasible_metric" in capsys.readouterr().err
    assert not (tmp_path / "solution.json").exists()


def test_solve_above_ceiling_is_infeasible(tmp_path, capsys):
    path = write(tmp_path, STRONG.format(p=1000.0))
    assert main(["solve", path, "--grid", "101", "--out", str(tmp_path)]) == EXIT_INFEASIBLE
    assert "max_feasible_metric" in capsys.readouterr().err


def test_solve_certificate_failure_exit_two(tmp_path):
    # a zero tolerance cannot be met by any discretised solution
    path = write(tmp_path, STRONG.format(p=3.0) + "solver:\n  kkt_tol_bits: 0.0\n")
    assert main(["solve", path, "--grid", "101", "--out", str(tmp_path)]) == EXIT_CERT


# ---------------------------------------------------------------- region and sweep-ap


@pytest.fixture(scope="module")
def region_run(tmp_path_factory, scenario_dir):
    out = tmp_path_factory.mktemp("region")
    code = main(["region", str(scenario_dir / "region_default.yaml"), "--grid", "101", "--out", str(out)])
    return code, out


def test_region_writes_one_csv_per_amplitude(region_run):
    code, out = region_run
    assert code == EXIT_OK
    small, large = read_csv(out / "region_a8v.csv"), read_csv(out / "region_a13v.csv")
    assert len(small) == len(large) == 20
    meta = json.loads((out / "region_meta.json").read_text())
    assert [s["csv"] for s in meta["sweeps"]] == ["region_a8v.csv", "region_a13v.csv"]
    assert meta["sweeps"][0]["p_lim_w"] == pytest.approx(2.0066667866553074e-16, rel=1e-9)


def test_region_rows_monotone_and_dominated(region_run):
    _, out = region_run
    small, large = read_csv(out / "region_a8v.csv"), read_csv(out / "region_a13v.csv")
    for rows in (small, large):
        rates = [float(r["rate_bits"]) for r in rows if r["status"] == "solved"]
        assert all(b <= a + 1e-9 for a, b in zip(rates, rates[1:]))
    for s, l in zip(small, large):
        assert s["p_req_w"] == l["p_req_w"]
        if s["status"] == "solved":
            assert float(l["rate_bits"]) >= float(s["rate_bits"]) - 1e-9
        else:
            assert s["rate_bits"] == ""


def test_region_zero_demand_row_matches_solve(region_run, tmp_path):
    _, out = region_run
    first = read_csv(out / "region_a13v.csv")[0]
    path = write(tmp_path, "problem:\n  a_v: 13.0\n  sigma_x2_w: 10.0\n  p_req_w: 0.0\n")
    assert main(["solve", path, "--grid", "101", "--out", str(tmp_path)]) == EXIT_OK
    record = json.loads((tmp_path / "solution.json").read_text())
    assert float(first["e_req"]) == 1.0
    assert float(first["rate_bits"]) == pytest.approx(record["rate_bits"], abs=1e-9)


def test_region_is_byte_identical_across_runs(region_run, scenario_dir, tmp_path):
    _, out = region_run
    assert main(["region", str(scenario_dir / "region_default.yaml"), "--grid", "101",
                 "--out", str(tmp_path)]) == EXIT_OK
    for name in ("region_a8v.csv", "region_a13v.csv", "region_meta.json"):
        assert (out / name).read_bytes() == (tmp_path / name).read_bytes()


def test_region_timing_flag_fills_seconds(tmp_path):
    path = write(tmp_path, STRONG.format(p="[0.0, 3.0]"))
    assert main(["region", path, "--grid", "61", "--timing", "--out", str(tmp_path)]) == EXIT_OK
    rows = read_csv(tmp_path / "region.csv")
    assert all(float(r["solve_seconds"]) >= 0.0 for r in rows)


def test_sweep_ap_outputs(tmp_path, scenario_dir):
    scen = (scenario_dir / "strong_eh_ap.yaml").read_text().replace(
        "[0.5, 1.0, 2.0, 5.0, 10.0, 30.0, 100.0, 300.0, 1000.0]", "[1.0, 10.0, 100.0]")
    path = write(tmp_path, scen)
    for d in ("a", "b"):
        assert main(["sweep-ap", path, "--grid", "61", "--out", str(tmp_path / d)]) == EXIT_OK
    rows = read_csv(tmp_path / "a" / "capacity_vs_ap_baselines.csv")
    assert [float(r["sigma_x2_w"]) for r in rows] == [1.0, 10.0, 100.0]
    assert set(rows[0]) >= {"shannon_bits", "smith_bits", "ask2_bits", "ask4_bits", "ask8_bits"}
    for name in ("capacity_vs_ap.csv", "capacity_vs_ap_baselines.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_sweep_ap_all_infeasible_exits_three(scenario_dir, tmp_path):
    code = main(["sweep-ap", str(scenario_dir / "capacity_vs_ap.yaml"), "--grid", "61", "--out", str(tmp_path)])
    assert code == EXIT_INFEASIBLE
    assert all(r["status"] == "infeasible" for r in read_csv(tmp_path / "capacity_vs_ap.csv"))


# ---------------------------------------------------------------- verify


def test_verify_all_pass(capsys):
    assert main(["verify"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 4 and all(line.startswith("PASS") for line in lines)


def test_verify_tight_keeps_verdicts():
    loose, tight = run_oracles(), run_oracles(tight=True)
    assert [r.passed for r in loose] == [r.passed for r in tight] == [True] * 4
    by_name = {r.name: r for r in tight}
    assert by_name["eh_round_trip"].tol == pytest.approx(1e-11)
    assert main(["verify", "--tight"]) == EXIT_OK


def test_verify_detects_injected_bessel_fault(capsys):
    assert main(["verify", "--perturb-bessel", "1e-6"]) == EXIT_CERT
    captured = capsys.readouterr()
    verdicts = {line.split()[1]: line.split()[0] for line in captured.out.splitlines()}
    assert verdicts == {"bessel_identity": "FAIL", "eh_round_trip": "PASS",
                        "e_lim_quadrature": "PASS", "gaussian_certificate": "PASS"}
    assert "bessel_identity" in captured.err


def test_console_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "swiptcap.cli", "verify"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.count("PASS") == 4
