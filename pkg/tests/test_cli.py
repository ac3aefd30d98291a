import json
from pathlib import Path

from cipcontract.cli import main

GOLDEN = Path(__file__).parent / "golden"


def write_scenario(tmp_path, *args):
    path = tmp_path / "sc.json"
    assert main(["gen-scenario", *args, "--out", str(path)]) == 0
    return path


def test_experiment_to_stdout_matches_golden(capsys):
    assert main(["fig3"]) == 0
    assert capsys.readouterr().out == (GOLDEN / "fig3.csv").read_text()


def test_experiment_to_file_with_provenance(tmp_path):
    out = tmp_path / "f1.csv"
    assert main(["fig1", "--budget", "fixed", "--n-max", "5", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("n,t_max_fixed,") and len(lines) == 4
    prov = json.loads((tmp_path / "f1.csv.provenance.json").read_text())
    assert prov["seed"] == 42 and "fixed:5" in prov["scenarios"]


def test_gen_scenario_schema(tmp_path):
    d = json.loads(write_scenario(tmp_path, "--n", "4", "--seed", "1").read_text())
    assert set(d) == {"w_levels", "theta_levels", "reward_rates", "t_min", "p", "q", "true_types",
                      "t_max", "beta", "v"}
    assert len(d["p"]) == 4 and len(d["q"][0]) == 4


def test_solve_and_validate_round_trip(tmp_path, capsys):
    sc = write_scenario(tmp_path, "--fig2")
    res_path = tmp_path / "res.json"
    assert main(["solve", str(sc), "--out", str(res_path)]) == 0
    res = json.loads(res_path.read_text())
    assert res["status"] == "optimal"
    assert abs(sum(res["t_by_ci"]) - 650.0) <= 1e-9
    assert main(["validate", str(sc), "--menu", str(res_path)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["ok"] and report["ic"]["satisfied"] and report["relaxed"]["satisfied"]


def test_validate_flags_bad_menu(tmp_path, capsys):
    sc = write_scenario(tmp_path, "--fig2")
    menu = {"entries": [{"ci": i, "t": t, "reward": r * t, "w_index": i, "theta_index": i}
                        for i, (t, r) in enumerate(zip([300, 200, 100, 50], [3, 6, 9, 12]))]}
    path = tmp_path / "menu.json"
    path.write_text(json.dumps(menu))
    assert main(["validate", str(sc), "--menu", str(path)]) == 1
    report = json.loads(capsys.readouterr().out)
    assert not report["monotonicity"]["satisfied"]


def test_solve_oracle_and_infeasible_exit_code(tmp_path, capsys):
    sc = write_scenario(tmp_path, "--fig2", "--t-max", "300")
    assert main(["solve", str(sc)]) == 2
    assert json.loads(capsys.readouterr().out)["status"] == "infeasible"
    sc = write_scenario(tmp_path, "--n", "2", "--seed", "4")
    assert main(["solve", str(sc), "--oracle", "--step", "5"]) == 0
    assert json.loads(capsys.readouterr().out)["method"] == "oracle"


def test_negotiate(tmp_path, capsys):
    sc = write_scenario(tmp_path, "--fig2", "--t-max", "200")
    assert main(["negotiate", str(sc)]) == 0
    trace = json.loads(capsys.readouterr().out)
    assert trace["status"] == "signed" and trace["signatures"] == [3]
    assert [e["ci"] for e in trace["events"] if e["kind"] == "exclude"] == [0, 1, 2]


def test_bad_input_returns_error(tmp_path):
    assert main(["solve", str(tmp_path / "missing.json")]) == 1
    bad = tmp_path / "bad.json"
    d = json.loads(write_scenario(tmp_path, "--n", "2").read_text())
    d["beta"] = 1.5
    bad.write_text(json.dumps(d))
    assert main(["solve", str(bad)]) == 1
