import json

import pytest

from extremalkit import schema
from extremalkit.cli import main
from extremalkit.uuv import build_uuv


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_preset_rotation_outputs(tmp_path, capsys):
    code, _, _ = run(["preset", "uuv-rotation", "--T", "2", "--out", str(tmp_path), "--quiet"], capsys)
    assert code == 0
    rep = json.loads((tmp_path / "uuv-rotation.json").read_text())
    events = json.loads((tmp_path / "uuv-rotation.events.json").read_text())
    flips = [e for e in events if e["kind"] == "sign-change"]
    assert len(flips) == 1 and flips[0]["channel"] == 3
    assert flips[0]["t"] == pytest.approx(0.5, abs=1e-9)
    assert rep["schema_version"] == 1
    header = (tmp_path / "uuv-rotation.csv").read_text().splitlines()[0]
    assert header.startswith("t,x1,") and header.endswith(",H")


def test_preset_runs_are_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run(["preset", "uuv-rotation", "--out", str(d), "--quiet"], capsys)[0] == 0
    for name in ("uuv-rotation.csv", "uuv-rotation.json", "uuv-rotation.events.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


@pytest.mark.parametrize("name", ["uuv-translate-1", "uuv-translate-3", "uuv-bangbang"])
def test_other_presets(name, tmp_path, capsys):
    code, _, _ = run(["preset", name, "--T", "1", "--out", str(tmp_path), "--quiet"], capsys)
    assert code == 0
    assert (tmp_path / f"{name}.csv").exists()


def test_audit_passes_on_vehicle(capsys):
    code, out, _ = run(["audit"], capsys)
    assert code == 0
    rep = json.loads(out)
    assert rep["commutativity"]["commuting"] and rep["degree_audit"]["passed"]


def test_simulate_with_zero_adjoint(tmp_path, capsys):
    code, _, err = run(["simulate", "--x0", "0,0,0,0,0,0", "--lam0", "0,0,0,0,0,0", "--T", "1",
                        "--out", str(tmp_path)], capsys)
    assert code == 1
    assert "adjoint must be nonzero" in err


def test_simulate_writes_plot_data(tmp_path, capsys):
    code, _, _ = run(["simulate", "--x0", "0,0,0,0,0,0.2", "--lam0", "0,0,1,0,0,0.5", "--T", "0.5",
                      "--step", "0.01", "--out", str(tmp_path), "--quiet", "--emit-plot-data"], capsys)
    assert code == 0
    files = sorted(p.name for p in tmp_path.iterdir())
    assert "simulate.csv" in files and any("plot" in f for f in files)


@pytest.mark.parametrize("argv", [
    ["frobnicate"],
    ["simulate", "--x0", "0,0", "--lam0", "1,1", "--T", "1"],
    ["simulate", "--x0", "a,b,c,d,e,f", "--lam0", "1,1,1,1,1,1", "--T", "1"],
    ["prop1", "--K", "4", "--chain", "1;1"],
    ["prop1", "--K1", "1,2", "--K", "2", "--chain", "1,2;1,2"],
    ["singular-control", "--x", "0,0,1:0,0,0,0", "--lam", "1,2", "--k", "3", "--uk", "1"],
])
def test_usage_errors_exit_2(argv, capsys):
    assert run(argv, capsys)[0] == 2


def test_echo_system_round_trip(tmp_path, capsys):
    path = tmp_path / "uuv.json"
    assert run(["brackets", "--depth", "1", "--echo-system", str(path), "--quiet"], capsys)[0] == 0
    again = schema.load_system(path)
    assert schema.systems_equal(again, build_uuv())
    assert again.mechanical
    # the echoed definition drives the same commands
    code, out, _ = run(["brackets", "--system", str(path), "--depth", "1"], capsys)
    assert code == 0 and json.loads(out)["drift_class"] == [1, 2]


def test_theorem1_from_query_file(tmp_path, capsys):
    q = tmp_path / "q.json"
    q.write_text(json.dumps({"schema_version": 1, "K1": [1, 2, 3], "K2": [], "J": [[1, 2, 3], [1, 2, 3]],
                             "random_points": 5, "seed": 3}))
    code, out, _ = run(["theorem1", str(q)], capsys)
    assert code == 0
    assert json.loads(out)["verdict"]["status"] == "pointwise-verified"
    q.write_text(json.dumps({"schema_version": 1, "K1": [1, 2], "J": [[1, 2], [1, 2], [1, 2]],
                             "random_points": 3, "seed": 3}))
    code, out, _ = run(["theorem1", str(q)], capsys)
    assert code == 1 and json.loads(out)["verdict"]["status"] == "inconclusive"
    q.write_text(json.dumps({"schema_version": 1, "K1": [1], "J": [[1], [2]]}))
    assert run(["theorem1", str(q)], capsys)[0] == 2


def test_singular_control_command(capsys):
    code, out, _ = run(["singular-control", "--x", "0,0,3/5:4/5,0,0,1/2", "--lam", "0,0,1,0,0,1/2",
                        "--k", "3", "--uk", "1"], capsys)
    assert code == 0
    sol = json.loads(out)["solution"]
    assert sol["u"] == [0, 0] and sol["exact"]
    code, out, _ = run(["singular-control", "--x", "0,0,1:0,0,0,0", "--lam", "1,0,0,0,0,0",
                        "--k", "3", "--uk", "1"], capsys)
    assert code == 1 and not json.loads(out)["solved"]


def test_concat_check_command(capsys):
    code, out, _ = run(["concat-check", "--S1", "1,3", "--S2", "2,3"], capsys)
    assert code == 0 and json.loads(out)["verdict"]["path"] == "fast"
    code, out, _ = run(["concat-check", "--S1", "1", "--S2", "1", "--junction", "0,0,1:0,1,1,1"], capsys)
    assert code == 1 and json.loads(out)["verdict"]["status"] == "inconclusive"


def test_prop1_command_reports_inconclusive(capsys):
    code, out, _ = run(["prop1", "--K1", "1,2", "--K", "3", "--chain", "1,2;1,2", "--points", "3",
                        "--seed", "1"], capsys)
    assert code == 1
    assert json.loads(out)["verdict"]["min_rank"] == 5
