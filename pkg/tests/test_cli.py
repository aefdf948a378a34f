import csv
import io
import json
import math
import subprocess
import sys

import pytest
from conftest import DATA

from tautocontrol.cli import run_captured

EX = str(DATA / "example.json")
SPEEDS = str(DATA / "two_speeds.json")
HEIS = str(DATA / "heisenberg.json")
CUBE = "-1,1x-1,1x-1,1"


def ok(argv):
    code, out, err = run_captured(argv)
    assert code == 0, err
    assert err == ""
    return out


def test_lincon_example():
    doc = json.loads(ok(["lincon", EX, "--point", "0,0,0"]))
    assert doc["verdict"] is True and doc["dim"] == 3
    for key in ("equilibrium_controls", "A0", "B", "b_space", "tolerance"):
        assert key in doc


def test_simulate_example():
    out = ok(["simulate", EX, "--schedule", "0:1:u=0,1;1:2:u=1,0", "--x0", "0,0,0", "--step", "1e-3"])
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["t", "x1", "x2", "x3"]
    assert len(rows) == 2002
    last = [float(v) for v in rows[-1]]
    assert last[0] == 2.0
    assert last[1:] == pytest.approx([0.5, 1, 1], abs=1e-10)


def test_simulate_fibre_columns_and_precision():
    out = ok(["simulate", EX, "--schedule", "0:1:u=0.5,1", "--x0", "0.1,0,0", "--step", "0.25", "--v0", "1,0,0"])
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["t", "x1", "x2", "x3", "v1", "v2", "v3"]
    # every value round-trips exactly through 17 significant digits
    for row in rows[1:]:
        for v in row:
            assert float(format(float(v), ".17g")) == float(v)


def test_seminorm_example():
    doc = json.loads(ok(["seminorm", EX, "--field", "drift", "--box", CUBE, "--order", "1"]))
    assert doc["value"] == pytest.approx(math.sqrt(2), rel=1e-12)
    assert set(doc) >= {"value", "order", "grid", "truncation"}


def test_seminorm_kinds():
    lip = json.loads(ok(["seminorm", EX, "--field", "control:u1", "--box", CUBE, "--order", "0", "--kind", "lip"]))
    assert lip["dilatation"] == pytest.approx(1.0)
    om = json.loads(
        ok(["seminorm", EX, "--field", "u=1,0", "--box", CUBE, "--kind", "omega", "--weights", "1,0.5,0.5"])
    )
    assert om["truncation"] == 2


def test_radius_json_inf():
    doc = json.loads(ok(["radius", EX, "--field", "drift", "--box", CUBE, "--max-order", "8"]))
    assert doc["r"] == "inf"


def test_linearize_modes():
    doc = json.loads(ok(["linearize", EX, "--point", "0,0,0"]))
    assert doc["A0"] == [[0, 1, 0], [0, 0, 0], [0, 0, 0]]
    text = ok(["linearize", EX, "--point", "0,0,0", "--about-flow", "u=0,0"])
    assert "dv1/dt = v2 + x2" in text.splitlines()
    doc = json.loads(ok(["linearize", EX, "--point", "0,0,0", "--about-flow", "u=1,0", "--json"]))
    assert doc["A"] == [[0, 1, 0], [0, 0, 1], [0, 0, 0]]
    assert doc["reference_vanishes"] is True


def test_equilibria_and_glue():
    doc = json.loads(ok(["equilibria", EX, "--point", "0,0,0"]))
    assert doc["equilibrium"] and doc["equilibrium_controls"]["u0"] == [0, 0]
    doc = json.loads(ok(["glue", SPEEDS, "--subset", "-2,-1;1,2", "--select", "gen=0;gen=1"]))
    assert (doc["in_presheaf"], doc["in_sheafification"]) == (False, True)


def test_srgeo_csv_and_json():
    out = ok(["srgeo", HEIS, "--shoot", "0,0,0", "1,0,2", "1", "--step", "0.01"])
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["t", "x", "y", "z", "p1", "p2", "p3", "H"]
    assert len(rows) == 102
    doc = json.loads(ok(["srgeo", HEIS, "--shoot", "0,0,0", "1,0,2", "1", "--json"]))
    assert doc["energy"] == pytest.approx(doc["H0"], abs=1e-8)


@pytest.mark.parametrize(
    "argv",
    [
        ["bogus"],
        ["lincon", EX],
        ["lincon", EX, "--point", "0,0"],
        ["lincon", EX, "--point", "0,0,0", "--unknown"],
        ["lincon", str(DATA / "missing.json"), "--point", "0,0,0"],
        ["simulate", EX, "--schedule", "0:1:gen=0", "--x0", "0,0,0", "--step", "0.1"],
        ["simulate", EX, "--schedule", "0:1:u=0,0", "--x0", "0,0,0", "--step", "-1"],
        ["seminorm", EX, "--field", "nope", "--box", CUBE, "--order", "1"],
        ["seminorm", EX, "--field", "drift", "--box", "-1,1", "--order", "1"],
        ["radius", EX, "--field", "drift", "--box", CUBE, "--max-order", "3"],
        ["glue", SPEEDS, "--subset", "-2,-1;1,2", "--select", "gen=0"],
    ],
)
def test_validation_exit_code(argv):
    code, out, err = run_captured(argv)
    assert code == 2
    assert out == ""
    assert err


def test_numeric_exit_codes(tmp_path):
    code, out, err = run_captured(["lincon", EX, "--point", "1,1,1"])
    assert code == 3 and "not an equilibrium" in err
    blowup = tmp_path / "blowup.json"
    blowup.write_text(
        json.dumps({"dim": 1, "coords": ["x"], "kind": "generators", "generators": [["x^2"]], "chart_box": [[-5, 5]]})
    )
    code, out, err = run_captured(["simulate", str(blowup), "--schedule", "0:2:gen=0", "--x0", "1", "--step", "0.01"])
    assert code == 3
    assert out.startswith("t,x\n") and len(out.splitlines()) > 10
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"dim": 1, "coords": ["x"], "kind": "generators", "generators": [["log(x)"]]}))
    code, _, err = run_captured(["simulate", str(bad), "--schedule", "0:1:gen=0", "--x0", "-1", "--step", "0.1"])
    assert code == 3 and err


def test_help_for_every_command():
    for cmd in ("equilibria", "linearize", "lincon", "simulate", "seminorm", "radius", "srgeo", "glue"):
        code, out, _ = run_captured([cmd, "--help"])
        assert code == 0 and "--json" in out


def test_determinism_across_processes():
    argv = ["seminorm", EX, "--field", "u=0.3,-1", "--box", CUBE, "--order", "2", "--kind", "lip"]
    outs = {subprocess.run([sys.executable, "-m", "tautocontrol", *argv], capture_output=True).stdout for _ in range(2)}
    assert len(outs) == 1
    argv = ["simulate", EX, "--schedule", "0:1:u=0,1;1:2:u=1,0", "--x0", "0,0,0", "--step", "1e-2", "--v0", "1,1,1"]
    outs = {subprocess.run([sys.executable, "-m", "tautocontrol", *argv], capture_output=True).stdout for _ in range(2)}
    assert len(outs) == 1 and next(iter(outs)).startswith(b"t,x1")
