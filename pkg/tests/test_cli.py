import json
import subprocess
import sys

import pytest

from circbundle.cli import main
from circbundle.mesh import make_icosphere

TORUS = """
[surface]
preset = "torus"
n = 8
m = 8

[bundle]
euler_number = 0
connection = "constructed"

[solver]
multistart = 2
move_budget = 4

[output]
dir = "out"
"""

SPHERE = """
[surface]
preset = "icosphere"
subdivisions = 3

[bundle]
euler_number = 2
connection = "levi-civita"

[solver]
multistart = 2
move_budget = 4

[hcone]
lambdas = [2, 4, 8]
radius = 1.2

[output]
dir = "out"
"""


def _write(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_torus_run(tmp_path, monkeypatch):
    monkeypatch.delenv("CIRCBUNDLE_OUTPUT_DIR", raising=False)
    assert main(["run", str(_write(tmp_path, TORUS))]) == 0
    out = tmp_path / "out"
    rep = json.loads((out / "report.json").read_text())
    assert rep["topology"]["singularity_count"] == 0
    assert abs(rep["energy"]["volume"] - 1.0) < 1e-6
    for name in ("section.csv", "singularities.csv", "energy_trace.csv", "profile.csv"):
        assert (out / name).exists()
    assert (out / "energy_trace.csv").read_text().startswith("iteration,energy\n")
    assert (out / "profile.csv").read_text().startswith("singularity,t,f,f_over_t\n")


def test_sphere_run(tmp_path, monkeypatch):
    monkeypatch.delenv("CIRCBUNDLE_OUTPUT_DIR", raising=False)
    assert main(["run", str(_write(tmp_path, SPHERE))]) == 0
    rep = json.loads((tmp_path / "out" / "report.json").read_text())
    assert rep["topology"]["singularity_count"] == 1
    assert abs(rep["topology"]["indices"][0]) == 2
    assert len(rep["multistart"]) == 2 and len(rep["hcones"]) == 1
    rows = (tmp_path / "out" / "profile.csv").read_text().splitlines()
    assert len(rows) == 9


def test_csv_floats_round_trip(tmp_path, monkeypatch):
    monkeypatch.delenv("CIRCBUNDLE_OUTPUT_DIR", raising=False)
    main(["run", str(_write(tmp_path, SPHERE))])
    line = (tmp_path / "out" / "profile.csv").read_text().splitlines()[1]
    t = line.split(",")[1]
    assert repr(float(t)) == repr(float(f"{float(t):.17g}"))


def test_odd_euler_number(tmp_path, capsys):
    cfg = _write(tmp_path, TORUS.replace("euler_number = 0", "euler_number = 3"))
    assert main(["run", str(cfg)]) == 2
    err = capsys.readouterr().err
    assert "even" in err and len(err.strip().splitlines()) == 1


def test_missing_config(tmp_path):
    assert main(["run", str(tmp_path / "nope.toml")]) == 2


def test_bad_toml(tmp_path):
    assert main(["run", str(_write(tmp_path, "[surface\npreset = 1"))]) == 2


def test_unwritable_output(tmp_path, monkeypatch):
    blocker = tmp_path / "file"
    blocker.write_text("")
    monkeypatch.setenv("CIRCBUNDLE_OUTPUT_DIR", str(blocker / "sub"))
    assert main(["run", str(_write(tmp_path, TORUS))]) == 2


def test_verify_oracles(monkeypatch, capsys):
    monkeypatch.delenv("CIRCBUNDLE_ORACLE_TOL", raising=False)
    assert main(["verify-oracles"]) == 0
    assert "FAIL" not in capsys.readouterr().out


def test_verify_oracles_unreachable_tolerance(monkeypatch, capsys):
    monkeypatch.setenv("CIRCBUNDLE_ORACLE_TOL", "1e-15")
    assert main(["verify-oracles"]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_mesh_info(tmp_path, capsys):
    p = tmp_path / "m.off"
    p.write_text(make_icosphere(1).to_off())
    assert main(["mesh-info", str(p)]) == 0
    assert "42" in capsys.readouterr().out
    assert main(["mesh-info", str(tmp_path / "missing.off")]) == 2


def test_reports_identical_except_timestamp(tmp_path, monkeypatch):
    monkeypatch.delenv("CIRCBUNDLE_OUTPUT_DIR", raising=False)
    texts = []
    for sub in ("a", "b"):
        d = tmp_path / sub
        d.mkdir()
        assert main(["run", str(_write(d, SPHERE))]) == 0
        rep = json.loads((d / "out" / "report.json").read_text())
        rep.pop("timestamp")
        texts.append(json.dumps(rep, sort_keys=True))
    assert texts[0] == texts[1]


def test_entry_point_module():
    r = subprocess.run([sys.executable, "-m", "circbundle.cli", "--help"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "verify-oracles" in r.stdout
