import csv
import json

import numpy as np
import pytest

from flowfields.cli import main
from flowfields.scene import GridSpec, SceneError, builtin_scenes, load_scene, loads_scene

STATIC = {
    "name": "one atom",
    "flow": {"x": "x0", "y": "y0", "z": "z0", "v1": 0.5},
    "support": {"type": "box", "min": [-1, -1, -1], "max": [1, 1, 1]},
    "charge": {"atoms": [{"r0": [0, 0, 0], "weight": 1.0}]},
}


def _write(tmp_path, doc, name="scene.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def test_minimal_scene(tmp_path):
    s = load_scene(_write(tmp_path, STATIC))
    assert s.charge.atoms == (((0.0, 0.0, 0.0), 1.0),)
    assert s.flow.sources == ("x0", "y0", "z0")


def test_density_scene_quadrature(tmp_path):
    doc = dict(STATIC, charge={"density": "1.0", "region": {"type": "box", "min": [0, 0, 0], "max": [1, 1, 1]},
                               "quadrature": {"cells": 4, "nodes": 4}})
    s = load_scene(_write(tmp_path, doc))
    assert (s.charge.cells, s.charge.nodes) == (4, 4)
    assert len(s.charge.quadrature_nodes()[0]) == 4 ** 3 * 4 ** 3


def test_superluminal_bound_rejected(tmp_path):
    doc = json.loads(json.dumps(STATIC))
    doc["flow"]["v1"] = 1.2
    with pytest.raises(SceneError, match="v1 must be < 1"):
        load_scene(_write(tmp_path, doc))


def test_schema_error_reports_path(tmp_path):
    doc = json.loads(json.dumps(STATIC))
    doc["charge"]["atoms"][0]["r0"] = [0, 0]
    with pytest.raises(SceneError, match=r"scene\.charge\.atoms\[0\]\.r0"):
        load_scene(_write(tmp_path, doc))


def test_parse_error_in_scene(tmp_path):
    doc = json.loads(json.dumps(STATIC))
    doc["flow"]["x"] = "x0 + * t"
    with pytest.raises(SceneError, match="position"):
        load_scene(_write(tmp_path, doc))


@pytest.mark.parametrize("name", builtin_scenes())
def test_builtin_round_trip(name):
    s = load_scene(name)
    again = loads_scene(s.dumps())
    assert again == s
    assert again.dumps() == s.dumps()


def test_builtins_present():
    assert set(builtin_scenes()) >= {"static", "uniform", "circular", "oscillating", "two_body_cloud"}


def test_grid_parse():
    g = GridSpec.parse("x=1:4:4,y=0,z=0,t=0")
    assert g.axis_values("x").tolist() == [1, 2, 3, 4]
    assert len(g.points()) == 4
    with pytest.raises(ValueError):
        GridSpec.parse("x=1:0:3")
    with pytest.raises(ValueError):
        GridSpec.parse("x=1:2:0")
    with pytest.raises(ValueError):
        GridSpec.parse("w=1")


def test_grid_row_order():
    pts = GridSpec.parse("x=0:1:2,y=0:1:2,z=0,t=0:1:2").points()
    assert pts[:4, 3].tolist() == [0, 0, 0, 0]
    assert pts[:4, :2].tolist() == [[0, 0], [0, 1], [1, 0], [1, 1]]


def _read(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_eval_coulomb(tmp_path):
    out = tmp_path / "out.csv"
    assert main(["eval", "--scene", _write(tmp_path, STATIC), "--grid", "x=1:4:4,y=0,z=0,t=0", "--out", str(out)]) == 0
    rows = _read(out)
    assert rows[0] == ["x", "y", "z", "t", "phi", "Ax", "Ay", "Az", "Ex", "Ey", "Ez", "Bx", "By", "Bz", "on_matter"]
    assert [float(r[4]) for r in rows[1:]] == [1, 1 / 2, 1 / 3, 1 / 4]


def test_eval_on_matter_row(tmp_path):
    out = tmp_path / "out.csv"
    assert main(["eval", "--scene", _write(tmp_path, STATIC), "--grid", "x=0:1:2,y=0,z=0,t=0", "--out", str(out)]) == 0
    rows = _read(out)
    assert rows[1][4:] == [""] * 10 + ["1"]
    assert rows[2][-1] == "0"


def test_eval_round_trips_doubles(tmp_path):
    out = tmp_path / "out.csv"
    main(["eval", "--scene", "circular", "--grid", "x=2:3:2,y=1.5,z=0.3,t=0.7", "--out", str(out)])
    rows = _read(out)
    from flowfields.fields import fields_feynman
    s = load_scene("circular")
    ref = fields_feynman(s.flow, s.charge, [2.0, 1.5, 0.3], 0.7)
    assert float(rows[1][8]) == ref.E[0]


def test_eval_bad_grid_is_usage_error(tmp_path, capsys):
    assert main(["eval", "--scene", "static", "--grid", "x=1:0:3", "--out", str(tmp_path / "o.csv")]) == 2


def test_missing_scene_is_usage_error(capsys):
    assert main(["validate", "--scene", "/nonexistent/scene.json"]) == 2


def test_argparse_usage_error():
    with pytest.raises(SystemExit) as info:
        main(["verify", "--scene", "static", "--suite", "nope"])
    assert info.value.code == 2


def test_validate_command(capsys):
    assert main(["validate", "--scene", "uniform"]) == 0
    assert "PASS" in capsys.readouterr().out


def test_wrong_speed_bound_fails_validation(tmp_path, capsys):
    doc = json.loads(json.dumps(STATIC))
    doc["flow"]["x"] = "x0 + 0.5 * t"
    doc["flow"]["v1"] = 0.1
    path = _write(tmp_path, doc)
    assert main(["validate", "--scene", path]) == 1
    assert main(["verify", "--scene", path, "--suite", "derivatives", "--samples", "2"]) == 1
    assert main(["eval", "--scene", path, "--grid", "x=3,y=0,z=0,t=0", "--out", str(tmp_path / "o.csv")]) == 1


def test_verify_static_all(tmp_path, capsys):
    report = tmp_path / "r.json"
    assert main(["verify", "--scene", "static", "--suite", "all", "--samples", "3", "--json", str(report)]) == 0
    data = json.loads(report.read_text())
    assert data["passed"] and data["checks"]
    assert "ALL PASS" in capsys.readouterr().out


def test_verify_circular_derivatives(capsys):
    assert main(["verify", "--scene", "circular", "--suite", "derivatives", "--samples", "100", "--tol", "1e-5"]) == 0


def test_verify_failure_exit_code(capsys):
    assert main(["verify", "--scene", "circular", "--suite", "gauge", "--samples", "2", "--tol", "1e-30"]) == 1


def test_seed_reproduces_report(tmp_path):
    a, b, c = (tmp_path / n for n in ("a.json", "b.json", "c.json"))
    base = ["verify", "--scene", "oscillating", "--suite", "maxwell", "--samples", "3"]
    main(base + ["--seed", "5", "--json", str(a)])
    main(base + ["--seed", "5", "--json", str(b)])
    main(base + ["--seed", "6", "--json", str(c)])
    assert a.read_bytes() == b.read_bytes()
    assert a.read_bytes() != c.read_bytes()
