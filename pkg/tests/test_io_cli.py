import json
from pathlib import Path

import numpy as np
import pytest

from ccx import io as cio
from ccx.cli import main
from ccx.convexity import nominal_certificate
from ccx.errors import SchemaError
from ccx.plotting import plot
from ccx.spaces import binary_tree, staircase_grid

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


# ---------------------------------------------------------------- artifacts

def test_space_round_trip(tmp_path):
    X, _ = binary_tree(3)
    p = cio.write(tmp_path / "space.json", "space", cio.space_to_dict(X))
    Y = cio.space_from_dict(cio.read(p, "space")["data"])
    assert Y.points == X.points and np.array_equal(Y.matrix(), X.matrix())


def test_lattice_space_round_trip():
    X, _ = staircase_grid(3)
    Y = cio.space_from_dict(json.loads(json.dumps(cio.space_to_dict(X))))
    assert np.array_equal(Y.coords, X.coords) and Y.norm == "l1"


def test_system_round_trip():
    X, L = binary_tree(3)
    M = cio.system_from_dict(json.loads(json.dumps(cio.system_to_dict(L))))
    assert [g.values for g in M.segments] == [g.values for g in L.segments]
    assert [r.horizon for r in M.rays] == [r.horizon for r in L.rays]


def test_json_csv_json_is_canonical(tmp_path):
    X, _ = binary_tree(3)
    src = cio.write(tmp_path / "space.json", "space", cio.space_to_dict(X), seed=4)
    cio.convert(src, tmp_path / "space.csv")
    assert (tmp_path / "space.csv").read_text().startswith('# {"data"')
    cio.convert(tmp_path / "space.csv", tmp_path / "back.json")
    assert (tmp_path / "back.json").read_text() == src.read_text()
    assert json.loads(src.read_text())["format"] == "ccx/1"


def test_certificate_table(tmp_path):
    cert = nominal_certificate()
    src = cio.write(tmp_path / "certificate.json", "certificate", cert.to_dict())
    cio.convert(src, tmp_path / "certificate.txt")
    text = (tmp_path / "certificate.txt").read_text()
    assert text.splitlines()[0] == "ccx/1 certificate"
    assert any(line.split() == ["D1", "10.0"] for line in text.splitlines())
    back = cio.certificate_from_dict(cio.read(src)["data"])
    assert back.derived.D3 == 288


def test_malformed_artifact_reports_position():
    with pytest.raises(SchemaError, match="line 1 column"):
        cio.loads("{oops")
    with pytest.raises(SchemaError):
        cio.loads('{"format": "other/2"}')


def test_dumps_is_canonical():
    a = cio.dumps("x", {"b": 1, "a": np.float64(2.5)})
    b = cio.dumps("x", {"a": 2.5, "b": 1})
    assert a == b and a.endswith("\n")


# ---------------------------------------------------------------- plots

def test_plot_is_deterministic(tmp_path):
    csv = tmp_path / "curve.csv"
    csv.write_text("t,displacement,bound\n1.0,0.5,2.0\n2.0,0.7,2.5\n")
    plot(csv, "bound-curve", tmp_path / "a.svg")
    plot(csv, "bound-curve", tmp_path / "b.svg")
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()


def test_empty_boundary_plot_is_placeholder(tmp_path):
    csv = tmp_path / "circle.csv"
    csv.write_text("angle,product,invariant\n")
    out = plot(csv, "boundary-circle", tmp_path / "c.svg")
    assert "empty boundary" in out.read_text()


def test_plot_rejects_wrong_table(tmp_path):
    csv = tmp_path / "x.csv"
    csv.write_text("a,b\n1,2\n")
    with pytest.raises(SchemaError):
        plot(csv, "bound-curve", tmp_path / "x.svg")


# ---------------------------------------------------------------- command line

def test_cli_tree_run(tmp_path, capsys):
    assert main(["run", str(CONFIGS / "tree6.json"), "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert out.splitlines() == [f"{s}: ok" for s in
                                ("gen", "fit", "products", "boundary", "cone", "homotopy", "functions")]
    for name in ("boundary.json", "products.csv", "bound_curve.svg", "homotopy_heatmap.svg", "manifest.json"):
        assert (tmp_path / name).exists()
    rows = [[float(x) for x in line.split(",")]
            for line in (tmp_path / "bound_curve.csv").read_text().splitlines()[1:]]
    rows.sort()
    bound = [r[2] for r in rows]
    assert bound and all(b <= a + 1e-12 for a, b in zip(bound, bound[1:]))


def test_cli_staircase_expected_violation(tmp_path):
    cfg = tmp_path / "z.json"
    cfg.write_text(json.dumps({"recipe": {"kind": "grid_l1", "size": 16, "policy": "staircase-all"},
                               "budget": 100000}))
    assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 11
    assert main(["run", str(cfg), "--out", str(tmp_path / "p"), "--expect-violation", "convexity"]) == 0
    curve = cio.read(tmp_path / "p" / "violation_curve.json", "violation-curve")["data"]
    assert curve["gaps"][-1] > curve["gaps"][0]


def test_cli_malformed_config(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{bad")
    assert main(["run", str(bad)]) == 2
    assert "line 1 column 2" in capsys.readouterr().err


def test_cli_convert_and_plot(tmp_path):
    X, _ = binary_tree(2)
    src = cio.write(tmp_path / "s.json", "space", cio.space_to_dict(X))
    assert main(["convert", str(src), str(tmp_path / "s.csv")]) == 0
    assert main(["convert", str(src), str(tmp_path / "s.bin")]) == 21
    (tmp_path / "c.csv").write_text("angle,product,invariant\n3.14,5.0,5.0\n")
    assert main(["plot", str(tmp_path / "c.csv"), "--kind", "boundary-circle",
                 "--out", str(tmp_path / "c.svg")]) == 0
    assert main(["plot", str(tmp_path / "s.csv"), "--kind", "boundary-circle",
                 "--out", str(tmp_path / "x.svg")]) == 20
