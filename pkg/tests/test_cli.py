import json
import math

import numpy as np
import pytest

from abplab import agf
from abplab.cli import main, read_config
from abplab.grid import Domain, make_grid, sample


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_gallery_list_and_describe(capsys):
    code, out, _ = run(capsys, "gallery", "list")
    assert code == 0 and "wang3" in out
    code, out, _ = run(capsys, "gallery", "describe", "spherical_cap", "--a", "0.25")
    assert code == 0 and json.loads(out)["params"]["a"] == 0.25


def test_unknown_entry_is_usage_error(capsys):
    code, _, err = run(capsys, "verify", "--gallery", "nope")
    assert code == 2
    e = json.loads(err)
    assert e["error"] == "GalleryError" and e["exit_code"] == 2


def test_bad_flags_are_usage_errors(capsys):
    assert run(capsys, "verify")[0] == 2
    assert run(capsys, "verify", "--gallery", "power", "--eta", "lots")[0] == 2
    assert run(capsys, "verify", "--gallery", "power", "--a", "0.3")[0] == 2


def test_verify_writes_reports(capsys, tmp_path):
    argv = ["verify", "--gallery", "spherical_cap", "--a", "0.5", "--d", "1", "--res", "64",
            "--out", str(tmp_path), "--format", "json,csv,svg"]
    code, out, _ = run(capsys, *argv)
    assert code == 0
    rep = json.loads(out)
    assert "ratio" in rep and rep["holds"]
    files = sorted(p.name for p in tmp_path.iterdir())
    assert [f.rsplit(".", 1)[1] for f in files] == ["csv", "json", "svg"]
    svg1 = next(tmp_path.glob("*.svg")).read_bytes()
    code, out2, _ = run(capsys, *argv)
    rep2 = json.loads(out2)
    rep.pop("metadata"), rep2.pop("metadata")
    assert rep == rep2
    assert next(tmp_path.glob("*.svg")).read_bytes() == svg1


def test_power_contact_is_one_cell(capsys):
    code, out, _ = run(capsys, "verify", "--gallery", "power", "--alpha", "0.5", "--res", "64")
    assert code == 0
    assert json.loads(out)["details"]["contact_cells"] == 1


def test_sweep(capsys):
    code, out, _ = run(capsys, "sweep", "--gallery", "spherical_cap", "--param", "a",
                       "--values", "1,0.5,0.25", "--res", "64")
    assert code == 0
    lines = out.strip().splitlines()
    header = lines[0].split(",")
    ratios = [float(l.split(",")[header.index("oracle_ratio")]) for l in lines[1:]]
    assert ratios == sorted(ratios)
    assert run(capsys, "sweep", "--gallery", "wang3", "--param", "eps", "--values", " , ")[0] == 2


def test_sweep_norms_only(capsys):
    code, out, _ = run(capsys, "sweep", "--gallery", "wang1", "--param", "eps", "--values", "0.1,0.05",
                       "--lp", "1", "--norms-only")
    assert code == 0 and "lp_1" in out.splitlines()[0]


def test_config_file_with_override(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# cap run\ngallery = spherical_cap\nres = 32\nno_measure = true\n")
    assert read_config(cfg) == ["--gallery", "spherical_cap", "--res", "32", "--no-measure"]
    code, out, _ = run(capsys, "verify", "--config", str(cfg), "--res", "48")
    rep = json.loads(out)
    assert code == 0 and rep["details"]["resolution"] == 48 and rep["measure_total"] is None


def test_seed_from_environment(capsys, monkeypatch):
    argv = ["verify", "--gallery", "spherical_cap", "--n", "2", "--res", "12", "--mc-samples", "100000"]
    monkeypatch.delenv("ABPLAB_SEED", raising=False)
    assert run(capsys, *argv)[0] == 2
    monkeypatch.setenv("ABPLAB_SEED", "4")
    code, out, _ = run(capsys, *argv)
    assert code == 0 and json.loads(out)["gut2_holds"]


def test_numerical_failure_exit_code(capsys):
    code, _, err = run(capsys, "verify", "--gallery", "spherical_cap", "--n", "2", "--res", "12",
                       "--seed", "1", "--mc-samples", "10", "--mc-rel-stderr", "1e-6")
    assert code == 3 and json.loads(err)["error"] == "MeasureError"


def test_svg_only_for_n1(capsys, tmp_path):
    code, _, _ = run(capsys, "verify", "--gallery", "spherical_cap", "--n", "2", "--seed", "1",
                     "--format", "svg", "--out", str(tmp_path))
    assert code == 2


@pytest.fixture()
def fields(tmp_path):
    om = Domain.ball(1.0, 2)
    g = make_grid(om, 48)
    agf.write(tmp_path / "cone.agf", sample(lambda x: np.linalg.norm(x, axis=-1), g, om))
    agf.write(tmp_path / "affine.agf", sample(lambda x: x[..., 0] - x[..., 1] + 2, g, om), encoding="csv")
    (tmp_path / "bad.agf").write_bytes(b"AGF1 dim=2 counts=3,3 origin=0,0 h=1,1\n" + b"\x00" * 7)
    return tmp_path


def test_measure_cone_and_affine(capsys, fields):
    code, out, _ = run(capsys, "measure", str(fields / "cone.agf"), "--at", "0,0")
    assert code == 0 and json.loads(out)["total"] == pytest.approx(math.pi, rel=1e-3)
    code, out, _ = run(capsys, "measure", str(fields / "affine.agf"))
    assert code == 0 and json.loads(out)["total"] == 0.0


def test_envelope_round_trip_is_bit_identical(capsys, fields):
    pl_path = fields / "cone.json"
    code, _, _ = run(capsys, "envelope", str(fields / "cone.agf"), "--out", str(pl_path))
    assert code == 0
    a = run(capsys, "measure", str(fields / "cone.agf"), "--seed", "9")[1]
    b = run(capsys, "measure", str(pl_path), "--seed", "9")[1]
    assert a == b


def test_malformed_agf_reports_offset(capsys, fields):
    code, _, err = run(capsys, "measure", str(fields / "bad.agf"))
    e = json.loads(err)
    assert code == 2 and e["error"] == "AGFError" and e["offset"] > 0
