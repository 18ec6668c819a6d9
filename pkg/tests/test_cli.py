import json
import math
import subprocess
import sys

import numpy as np
import pytest

from spatial_surprisal import Corrections, analytic_distribution, build_torus_grid, sample_distribution
from spatial_surprisal.cli import main
from spatial_surprisal.scheme import ValueScheme


def run(capsys, *argv):
    code = main(list(map(str, argv)))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def files(tmp_path):
    (tmp_path / "checker.csv").write_text(
        "\n".join(",".join(str((r + c) % 2) for c in range(4)) for r in range(4)) + "\n"
    )
    (tmp_path / "const.csv").write_text("3,3\n3,3\n")
    (tmp_path / "s90.json").write_text("[[0, 90], [1, 10]]")
    (tmp_path / "s84.json").write_text("[[0, 6], [1, 3]]")
    (tmp_path / "one.json").write_text("[[2, 9]]")
    return tmp_path


def test_moran(capsys, files):
    code, out, _ = run(capsys, "moran", files / "checker.csv", "--torus")
    res = json.loads(out)
    assert code == 0 and res["I"] == -1.0 and res["i_bar"] == -16.0
    assert res["pair_counts"] == [[0, 32], [32, 0]] and res["scheme"] == [[0.0, 8], [1.0, 8]]
    code, _, err = run(capsys, "moran", files / "const.csv")
    assert code == 2 and "zero variance" in err
    code, _, _ = run(capsys, "moran", files / "missing.csv")
    assert code == 1


def test_analytic(capsys, files):
    code, out, _ = run(capsys, "analytic", "--scheme", files / "s90.json", "--k", 4)
    res = json.loads(out)
    assert code == 0
    assert res["mu"] == pytest.approx(-1.18, abs=1e-12) and res["sigma2"] == pytest.approx(5.376, rel=1e-14)
    code, out, _ = run(capsys, "analytic", "--scheme", files / "s90.json", "--observed", res["mu"])
    res2 = json.loads(out)
    assert res2["J"] == pytest.approx(math.log(math.sqrt(res["sigma2"] * 2 * math.pi)), abs=1e-12)
    assert res2["tail_p"] == pytest.approx(1.0)
    code, _, _ = run(capsys, "analytic", "--scheme", files / "one.json")
    assert code == 2
    grid = np.zeros((10, 10), dtype=int)
    grid[:3, :] = [1, 2] * 5
    (files / "g.csv").write_text("\n".join(",".join(map(str, r)) for r in grid.tolist()) + "\n")
    code, out, _ = run(capsys, "analytic", "--from-grid", files / "g.csv", "--corrections", "all", "--delta-n", -40)
    res3 = json.loads(out)
    lib = analytic_distribution(ValueScheme.from_pairs([(0, 70), (1, 15), (2, 15)]), 4,
                                Corrections(True, True), -40)
    assert code == 0 and res3["corrections"] == ["delta_n_scaling", "common_neighbor"]
    assert res3["mu"] == lib.mean and res3["sigma2"] == lib.variance
    (files / "bad.json").write_text("{not json")
    assert run(capsys, "analytic", "--scheme", files / "bad.json")[0] == 1


def test_analytic_infeasible_correction_exit_code(capsys, files):
    code, _, err = run(capsys, "analytic", "--scheme", files / "s90.json", "--delta-n", -400, "--corrections", "delta_n")
    assert code == 3 and "scaling factor" in err


def test_sample_matches_library_and_is_worker_independent(capsys, files):
    a, b = files / "a", files / "b"
    code, out, _ = run(capsys, "sample", "--scheme", files / "s84.json", "--grid-shape", "3x3", "--torus",
                       "--n", 100_000, "--seed", 7, "--out-dir", a)
    assert code == 0
    summary = json.loads(out)
    lib = sample_distribution(ValueScheme.from_pairs([(0, 6), (1, 3)]), build_torus_grid(3, 3), 100_000, 7)
    assert summary["mean"] == lib.mean
    assert abs(summary["mean"] + 1.0) < 3 * summary["std"] / math.sqrt(100_000)
    run(capsys, "sample", "--scheme", files / "s84.json", "--grid-shape", "3x3", "--torus",
        "--n", 100_000, "--seed", 7, "--workers", 8, "--out-dir", b)
    assert (a / "samples.csv").read_bytes() == (b / "samples.csv").read_bytes()
    assert (a / "summary.json").read_bytes() == (b / "summary.json").read_bytes()
    man = json.loads((a / "manifest.json").read_text())
    assert man["subcommand"] == "sample" and man["seed"] == 7 and len(man["input_digests"]) == 1


def test_sample_edge_cases(capsys, files):
    code, _, _ = run(capsys, "sample", "--scheme", files / "s84.json", "--grid-shape", "3x3", "--n", 0,
                     "--out-dir", files / "z")
    assert code == 0 and (files / "z" / "samples.csv").read_text() == "replicate,i_bar\n"
    code, _, _ = run(capsys, "sample", "--scheme", files / "s84.json", "--grid-shape", "4x4", "--n", 5,
                     "--out-dir", files / "m")
    assert code == 2


def test_default_seed_is_fixed(capsys, files):
    for d in ("d1", "d2"):
        run(capsys, "sample", "--scheme", files / "s90.json", "--grid-shape", "10x10", "--n", 300,
            "--out-dir", files / d)
    assert (files / "d1" / "samples.csv").read_bytes() == (files / "d2" / "samples.csv").read_bytes()


def test_sweep_and_rerun(capsys, files):
    cfg = files / "cfg.json"
    cfg.write_text(json.dumps({"rows": 10, "cols": 10, "n_samples": 200, "repeats": 2, "seed": 3}))
    code, out, err = run(capsys, "sweep", "independence", "--config", cfg, "--out-dir", files / "sw")
    assert code == 0 and "b=0.65" in err
    man = json.loads(out)
    assert man["config"]["rows"] == 10
    assert (files / "sw" / "independence.csv").exists() and (files / "sw" / "manifest.json").exists()
    code, _, _ = run(capsys, "rerun", files / "sw" / "manifest.json", "--out-dir", files / "sw2")
    assert code == 0
    assert (files / "sw" / "independence.csv").read_bytes() == (files / "sw2" / "independence.csv").read_bytes()
    cfg.write_text(json.dumps({"rows": 11, "cols": 10, "n_samples": 200, "repeats": 2, "seed": 3}))
    assert run(capsys, "rerun", files / "sw" / "manifest.json", "--out-dir", files / "sw3")[0] == 1


def test_sweep_infeasible_exit_code(capsys, files):
    cfg = files / "cfg.json"
    cfg.write_text(json.dumps({"rows": 10, "cols": 10, "n_samples": 50, "repeats": 1}))
    code, _, _ = run(capsys, "sweep", "common-neighbor", "--config", cfg, "--out-dir", files / "cn")
    assert code == 2  # 3 x 200 foreground cells do not fit 100 cells


def test_raster(capsys, files):
    rng = np.random.default_rng(2)
    data = rng.integers(0, 251, size=(100, 100))
    data[:50, :] = 10
    (files / "r.csv").write_text("\n".join(",".join(map(str, row)) for row in data.tolist()) + "\n")
    code, out, _ = run(capsys, "raster", "--input", files / "r.csv", "--tile", 100, "--patch", 50,
                       "--rank-by", "self_information", "--out-dir", files / "ro")
    assert code == 0
    reports = json.loads(out)
    assert len(reports) == 2  # the two uniform top patches are flagged and dropped from the ranking
    assert reports[0]["self_information"] <= reports[1]["self_information"]
    assert json.loads((files / "ro" / "patches.json").read_text()) == reports
    code, _, _ = run(capsys, "raster", "--input", files / "r.csv", "--tile", 100, "--patch", 30,
                     "--out-dir", files / "bad")
    assert code == 3
    code, out, _ = run(capsys, "raster", "--input", files / "r.csv", "--tile", 100, "--patch", 50,
                       "--b-range", "0.9,1.0", "--out-dir", files / "flt")
    assert [r["status"] for r in json.loads(out)] == ["zero_variance", "zero_variance"]


def test_console_entry_point(files):
    proc = subprocess.run(
        [sys.executable, "-m", "spatial_surprisal.cli", "moran", str(files / "checker.csv"), "--torus"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0 and json.loads(proc.stdout)["I"] == -1.0
