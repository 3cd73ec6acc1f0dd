# -*- coding: utf-8 -*-
"""
tests/test_runner.py

src/experiments/runner.py の CLI: 成果物・終了コード・決定性。
"""
from __future__ import annotations

import json
import textwrap

import pytest

from src.experiments.runner import SUBCOMMANDS, main, run

SMALL = """\
scenario: small
seed: 3
metric:
  family: conformal
  terms:
    - [0.05, 4.0, 0.0, 0.0]
grid:
  N: 16
inflow:
  z_count: 16
  w_count: 16
field:
  generator: random_tensor
"""


def _write(tmp_path, text, name="scenario.yaml"):
    p = tmp_path / name
    p.write_text(textwrap.dedent(text), encoding="utf-8")
    return p


# ================================================
# グループ1: 成果物
# ================================================

def test_decompose_writes_artifacts(tmp_path, capsys):
    cfg = _write(tmp_path, SMALL)
    assert main(["decompose", "--config", str(cfg), "--out", str(tmp_path / "out"), "--quiet"]) == 0
    out_dir = tmp_path / "out" / "small" / "decompose"
    for name in ("f_s.tt2f", "v.tt2f", "cg_history.csv", "decomposition.json",
                 "config.resolved.yaml", "summary.txt"):
        assert (out_dir / name).exists()
    payload = json.loads((out_dir / "decomposition.json").read_text(encoding="utf-8"))
    assert payload["residual"] <= 1e-7
    assert "seed: 3" in (out_dir / "summary.txt").read_text(encoding="utf-8")
    assert "評価結果を" in capsys.readouterr().out


def test_runs_are_byte_identical(tmp_path):
    cfg = _write(tmp_path, SMALL)
    a = run("decompose", cfg, out=tmp_path / "a")
    b = run("decompose", cfg, out=tmp_path / "b")
    for name in ("decomposition.json", "f_s.tt2f", "config.resolved.yaml"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_seed_flag_overrides_config(tmp_path):
    cfg = _write(tmp_path, SMALL)
    out_dir = run("sinogram", cfg, out=tmp_path / "out", seed=11)
    assert "seed: 11" in (out_dir / "config.resolved.yaml").read_text(encoding="utf-8")


def test_output_dir_from_environment(tmp_path, monkeypatch):
    cfg = _write(tmp_path, SMALL)
    monkeypatch.setenv("TENSOR_TOMO_OUT", str(tmp_path / "env"))
    out_dir = run("simplicity-check", cfg)
    assert out_dir == tmp_path / "env" / "small" / "simplicity-check"
    assert json.loads((out_dir / "simplicity.json").read_text(encoding="utf-8"))["simple"]


def test_invert_euclidean32(tmp_path):
    assert main(["invert", "--config", "configs/euclidean32.yaml",
                 "--out", str(tmp_path), "--quiet"]) == 0
    report = json.loads((tmp_path / "euclidean32" / "invert" / "report.json").read_text(encoding="utf-8"))
    assert report["rel_error"] <= 0.10
    assert report["grid_N"] == 32


@pytest.mark.slow
def test_jet_recover_conformal_pair(tmp_path):
    assert main(["jet-recover", "--config", "configs/conformal_pair.yaml",
                 "--out", str(tmp_path), "--quiet"]) == 0
    out_dir = tmp_path / "conformal_pair" / "jet-recover"
    payload = json.loads((out_dir / "jet.json").read_text(encoding="utf-8"))
    assert payload["rel_error_k0"] <= 5e-2
    assert payload["rel_error_k1"] <= 1.5e-1
    assert (out_dir / "jet.csv").read_text(encoding="utf-8").startswith("# ")


# ================================================
# グループ2: 終了コード
# ================================================

def test_missing_field_file(tmp_path, capsys):
    cfg = _write(tmp_path, """\
        metric:
          family: euclidean
        field:
          path: does/not/exist.tt2f
        """)
    assert main(["sinogram", "--config", str(cfg), "--out", str(tmp_path), "--quiet"]) == 1
    assert "field.path" in capsys.readouterr().err


def test_unknown_key_reports_line(tmp_path, capsys):
    cfg = _write(tmp_path, """\
        metric:
          family: euclidean
        grid:
          M: 16
        """)
    assert main(["decompose", "--config", str(cfg), "--out", str(tmp_path), "--quiet"]) == 1
    err = capsys.readouterr().err
    assert "grid.M" in err
    assert "line 4" in err


def test_compute_error_exit_code(tmp_path, capsys):
    """境界に触れるバンプは計算側のエラー（終了コード 2）"""
    cfg = _write(tmp_path, """\
        scenario: bad_bump
        metric:
          family: euclidean
        holder:
          bumps:
            - [0.1, 0.3, 0.8, 0.0, 0.0, 1.0]
          table_size: 4
        """)
    assert main(["holder-fit", "--config", str(cfg), "--out", str(tmp_path), "--quiet"]) == 2
    assert "[bad_bump] InputError" in capsys.readouterr().err


def test_subcommands():
    assert set(SUBCOMMANDS) == {
        "simplicity-check", "distance-table", "sinogram", "normal-op", "decompose",
        "gauge-normalize", "jet-recover", "linearize", "invert", "stability-sweep", "holder-fit",
    }
