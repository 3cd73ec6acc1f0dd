# -*- coding: utf-8 -*-
"""
tests/test_configs.py

configs/*.yaml の読み込みと src/experiments/config.py の検証。
"""
from __future__ import annotations

import pathlib

import pytest

from src.errors import ConfigError
from src.experiments.config import load_config, metric_from_dict

SCENARIOS = sorted(p for p in pathlib.Path("configs").glob("*.yaml") if p.name != "defaults.yaml")


@pytest.mark.parametrize("path", SCENARIOS, ids=lambda p: p.stem)
def test_scenario_loads(path):
    cfg = load_config(path)
    assert cfg.scenario == path.stem
    if cfg.get("metric") is not None:
        assert cfg.metric().name
    else:
        g0, g1 = cfg.metric_pair()
        assert g0.domain == g1.domain


def test_defaults_are_merged():
    cfg = load_config("configs/lens.yaml")
    assert cfg.get("geodesic.rays") == 24
    assert cfg.get("geodesic.table_size") == 16
    assert cfg.get("inversion.reg") == pytest.approx(1e-4)


def test_dump_is_sorted_yaml():
    text = load_config("configs/euclidean32.yaml", seed=9).dump()
    assert "seed: 9" in text
    keys = [line.split(":")[0] for line in text.splitlines() if line and not line.startswith((" ", "-"))]
    assert keys == sorted(keys)


def test_wrong_type(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("grid:\n  N: many\n", encoding="utf-8")
    with pytest.raises(ConfigError) as exc:
        load_config(p, defaults_path=None)
    assert exc.value.key == "grid.N"
    assert exc.value.line == 2


def test_yaml_syntax_error(tmp_path):
    p = tmp_path / "broken.yaml"
    p.write_text("metric: [unclosed\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(p, defaults_path=None)


def test_metric_family():
    with pytest.raises(ConfigError) as exc:
        metric_from_dict({"family": "hyperbolic"})
    assert exc.value.key == "metric.family"
    with pytest.raises(ConfigError):
        metric_from_dict({"family": "collar_jet", "width": 0.1})


def test_conformal_base_is_rejected():
    with pytest.raises(ConfigError) as exc:
        metric_from_dict({"family": "conformal", "terms": [[0.1, 1.0, 0.0, 0.0]],
                          "base": {"family": "euclidean"}})
    assert exc.value.key == "metric.base"
