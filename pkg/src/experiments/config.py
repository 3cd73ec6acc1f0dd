# -*- coding: utf-8 -*-
"""
src/experiments/config.py

実験シナリオの YAML 設定。

configs/defaults.yaml を読み、シナリオファイルを深くマージする。
未知のキーはファイル名・ドット区切りキー・行番号つきで ConfigError にする。
優先順位は 引数（CLI フラグ） > シナリオ YAML > defaults.yaml > モジュール既定値。

Public API
----------
ExperimentConfig
load_config(path, defaults_path="configs/defaults.yaml", seed=None) -> ExperimentConfig
metric_from_dict(d, key="metric") -> MetricSpec
bumps_from_list(terms, key) -> BumpSet
"""
from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import yaml

from src.errors import ConfigError, TomoError
from src.fields.tensorfield import Grid
from src.geometry.metric import (
    BumpSet,
    DiskDomain,
    MetricSpec,
    collar_jet,
    conformal,
    euclidean,
    general,
)

logger = logging.getLogger(__name__)

# ================================================
# スキーマ
# ================================================

_METRIC = "metric"        # 再帰する計量セクションの目印
_NUMBER = (int, float)
_LIST = (list,)

_METRIC_KEYS: Dict[str, Any] = {
    "family": (str,),
    "terms": _LIST,
    "radius": _NUMBER,
    "outer_radius": _NUMBER,
    "center": _LIST,
    "tag": (str,),
    "width": _NUMBER,
    "coeffs": _LIST,
    "base": _METRIC,
}

_SCHEMA: Dict[str, Any] = {
    "scenario": (str,),
    "seed": (int,),
    "metric": _METRIC,
    "metric_pair": {"g0": _METRIC, "g1": _METRIC},
    "grid": {"N": (int,)},
    "inflow": {"z_count": (int,), "w_count": (int,)},
    "geodesic": {
        "step": _NUMBER,
        "transform_step": _NUMBER,
        "table_size": (int,),
        "rays": (int,),
        "fan_count": (int,),
    },
    "field": {
        "path": (str,),
        "generator": (str,),
        "modes": (int,),
        "radius": _NUMBER,
    },
    "decomp": {"rtol": _NUMBER, "maxiter": (int,)},
    "boundary": {
        "angles": _LIST,
        "directions": _LIST,
        "eps0": _NUMBER,
        "levels": (int,),
        "order": (int,),
        "convexity_floor": _NUMBER,
        "path_check": (bool,),
        "bumps": _LIST,
        "eps_scaling": _LIST,
    },
    "inversion": {
        "reg": _NUMBER + (str,),
        "maxiter": (int,),
        "tol": _NUMBER,
        "trials": (int,),
        "perturbation": _NUMBER,
        "bumps": _LIST,
        "sizes": _LIST,
    },
    "holder": {
        "amplitudes": _LIST,
        "bumps": _LIST,
        "table_size": (int,),
    },
    "output": {"dir": (str,)},
}

_GENERATORS = ("random_tensor", "potential", "zero")


# ================================================
# YAML 読み込みと行番号つき検証
# ================================================

def _read_yaml(path: Path) -> Tuple[Dict[str, Any], yaml.Node]:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"{path}: cannot read config ({e.strerror})") from e
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        line = None if mark is None else mark.line + 1
        problem = getattr(e, "problem", None) or str(e)
        raise ConfigError(f"{path}: YAML syntax error: {problem}", line=line) from e
    if data is None:
        return {}, node
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping", line=1)
    return data, node


def _check_type(path: Path, dotted: str, value: Any, allowed: Tuple[type, ...], line: int) -> None:
    if value is None:
        return
    # bool は int のサブクラスなので明示的に弾く
    if isinstance(value, bool) and bool not in allowed:
        ok = False
    else:
        ok = isinstance(value, allowed)
    if not ok:
        names = "/".join(t.__name__ for t in allowed)
        raise ConfigError(f"{path}: expected {names}, got {type(value).__name__}",
                          key=dotted, line=line)


def _validate(path: Path, node: Optional[yaml.Node], schema: Any, prefix: str,
              lines: Dict[str, int]) -> None:
    """MappingNode を schema に照合し、キー→行番号を lines に記録する。"""
    if node is None:
        return
    if schema == _METRIC:
        schema = _METRIC_KEYS
    if not isinstance(node, yaml.MappingNode):
        raise ConfigError(f"{path}: section must be a mapping", key=prefix or None,
                          line=node.start_mark.line + 1)
    for key_node, value_node in node.value:
        key = str(key_node.value)
        dotted = f"{prefix}.{key}" if prefix else key
        line = key_node.start_mark.line + 1
        if key not in schema:
            raise ConfigError(f"{path}: unknown key", key=dotted, line=line)
        lines[dotted] = line
        sub = schema[key]
        if isinstance(sub, dict) or sub == _METRIC:
            _validate(path, value_node, sub, dotted, lines)


def _validate_types(path: Path, data: Dict[str, Any], schema: Dict[str, Any], prefix: str,
                    lines: Dict[str, int]) -> None:
    for key, value in data.items():
        dotted = f"{prefix}.{key}" if prefix else str(key)
        sub = schema[key]
        if sub == _METRIC:
            if value is not None:
                _validate_types(path, value, _METRIC_KEYS, dotted, lines)
        elif isinstance(sub, dict):
            if value is not None:
                _validate_types(path, value, sub, dotted, lines)
        else:
            _check_type(path, dotted, value, sub, lines.get(dotted, 0))


def _deep_merge(base: Dict[str, Any], over: Dict[str, Any]) -> Dict[str, Any]:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in ("metric", "g0", "g1"):
            out[k] = _deep_merge(out[k], v)
        else:
            # 計量セクションは丸ごと置き換える（family 間で混ざらないように）
            out[k] = copy.deepcopy(v)
    return out


# ================================================
# 計量・バンプ
# ================================================

def bumps_from_list(terms: Sequence[Sequence[float]], key: str) -> BumpSet:
    try:
        return BumpSet(tuple(tuple(float(v) for v in t) for t in terms))
    except (TypeError, ValueError, TomoError) as e:
        raise ConfigError(f"invalid bump terms: {e}", key=key) from e


def metric_from_dict(d: Dict[str, Any], key: str = "metric") -> MetricSpec:
    """
    計量セクションを MetricSpec にする。

    family: euclidean | conformal | general | collar_jet
    conformal は terms = [[A, B, cx, cy], ...]、general は terms = [[A, a, cx, cy, alpha, beta], ...]
    と任意の base、collar_jet は width, coeffs と base。
    """
    if not isinstance(d, dict):
        raise ConfigError("metric section must be a mapping", key=key)
    family = d.get("family")
    if family is None:
        raise ConfigError("missing required key", key=f"{key}.family")
    tag = str(d.get("tag") or family)
    try:
        domain = DiskDomain(
            tuple(float(c) for c in d.get("center", (0.0, 0.0))),
            float(d.get("radius", 1.0)),
            float(d.get("outer_radius", 1.1)),
        )
        if family in ("euclidean", "conformal") and d.get("base") is not None:
            raise ConfigError(f"family '{family}' does not take a base metric", key=f"{key}.base")
        base = metric_from_dict(d["base"], f"{key}.base") if d.get("base") else None
        if base is not None and base.domain != domain:
            domain = base.domain
        if family == "euclidean":
            return euclidean(domain, tag=tag)
        if family == "conformal":
            return conformal(d.get("terms", []), domain, tag=tag)
        if family == "general":
            bumps = bumps_from_list(d.get("terms", []), f"{key}.terms")
            return general(bumps, base or euclidean(domain), tag=tag)
        if family == "collar_jet":
            if "width" not in d or "coeffs" not in d:
                missing = "width" if "width" not in d else "coeffs"
                raise ConfigError("missing required key", key=f"{key}.{missing}")
            return collar_jet(base or euclidean(domain), float(d["width"]),
                              np.asarray(d["coeffs"], dtype=float), tag=tag)
    except ConfigError:
        raise
    except (TomoError, TypeError, ValueError) as e:
        raise ConfigError(f"invalid metric: {e}", key=key) from e
    raise ConfigError(f"unknown metric family '{family}'", key=f"{key}.family")


# ================================================
# ExperimentConfig
# ================================================

@dataclass
class ExperimentConfig:
    """マージ済み設定。lines はドット区切りキー → シナリオファイル内の行番号。"""
    data: Dict[str, Any]
    source: Optional[Path] = None
    lines: Dict[str, int] = field(default_factory=dict)

    # ------------------------------------------------
    @property
    def scenario(self) -> str:
        if self.data.get("scenario"):
            return str(self.data["scenario"])
        return self.source.stem if self.source is not None else "default"

    @property
    def seed(self) -> int:
        return int(self.data.get("seed") or 0)

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)

    def get(self, dotted: str, default: Any = None) -> Any:
        cur: Any = self.data
        for part in dotted.split("."):
            if not isinstance(cur, dict) or cur.get(part) is None:
                return default
            cur = cur[part]
        return cur

    def require(self, dotted: str) -> Any:
        value = self.get(dotted)
        if value is None:
            raise ConfigError("missing required key", key=dotted, line=self.lines.get(dotted))
        return value

    # ------------------------------------------------
    def metric(self) -> MetricSpec:
        return metric_from_dict(self.require("metric"), "metric")

    def metric_pair(self) -> Tuple[MetricSpec, MetricSpec]:
        g0 = metric_from_dict(self.require("metric_pair.g0"), "metric_pair.g0")
        g1 = metric_from_dict(self.require("metric_pair.g1"), "metric_pair.g1")
        return g0, g1

    def grid(self, spec: MetricSpec) -> Grid:
        try:
            return Grid(int(self.require("grid.N")), spec.domain)
        except TomoError as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(str(e), key="grid.N", line=self.lines.get("grid.N")) from e

    def bumps(self, dotted: str) -> BumpSet:
        return bumps_from_list(self.require(dotted), dotted)

    def floats(self, dotted: str) -> List[float]:
        return [float(v) for v in self.require(dotted)]

    def generator(self) -> Optional[str]:
        gen = self.get("field.generator")
        if gen is not None and gen not in _GENERATORS:
            raise ConfigError(f"unknown field generator '{gen}' (choose from {', '.join(_GENERATORS)})",
                              key="field.generator", line=self.lines.get("field.generator"))
        return gen

    # ------------------------------------------------
    def resolved(self) -> Dict[str, Any]:
        out = copy.deepcopy(self.data)
        out["scenario"] = self.scenario
        out["seed"] = self.seed
        return out

    def dump(self) -> str:
        """解決済み設定の YAML テキスト（キー順固定）。"""
        return yaml.safe_dump(self.resolved(), sort_keys=True, allow_unicode=True,
                              default_flow_style=None)


def load_config(
    path: "str | Path",
    defaults_path: Optional["str | Path"] = "configs/defaults.yaml",
    seed: Optional[int] = None,
) -> ExperimentConfig:
    """
    defaults.yaml → シナリオの順にマージして ExperimentConfig を返す。
    defaults_path が存在しない、または None のときはシナリオだけを使う。
    """
    p = Path(path)
    merged: Dict[str, Any] = {}
    if defaults_path is not None and Path(defaults_path).exists():
        dp = Path(defaults_path)
        d_data, d_node = _read_yaml(dp)
        d_lines: Dict[str, int] = {}
        _validate(dp, d_node, _SCHEMA, "", d_lines)
        _validate_types(dp, d_data, _SCHEMA, "", d_lines)
        merged = d_data

    data, node = _read_yaml(p)
    lines: Dict[str, int] = {}
    _validate(p, node, _SCHEMA, "", lines)
    _validate_types(p, data, _SCHEMA, "", lines)
    merged = _deep_merge(merged, data)
    if seed is not None:
        merged["seed"] = int(seed)
    cfg = ExperimentConfig(merged, p, lines)
    logger.debug("config %s loaded (scenario=%s, seed=%d)", p, cfg.scenario, cfg.seed)
    return cfg


__all__ = [
    "ExperimentConfig",
    "load_config",
    "metric_from_dict",
    "bumps_from_list",
]
