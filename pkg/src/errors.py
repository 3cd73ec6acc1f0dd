# -*- coding: utf-8 -*-
"""
src/errors.py

パッケージ共通の例外階層。

すべての例外は TomoError を継承する。CLI は TomoError を捕捉して
シナリオ名付きのメッセージに整形する。
"""
from __future__ import annotations

from typing import List, Optional, Sequence


class TomoError(Exception):
    """パッケージ内のすべての失敗の基底クラス。"""


class DomainError(TomoError):
    """点が Ω₁ の外にある、または exp 写像が Ω₁ から逸脱した。"""

    def __init__(self, message: str, point: Optional[Sequence[float]] = None):
        super().__init__(message)
        self.point = None if point is None else tuple(float(p) for p in point)


class MetricError(TomoError):
    """計量が特異・非正定値、または要求された微分が提供されていない。"""

    def __init__(self, message: str, condition: Optional[float] = None):
        if condition is not None:
            message = f"{message} (cond={condition:.3e})"
        super().__init__(message)
        self.condition = condition


class IntegrationError(TomoError):
    """レイ追跡の失敗（境界未検出での Ω₁ 逸脱、非有限値）。"""

    def __init__(self, message: str, sample_index: Optional[int] = None):
        if sample_index is not None:
            message = f"{message} (sample={sample_index})"
        super().__init__(message)
        self.sample_index = sample_index


class ShootingError(TomoError):
    """二点境界値問題（shooting）が収束しなかった。"""

    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


class SolverError(TomoError):
    """反復法（CG）が最大反復数内に収束しなかった。"""

    def __init__(self, message: str, history: Optional[List[float]] = None):
        self.history = list(history or [])
        last = self.history[-1] if self.history else float("nan")
        super().__init__(f"{message} (last residual={last:.3e}, iters={len(self.history)})")


class ChartError(TomoError):
    """座標チャートが退化した（焦点、コラー幅が単射半径を超える等）。"""


class ConvexityError(TomoError):
    """平均化した第二基本形式が閾値を下回った。"""

    def __init__(self, message: str, value: float = float("nan")):
        super().__init__(f"{message} (value={value:.3e})")
        self.value = value


class ConditioningError(TomoError):
    """方向集合が対称テンソル空間を張らない（条件数過大）。"""

    def __init__(self, message: str, condition: float = float("inf")):
        super().__init__(f"{message} (cond={condition:.3e})")
        self.condition = condition


class InputError(TomoError):
    """入力の組み合わせが不正（グリッド不一致、g + f が非正定値など）。"""


class ConfigError(TomoError):
    """設定ファイルの構文・検証エラー。key と line を保持する。"""

    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None):
        parts = [message]
        if key is not None:
            parts.append(f"key '{key}'")
        if line is not None:
            parts.append(f"line {line}")
        super().__init__(": ".join(parts[:1]) + ("" if len(parts) == 1 else " [" + ", ".join(parts[1:]) + "]"))
        self.key = key
        self.line = line
