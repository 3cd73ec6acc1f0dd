# -*- coding: utf-8 -*-
"""
src/utils/check_env.py

数値スタックのバージョンと、使っている scipy の機能の有無を表示する。

    python -m src.utils.check_env
"""
from __future__ import annotations

import importlib
import sys

# (モジュール, 使う属性)
_FEATURES = (
    ("scipy.sparse.linalg", "cg"),
    ("scipy.sparse.linalg", "factorized"),
    ("scipy.sparse.csgraph", "dijkstra"),
    ("scipy.interpolate", "RectBivariateSpline"),
    ("scipy.interpolate", "RegularGridInterpolator"),
    ("scipy.integrate", "cumulative_trapezoid"),
    ("scipy.ndimage", "distance_transform_edt"),
    ("scipy.special", "roots_legendre"),
    ("sklearn.linear_model", "LinearRegression"),
)
_PACKAGES = ("numpy", "scipy", "pandas", "sklearn", "yaml", "hypothesis")


def missing_features() -> list[str]:
    out = []
    for mod, attr in _FEATURES:
        try:
            if not hasattr(importlib.import_module(mod), attr):
                out.append(f"{mod}.{attr}")
        except ImportError:
            out.append(f"{mod}.{attr}")
    return out


def main() -> int:
    print("Python:", sys.version.split()[0])
    for name in _PACKAGES:
        try:
            print(f"{name}:", importlib.import_module(name).__version__)
        except ImportError:
            print(f"{name}: (not installed)")
    missing = missing_features()
    if missing:
        print("NG: missing", ", ".join(missing))
        return 1
    print("OK: env")
    return 0


if __name__ == "__main__":
    sys.exit(main())
