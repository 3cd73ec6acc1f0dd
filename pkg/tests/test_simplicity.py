# -*- coding: utf-8 -*-
"""
tests/test_simplicity.py

src/geometry/simplicity.py の単純性診断。
"""
from __future__ import annotations

import numpy as np
import pytest

from src.geometry.metric import conformal
from src.geometry.simplicity import boundary_curvature, check_simplicity


def test_euclidean_disk_is_simple(flat):
    rep = check_simplicity(flat)
    assert rep.simple
    assert rep.convexity_margin == pytest.approx(1.0, abs=1e-12)
    assert rep.min_jacobi == pytest.approx(1.0, abs=1e-8)
    assert rep.rays == 16 * 16


def test_small_conformal_is_simple(conf):
    rep = check_simplicity(conf)
    assert rep.simple
    assert rep.min_jacobi > 0


def test_lens_has_conjugate_points():
    rep = check_simplicity(conformal([(0.5, 8.0, 0.0, 0.0)], tag="lens"))
    assert rep.conjugate_point
    assert not rep.simple
    assert "Jacobi" in rep.diagnostic


def test_boundary_curvature_of_scaled_circle():
    """g = e^{2c}δ（定数）なら測地的曲率は e^{−c}"""
    spec = conformal([(0.3, 0.0, 0.0, 0.0)])
    kappa = boundary_curvature(spec, np.linspace(0.0, 2 * np.pi, 12, endpoint=False))
    assert kappa == pytest.approx(np.full(12, np.exp(-0.3)), rel=1e-12)


def test_report_dict_has_flag(flat):
    d = check_simplicity(flat, ray_count=4, fan_count=4).to_dict()
    assert d["simple"] is True
    assert set(d) >= {"convexity_margin", "conjugate_point", "min_jacobi", "boundary_samples"}


def test_long_geodesic_is_not_simple():
    """中心の共形因子が大きいと軸上の測地線は時間上限内に出られない"""
    well = conformal([(6.0, 2.0, 0.0, 0.0)], tag="well")
    rep = check_simplicity(well, ray_count=2, fan_count=1)
    assert rep.trapped
    assert not rep.simple
    assert "exit" in rep.diagnostic
    assert rep.to_dict()["simple"] is False
