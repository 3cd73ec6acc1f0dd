# -*- coding: utf-8 -*-
"""
tests/test_charts.py

src/geometry/charts.py の境界法線座標と半測地座標。
"""
from __future__ import annotations

import numpy as np
import pytest
from scipy.integrate import quad

from src.errors import ChartError
from src.geometry.charts import boundary_normal_chart, semigeodesic_chart


def _collar_points(radii, angles):
    R, T = np.meshgrid(radii, angles, indexing="ij")
    return np.stack([R * np.cos(T), R * np.sin(T)], axis=-1).reshape(-1, 2)


# ================================================
# グループ1: 境界法線座標
# ================================================

def test_euclidean_boundary_normal_metric(flat):
    chart = boundary_normal_chart(flat)
    g11, g1n, gnn = chart.metric_table()
    s = chart.s[None, :]
    assert g11 == pytest.approx(np.broadcast_to((1.0 - s) ** 2, g11.shape), abs=1e-10)
    assert np.max(np.abs(g1n)) <= 1e-10
    assert gnn == pytest.approx(np.ones_like(gnn), abs=1e-10)
    assert chart.perimeter == pytest.approx(2.0 * np.pi, rel=1e-10)


def test_euclidean_second_fundamental_form(flat):
    _, form = boundary_normal_chart(flat).second_fundamental_form()
    assert form == pytest.approx(np.ones_like(form), abs=1e-8)


def test_christoffel_normal_components_vanish(conf):
    gam = boundary_normal_chart(conf).christoffel_table()
    # 添字 1 = x^n
    assert np.max(np.abs(gam[..., 0, 1, 1])) <= 1e-4      # Γ^{x'}_nn
    assert np.max(np.abs(gam[..., 1, 1, 1])) <= 1e-4      # Γ^n_nn
    assert np.max(np.abs(gam[..., 1, 0, 1])) <= 1e-4      # Γ^n_{x'n}


def test_normal_coordinate_is_boundary_distance(conf):
    """回転対称な共形計量では x^n = ∫_r^R e^{φ(t)} dt"""
    chart = boundary_normal_chart(conf)
    pts = _collar_points(np.array([0.9, 0.95, 0.99]), np.linspace(0.1, 6.0, 7))
    _, xn = chart.to_chart(pts)
    r = np.hypot(pts[:, 0], pts[:, 1])
    phi = lambda t: 0.05 * np.exp(-4.0 * t ** 2)  # noqa: E731
    expected = np.array([quad(lambda t: np.exp(phi(t)), ri, 1.0)[0] for ri in r])
    assert xn == pytest.approx(expected, abs=1e-5)


def test_boundary_chart_round_trip(conf_pair):
    chart = boundary_normal_chart(conf_pair)
    pts = _collar_points(np.array([0.88, 0.93, 0.98]), np.linspace(0.0, 6.0, 9))
    xp, xn = chart.to_chart(pts)
    assert chart.from_chart(xp, xn) == pytest.approx(pts, abs=1e-8)


def test_points_outside_collar_are_nan(flat):
    chart = boundary_normal_chart(flat)
    _, xn = chart.to_chart(np.array([[0.2, 0.1]]))
    assert np.isnan(xn[0])


def test_collar_too_wide(flat):
    with pytest.raises(ChartError):
        boundary_normal_chart(flat, collar=1.5)


# ================================================
# グループ2: 半測地座標
# ================================================

def test_semigeodesic_euclidean(flat):
    chart = semigeodesic_chart(flat)
    assert chart.x0 == pytest.approx(np.array([0.0, -1.1]), abs=1e-15)
    check = chart.verify()
    assert check["max_g12"] <= 1e-4
    assert check["max_g22_minus_1"] <= 1e-4


def test_semigeodesic_conformal(conf):
    check = semigeodesic_chart(conf).verify()
    assert check["max_g12"] <= 1e-3
    assert check["max_g22_minus_1"] <= 1e-3


@pytest.mark.parametrize("name", ["flat", "conf"])
def test_semigeodesic_round_trip(name, request):
    spec = request.getfixturevalue(name)
    chart = semigeodesic_chart(spec)
    xs = np.linspace(-0.6, 0.6, 4)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    y = chart.to_chart(pts)
    assert chart.from_chart(y) == pytest.approx(pts, abs=1e-6)
