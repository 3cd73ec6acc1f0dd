# -*- coding: utf-8 -*-
"""
tests/test_boundary.py

src/rigidity/boundary.py の ε 走査・境界ジェット復元・距離関数の線形化。
"""
from __future__ import annotations

import numpy as np
import pytest

from src.errors import InputError
from src.geometry.metric import BumpSet, collar_jet, conformal
from src.rigidity.boundary import (
    conformal_jet_oracle,
    default_eps_grid,
    epsilon_scan,
    epsilon_scans,
    even_fit,
    jet_constant,
    jet_recover,
    linearize_distance,
    remainder_scaling,
)
from src.transform.xray import build_inflow_grid

ANGLES8 = 2.0 * np.pi * np.arange(8) / 8
JET_COEFFS = np.array([[0.1, 0.05, 0.0], [0.2, 0.0, 0.0]])
INTERIOR_BUMP = BumpSet(((1.0, 0.4, 0.1, 0.0, 0.0, 1.0),))


# ================================================
# グループ1: 補助関数
# ================================================

def test_default_eps_grid():
    assert default_eps_grid() == pytest.approx([0.32, 0.16, 0.08, 0.04, 0.02], rel=1e-15)
    with pytest.raises(InputError):
        default_eps_grid(0.0)


@pytest.mark.parametrize("k, expected", [(0, 1.0), (1, 1.0 / 12.0), (2, 1.0 / 120.0)])
def test_jet_constant(k, expected):
    assert jet_constant(k) == pytest.approx(expected, rel=1e-12)


def test_jet_constant_negative():
    with pytest.raises(InputError):
        jet_constant(-1)


def test_even_fit_recovers_polynomial():
    eps = default_eps_grid()
    vals = 2.0 * eps ** 2 + 3.0 * eps ** 4 - eps ** 6
    assert even_fit(eps, vals) == pytest.approx([2.0, 3.0, -1.0, 0.0], abs=1e-6)


# ================================================
# グループ2: ε 走査
# ================================================

def test_scan_of_identical_metrics(conf):
    scan = epsilon_scan(conf, conf, 0.7)
    assert np.all(scan.difference == 0.0)


def test_scan_of_scaled_metric(flat):
    """g₁ = e^{2c}δ なら ρ₁² − ρ₀² = (e^{2c} − 1)ρ₀²"""
    c = 0.1
    scaled = conformal([(c, 0.0, 0.0, 0.0)], tag="scaled")
    scan = epsilon_scan(flat, scaled, 1.3, p=1.5)
    chord2 = (2.0 * np.sin(0.5 * 1.5 * scan.eps)) ** 2
    assert scan.even_difference == pytest.approx((np.exp(2 * c) - 1.0) * chord2, rel=1e-6)
    assert 1.9 <= scan.leading_exponent() <= 2.1
    assert scan.coefficients()[0] == pytest.approx((np.exp(2 * c) - 1.0) * 1.5 ** 2, rel=1e-3)


def test_scan_accepts_boundary_point(flat, conf):
    a = epsilon_scan(flat, conf, flat.domain.boundary_point(0.4))
    assert a.x_angle == pytest.approx(0.4, abs=1e-12)


def test_direction_range(flat, conf):
    with pytest.raises(InputError):
        epsilon_scans(flat, conf, [0.0], directions=[3.0])
    with pytest.raises(InputError):
        epsilon_scans(flat, conf, [0.0], directions=[0.1])


def test_scan_frame_and_metadata(flat, conf):
    scan = epsilon_scan(flat, conf, 0.0, path_check=True)
    df = scan.to_frame()
    assert {"eps", "sign", "rho2_0", "rho2_1", "difference", "path_I0", "path_I1"} <= set(df.columns)
    assert len(df) == 10
    meta = scan.metadata()
    assert meta["eps_levels"] == 5
    assert meta["metric1"] == conf.name


def test_path_integrals_agree(flat, conf_pair):
    """k = 0 では g₀・g₁ どちらの測地線で積分しても ε² 係数は一致する"""
    scan = epsilon_scan(flat, conf_pair, 0.9, path_check=True)
    c0, c1 = scan.path_coefficients()
    assert c0 == pytest.approx(c1, rel=5e-2)


def test_path_coefficients_need_path_check(flat, conf):
    with pytest.raises(InputError):
        epsilon_scan(flat, conf, 0.0).path_coefficients()


# ================================================
# グループ3: ジェット復元
# ================================================

def test_conformal_oracle_constant_factor():
    spec = conformal([(0.1, 0.0, 0.0, 0.0)])
    oracle = conformal_jet_oracle(spec, ANGLES8)
    assert oracle[0] == pytest.approx(np.full(8, np.exp(0.2) - 1.0), rel=1e-12)
    assert oracle[1] == pytest.approx(np.full(8, 2.0 - 2.0 * np.exp(0.1)), rel=1e-12)


def test_conformal_oracle_needs_conformal(flat):
    with pytest.raises(InputError):
        conformal_jet_oracle(flat, ANGLES8)


def test_jet_order0_conformal(flat, conf_pair):
    jet = jet_recover(epsilon_scans(flat, conf_pair, ANGLES8), order=0)
    oracle = conformal_jet_oracle(conf_pair, ANGLES8)
    assert jet.order == 0
    assert jet.coefficient(0) == pytest.approx(oracle[0], rel=5e-2)
    assert jet.gamma0 == pytest.approx(np.ones(8), abs=1e-3)


def test_jet_order0_collar(flat):
    spec1 = collar_jet(flat, 0.15, JET_COEFFS)
    jet = jet_recover(epsilon_scans(flat, spec1, ANGLES8), order=0)
    assert jet.coefficient(0) == pytest.approx(0.1 + 0.05 * np.cos(ANGLES8), rel=5e-2)
    with pytest.raises(InputError):
        jet.coefficient(1)


def test_jet_frame(flat, conf):
    jet = jet_recover(epsilon_scans(flat, conf, ANGLES8[:4]), order=0)
    df = jet.to_frame()
    assert list(df.columns) == ["boundary_angle", "order", "value", "gamma0", "gamma1"]
    assert jet.metadata()["order"] == 0


def test_jet_scans_must_match(flat, conf):
    a = epsilon_scans(flat, conf, [0.0])
    b = epsilon_scans(flat, conf, [1.0], eps=[0.2, 0.1, 0.05, 0.025, 0.0125])
    with pytest.raises(InputError):
        jet_recover(a + b, order=0)
    with pytest.raises(InputError):
        jet_recover([], order=0)
    with pytest.raises(InputError):
        jet_recover(a, order=3)


def test_jet_order1_collar(flat):
    spec1 = collar_jet(flat, 0.15, JET_COEFFS)
    jet = jet_recover(epsilon_scans(flat, spec1, ANGLES8), order=1)
    assert jet.coefficient(1) == pytest.approx(np.full(8, 0.2), rel=1.5e-1)


def test_jet_order1_conformal(flat, conf_pair):
    angles = 2.0 * np.pi * np.arange(16) / 16
    jet = jet_recover(epsilon_scans(flat, conf_pair, angles), order=1)
    oracle = conformal_jet_oracle(conf_pair, angles)
    assert jet.coefficient(1) == pytest.approx(oracle[1], rel=1.5e-1)


# ================================================
# グループ4: 線形化
# ================================================

def test_linearization_of_zero_perturbation(flat):
    inflow = build_inflow_grid(flat, 8, 8)
    tab = linearize_distance(flat, INTERIOR_BUMP.scaled(0.0), inflow)
    assert tab.max_residual() == 0.0
    assert tab.bound_ratio() == 0.0


def test_linearization_residual_is_small(conf):
    inflow = build_inflow_grid(conf, 8, 8)
    tab = linearize_distance(conf, INTERIOR_BUMP.scaled(0.02), inflow)
    assert tab.max_residual() <= 1e-1 * np.max(np.abs(tab.frame["half_If"]))
    assert np.isfinite(tab.bound_ratio())
    assert len(tab.frame) == 64


def test_remainder_is_quadratic(flat):
    inflow = build_inflow_grid(flat, 16, 8)
    df, slope = remainder_scaling(flat, INTERIOR_BUMP, inflow)
    assert list(df["eps"]) == [0.01, 0.02, 0.04, 0.08]
    assert 1.8 <= slope <= 2.2


def test_linearization_rejects_boundary_bump(flat):
    inflow = build_inflow_grid(flat, 8, 8)
    with pytest.raises(InputError):
        linearize_distance(flat, BumpSet(((0.1, 0.3, 0.8, 0.0, 0.0, 1.0),)), inflow)
    with pytest.raises(InputError):
        linearize_distance(flat, np.eye(2), inflow)
    with pytest.raises(InputError):
        linearize_distance(flat, INTERIOR_BUMP, build_inflow_grid(flat, 8, 8, outer=True))
