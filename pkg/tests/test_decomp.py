# -*- coding: utf-8 -*-
"""
tests/test_decomp.py

src/transform/decomp.py のソレノイダル分解・ゲージ正規化・ポテンシャル復元。
"""
from __future__ import annotations

import numpy as np
import pytest

from src.errors import InputError, SolverError
from src.fields.random_fields import (
    one_form_field,
    potential_field,
    random_one_form,
    random_tensor_field,
)
from src.fields.tensorfield import (
    Grid,
    OneFormField,
    SymTensor2Field,
    l2_inner,
    l2_norm,
    sym_diff,
)
from src.geometry.charts import semigeodesic_chart
from src.geometry.metric import BumpSet
from src.transform.decomp import (
    decompose,
    gauge_normalize_boundary,
    gauge_normalize_global,
    laplacian_s_solve,
    projection_continuity,
    recover_potential,
    solenoidal_projector,
    weak_divergence,
    weak_divergence_residual,
)
from src.transform.xray import build_inflow_grid, xray_forward


def _random_field(grid, seed, **kw):
    f = random_tensor_field(grid, np.random.default_rng(seed), **kw)
    return f.with_values(f.values)


def _interior_form(grid, seed):
    """境界層で 0 の離散 1-形式。"""
    vals = np.random.default_rng(seed).standard_normal((grid.N, grid.N, 2))
    return OneFormField(grid, vals * grid.interior()[..., None])


# ================================================
# グループ1: Δˢ と分解
# ================================================

def test_laplacian_of_zero(conf, grid16):
    u = laplacian_s_solve(conf, OneFormField.zeros(grid16))
    assert u.max_abs() == 0.0


def test_laplacian_is_linear(conf, grid32):
    h1 = weak_divergence(conf, _random_field(grid32, 1))
    h2 = weak_divergence(conf, _random_field(grid32, 2))
    u1 = laplacian_s_solve(conf, h1)
    u2 = laplacian_s_solve(conf, h2)
    u12 = laplacian_s_solve(conf, h1 + 2.0 * h2)
    scale = (u1 + 2.0 * u2).max_abs()
    assert np.max(np.abs(u12.values - (u1 + 2.0 * u2).values)) <= 1e-4 * scale


def test_decompose_identity(conf, grid32):
    f = _random_field(grid32, 3)
    dec = decompose(conf, f)
    assert dec.residual <= 1e-7
    assert dec.f_s.values + dec.potential(conf).values == pytest.approx(f.values, abs=1e-12)
    assert np.all(dec.v.values[grid32.boundary_layer()] == 0.0)


def test_decompose_discrete_potential(conf_pair, grid32):
    """f = dw（w は内部節点に台）なら f^s ≈ 0 かつ v = w"""
    w = _interior_form(grid32, 4)
    f = sym_diff(conf_pair, w)
    dec = decompose(conf_pair, f)
    assert dec.f_s.max_abs() <= 1e-4 * f.max_abs()
    assert np.max(np.abs(dec.v.values - w.values)) <= 1e-4 * w.max_abs()


def test_decompose_smooth_potential(conf):
    grid = Grid(64, conf.domain)
    f = potential_field(conf, grid, random_one_form(np.random.default_rng(5)))
    dec = decompose(conf, f)
    assert l2_norm(conf, dec.f_s) <= 2e-2 * l2_norm(conf, f)


def test_solenoidal_part_is_idempotent(conf, grid32):
    dec = decompose(conf, _random_field(grid32, 6))
    again = decompose(conf, dec.f_s)
    assert again.v.max_abs() <= 1e-4 * dec.v.max_abs()
    assert np.max(np.abs(again.f_s.values - dec.f_s.values)) <= 1e-4 * dec.f_s.max_abs()


def test_solenoidal_part_is_orthogonal_to_potentials(conf_pair, grid32):
    fs = decompose(conf_pair, _random_field(grid32, 7)).f_s
    dw = sym_diff(conf_pair, _interior_form(grid32, 8))
    assert abs(l2_inner(conf_pair, fs, dw)) <= 1e-5 * l2_norm(conf_pair, fs) * l2_norm(conf_pair, dw)
    assert weak_divergence_residual(conf_pair, fs) <= 1e-6


def test_projector_matches_decompose(conf, grid32):
    f = _random_field(grid32, 9)
    S = solenoidal_projector(conf, grid32)
    sf = S(f.vector())
    assert np.max(np.abs(S(sf) - sf)) <= 1e-8 * np.max(np.abs(sf))
    assert np.max(np.abs(sf - decompose(conf, f).f_s.vector())) <= 1e-4 * np.max(np.abs(sf))


def test_decompose_rejects_outer_support(conf, grid16):
    with pytest.raises(InputError):
        decompose(conf, SymTensor2Field.zeros(grid16, support="outer"))


def test_solver_error_keeps_history(conf, grid32):
    with pytest.raises(SolverError) as exc:
        decompose(conf, _random_field(grid32, 10), maxiter=1)
    assert len(exc.value.history) >= 1


def test_projection_continuity_slope(flat, grid32):
    bumps = BumpSet(((1.0, 0.4, 0.1, 0.0, 0.0, 1.0),))
    df, slope = projection_continuity(flat, bumps, _random_field(grid32, 11))
    assert list(df.columns) == ["eps", "c1_gap", "relative_change"]
    assert 0.8 <= slope <= 1.2


# ================================================
# グループ2: ゲージ正規化
# ================================================

def test_boundary_gauge_kills_normal_components(conf):
    grid = Grid(64, conf.domain)
    f = random_tensor_field(grid, np.random.default_rng(12), radius=1.05)
    res = gauge_normalize_boundary(conf, f)
    assert res.collar_residual <= 1e-3
    # v|∂Ω = 0 なので If̃ = If
    inflow = build_inflow_grid(conf, 16, 16)
    a = xray_forward(conf, f.with_values(f.values), inflow)
    b = xray_forward(conf, res.f_tilde, inflow)
    assert (a - b).max_abs() <= 1e-2 * a.max_abs()


def test_boundary_gauge_of_interior_field(conf, grid32):
    """コラーで 0 の f はそのまま"""
    f = random_tensor_field(grid32, np.random.default_rng(13), radius=0.6)
    res = gauge_normalize_boundary(conf, f)
    assert res.v.max_abs() == pytest.approx(0.0, abs=1e-12)
    assert res.f_tilde.values == pytest.approx(f.values, abs=1e-12)


def test_global_gauge_of_zero(conf, grid16):
    res = gauge_normalize_global(conf, SymTensor2Field.zeros(grid16))
    assert res.v_sharp.max_abs() == 0.0
    assert res.max_fin == 0.0


def test_global_gauge_kills_normal_components(conf, grid32):
    res = gauge_normalize_global(semigeodesic_chart(conf), random_tensor_field(grid32, np.random.default_rng(14)))
    assert res.max_fin <= 1e-3
    assert res.band.shape == (32, 32)


# ================================================
# グループ3: ポテンシャル復元
# ================================================

def _recovered(spec, grid, center, radius, seed):
    form = random_one_form(np.random.default_rng(seed), center=center, radius=radius)
    f = potential_field(spec, grid, form)
    v = recover_potential(semigeodesic_chart(spec), f, SymTensor2Field.zeros(grid))
    return form, v


def test_recover_potential(conf):
    grid = Grid(64, conf.domain)
    form, v = _recovered(conf, grid, (0.0, 0.0), 0.8, 15)
    exact = one_form_field(grid, form)
    m = grid.radius_map <= 0.9
    assert np.max(np.abs(v.values[m] - exact.values[m])) <= 1e-3 * exact.max_abs()


def test_recovered_potential_support(conf):
    """supp dw ⊂ K なら復元した v は K の外で 0"""
    grid = Grid(64, conf.domain)
    _, v = _recovered(conf, grid, (0.2, 0.1), 0.3, 16)
    d = np.hypot(grid.points[..., 0] - 0.2, grid.points[..., 1] - 0.1)
    far = (d > 0.4) & grid.mask
    assert np.max(np.abs(v.values[far])) <= 1e-2 * v.max_abs()


def test_recover_potential_of_solenoidal(conf, grid32):
    f = random_tensor_field(grid32, np.random.default_rng(17))
    v = recover_potential(conf, f, f)
    assert v.max_abs() == 0.0
