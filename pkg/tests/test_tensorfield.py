# -*- coding: utf-8 -*-
"""
tests/test_tensorfield.py

src/fields/tensorfield.py の格子・場・差分作用素と src/fields/serialize.py。
"""
from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from src.errors import InputError
from src.fields.random_fields import one_form_field, random_one_form, sym_diff_rule
from src.fields.serialize import from_bytes, read_field, to_bytes, write_field, write_field_csv
from src.fields.tensorfield import (
    Grid,
    OneFormField,
    ScalarField,
    SymTensor2Field,
    divergence,
    l2_inner,
    l2_norm,
    lower_indices,
    node_weights,
    raise_indices,
    sym_diff,
)


def _linear_form(grid, fx, fy):
    return OneFormField.from_rule(grid, lambda p: np.stack([fx(p), fy(p)], axis=1))


# ================================================
# グループ1: 格子と場
# ================================================

def test_grid_too_small():
    with pytest.raises(InputError):
        Grid(4)


def test_values_outside_support_are_zero(grid16):
    f = SymTensor2Field(grid16, np.ones((16, 16, 3)))
    assert np.all(f.values[~grid16.mask] == 0.0)
    assert np.all(f.values[grid16.mask] == 1.0)


def test_shape_mismatch(grid16):
    with pytest.raises(InputError):
        SymTensor2Field(grid16, np.ones((16, 16, 2)))
    with pytest.raises(InputError):
        SymTensor2Field.zeros(grid16) + SymTensor2Field.zeros(Grid(32))


def test_with_values_drops_rule(grid16):
    f = ScalarField.from_rule(grid16, lambda p: p[:, :1])
    assert f.rule is not None
    assert f.with_values(f.values).rule is None


def test_bilinear_sample_exact_for_linear(grid32):
    f = ScalarField.from_rule(grid32, lambda p: (p[:, 0] + 2.0 * p[:, 1])[:, None])
    pts = np.array([[0.13, -0.27], [-0.4, 0.05]])
    expected = pts[:, 0] + 2.0 * pts[:, 1]
    assert f.sample(pts)[:, 0] == pytest.approx(expected, abs=1e-12)
    assert f.with_values(f.values).sample(pts)[:, 0] == pytest.approx(expected, abs=1e-12)
    # 台の外は 0
    assert f.sample(np.array([[1.05, 0.0]]))[0, 0] == 0.0


# ================================================
# グループ2: 対称微分と発散
# ================================================

def test_sym_diff_of_linear_form(flat, grid32):
    v = _linear_form(grid32, lambda p: p[:, 0], lambda p: p[:, 1])
    dv = sym_diff(flat, v)
    m = grid32.mask
    assert dv.values[m] == pytest.approx(np.tile([1.0, 0.0, 1.0], (int(m.sum()), 1)), abs=1e-12)


def test_sym_diff_of_rotation_vanishes(flat, grid32):
    v = _linear_form(grid32, lambda p: p[:, 1], lambda p: -p[:, 0])
    assert sym_diff(flat, v).max_abs() <= 1e-12


def test_divergence_of_quadratic(flat, grid32):
    """f = (x², xy, y²) なら δf = (3x, 3y)"""
    f = SymTensor2Field.from_rule(
        grid32, lambda p: np.stack([p[:, 0] ** 2, p[:, 0] * p[:, 1], p[:, 1] ** 2], axis=1))
    d = divergence(flat, f)
    inner = grid32.interior()
    pts = grid32.points[inner]
    assert d.values[inner] == pytest.approx(3.0 * pts, abs=1e-10)


def test_sym_diff_matches_closed_form(conf):
    grid = Grid(64)
    form = random_one_form(np.random.default_rng(3))
    dv = sym_diff(conf, one_form_field(grid, form))
    exact = SymTensor2Field.from_rule(grid, sym_diff_rule(conf, form))
    inner = grid.interior()
    err = np.max(np.abs(dv.values[inner] - exact.values[inner]))
    assert err <= 0.1 * exact.max_abs()


def test_sym_diff_of_zero(conf, grid16):
    assert sym_diff(conf, OneFormField.zeros(grid16)).max_abs() == 0.0


@given(st.floats(min_value=-3.0, max_value=3.0), st.integers(min_value=0, max_value=2**16))
def test_operators_are_linear(conf, grid16, a, seed):
    rng = np.random.default_rng(seed)
    v = OneFormField(grid16, rng.standard_normal((16, 16, 2)))
    w = OneFormField(grid16, rng.standard_normal((16, 16, 2)))
    lhs = sym_diff(conf, v + a * w).values
    rhs = (sym_diff(conf, v) + a * sym_diff(conf, w)).values
    assert lhs == pytest.approx(rhs, abs=1e-9)
    f = sym_diff(conf, v)
    assert divergence(conf, a * f).values == pytest.approx(a * divergence(conf, f).values, abs=1e-9)


# ================================================
# グループ3: 内積と添字の上げ下げ
# ================================================

def test_l2_norm_of_identity_is_disk_area(flat):
    grid = Grid(64)
    eye = SymTensor2Field(grid, np.broadcast_to([1.0, 0.0, 1.0], (64, 64, 3)).copy())
    # ⟨δ, δ⟩ = 2
    assert l2_inner(flat, eye, eye) == pytest.approx(2.0 * np.pi, rel=2e-2)


def test_l2_norm_of_zero(conf, grid16):
    assert l2_norm(conf, SymTensor2Field.zeros(grid16)) == 0.0


def test_node_weights_are_trapezoidal(flat):
    """Ω₁ の台は格子の縁に触れる: 縁の節点は ½·dx²"""
    grid = Grid(33, flat.domain)
    w = node_weights(flat, grid, "outer").reshape(33, 33)
    assert w[0, 16] == pytest.approx(0.5 * grid.dx ** 2)
    assert w[16, 16] == pytest.approx(grid.dx ** 2)
    inner = node_weights(flat, grid, "inner").reshape(33, 33)
    assert inner[grid.mask] == pytest.approx(np.full(int(grid.mask.sum()), grid.dx ** 2))


def test_raise_conformal_scales(conf, grid16):
    """g = e^{2φ}δ なら f^ij = e^{−4φ} f_ij"""
    rng = np.random.default_rng(0)
    f = SymTensor2Field(grid16, rng.standard_normal((16, 16, 3)))
    up = raise_indices(conf, f)
    phi, _, _ = conf.conformal_factor(grid16.points.reshape(-1, 2))
    scale = np.exp(-4.0 * phi).reshape(16, 16, 1)
    assert up.contravariant
    assert up.values == pytest.approx(scale * f.values, abs=1e-12)


def test_raise_lower_round_trip(conf_pair, grid16):
    rng = np.random.default_rng(1)
    f = SymTensor2Field(grid16, rng.standard_normal((16, 16, 3)))
    back = lower_indices(conf_pair, raise_indices(conf_pair, f))
    assert not back.contravariant
    assert back.values == pytest.approx(f.values, abs=1e-12)
    # 反変のまま内積に渡しても同じ値
    assert l2_inner(conf_pair, raise_indices(conf_pair, f), f) == pytest.approx(
        l2_inner(conf_pair, f, f), rel=1e-12)


# ================================================
# グループ4: 入出力
# ================================================

def test_tt2f_keeps_flags(tmp_path, grid16):
    f = SymTensor2Field(grid16, np.arange(16 * 16 * 3, dtype=float).reshape(16, 16, 3),
                        contravariant=True)
    g = read_field(write_field(f, tmp_path / "f.tt2f"))
    assert from_bytes(to_bytes(f)).contravariant
    assert isinstance(g, SymTensor2Field)
    assert g.contravariant
    assert g.grid == grid16
    assert np.array_equal(g.values, f.values)


def test_tt2f_bad_magic():
    with pytest.raises(InputError):
        from_bytes(b"XXXX" + bytes(64))


def test_field_csv(tmp_path, grid16):
    f = OneFormField(grid16, np.ones((16, 16, 2)))
    g = read_field(write_field_csv(f, tmp_path / "v.csv"))
    assert isinstance(g, OneFormField)
    assert np.array_equal(g.values, f.values)
