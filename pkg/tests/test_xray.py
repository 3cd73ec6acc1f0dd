# -*- coding: utf-8 -*-
"""
tests/test_xray.py

src/transform/xray.py の Γ₋ 測度・順変換・随伴・正規作用素・H̃ ノルム。
"""
from __future__ import annotations

import numpy as np
import pytest

from src.errors import InputError
from src.fields.random_fields import potential_field, random_one_form, random_tensor_field
from src.fields.tensorfield import Grid, SymTensor2Field, l2_inner, l2_norm
from src.transform.decomp import solenoidal_projector
from src.transform.xray import (
    Sinogram,
    boundary_partition,
    build_inflow_grid,
    htilde_norm,
    normal_composed,
    normal_kernel_points,
    normal_operator,
    xray_adjoint,
    xray_forward,
)


def _identity_rule(p):
    return np.tile([1.0, 0.0, 1.0], (len(p), 1))


def _smooth_sinogram(inflow):
    B, P = np.meshgrid(inflow.beta, inflow.psi, indexing="ij")
    return Sinogram(inflow, (1.0 + 0.5 * np.cos(B)) * np.cos(P) ** 2)


# ================================================
# グループ1: Γ₋ の測度
# ================================================

def test_inflow_mass_euclidean(flat):
    """∫ |ω·ν| dS_x dS_ω = 2π · ∫ cos ψ dψ = 4π"""
    inflow = build_inflow_grid(flat, 32, 32)
    assert inflow.total_mass == pytest.approx(4.0 * np.pi, rel=1e-2)


def test_inflow_points_inward(conf_pair):
    inflow = build_inflow_grid(conf_pair, 16, 16)
    assert np.all(inflow.omega_nu < 0)
    h = 0.5 * np.einsum("zwi,zwij,zwj->zw", inflow.omega,
                        np.linalg.inv(conf_pair.tensor(inflow.z)), inflow.omega)
    assert h == pytest.approx(np.full(inflow.shape, 0.5), rel=1e-12)


def test_inflow_needs_samples(flat):
    with pytest.raises(InputError):
        build_inflow_grid(flat, 2, 16)


def test_boundary_partition_sums_to_one():
    beta = np.linspace(0.0, 2.0 * np.pi, 100, endpoint=False)
    assert boundary_partition(beta).sum(axis=0) == pytest.approx(np.ones(100), abs=1e-12)


# ================================================
# グループ2: 順変換
# ================================================

def test_forward_of_zero(conf_pair, grid16):
    inflow = build_inflow_grid(conf_pair, 8, 8)
    assert xray_forward(conf_pair, SymTensor2Field.zeros(grid16), inflow).max_abs() == 0.0


def test_forward_of_identity_is_chord_length(flat, grid32):
    inflow = build_inflow_grid(flat, 8, 16)
    f = SymTensor2Field.from_rule(grid32, _identity_rule)
    sino = xray_forward(flat, f, inflow)
    chord = np.broadcast_to(2.0 * np.cos(inflow.psi), inflow.shape)
    assert sino.values == pytest.approx(chord, abs=1e-3)


def test_forward_annihilates_potentials(conf_pair, grid32):
    rng = np.random.default_rng(5)
    inflow = build_inflow_grid(conf_pair, 16, 16)
    pot = xray_forward(conf_pair, potential_field(conf_pair, grid32, random_one_form(rng)), inflow)
    ref = xray_forward(conf_pair, random_tensor_field(grid32, rng), inflow)
    assert pot.max_abs() <= 1e-4 * ref.max_abs()


def test_forward_rejects_other_metric(flat, conf, grid16):
    with pytest.raises(InputError):
        xray_forward(flat, SymTensor2Field.zeros(grid16), build_inflow_grid(conf, 8, 8))


def test_sinogram_mismatch(flat):
    a = _smooth_sinogram(build_inflow_grid(flat, 8, 8))
    b = _smooth_sinogram(build_inflow_grid(flat, 16, 8))
    with pytest.raises(InputError):
        a.inner(b)


def test_sinogram_frame(flat):
    frame = _smooth_sinogram(build_inflow_grid(flat, 8, 4)).to_frame()
    assert list(frame.columns) == ["boundary_angle", "direction_angle", "mu_weight", "value"]
    assert len(frame) == 32


# ================================================
# グループ3: 随伴と正規作用素
# ================================================

def test_adjoint_identity(conf, grid32):
    """⟨If, u⟩_{L²(Γ₋, μ)} = ⟨f, I*u⟩_{L²(Ω)}"""
    inflow = build_inflow_grid(conf, 32, 32)
    f = random_tensor_field(grid32, np.random.default_rng(2))
    f = f.with_values(f.values)
    u = _smooth_sinogram(inflow)
    lhs = xray_forward(conf, f, inflow).inner(u)
    rhs = l2_inner(conf, f, xray_adjoint(conf, u, grid32))
    assert lhs == pytest.approx(rhs, rel=1e-2)


def test_normal_operator_symmetric(conf, grid32):
    rng = np.random.default_rng(4)
    f = random_tensor_field(grid32, rng)
    h = random_tensor_field(grid32, rng)
    f, h = f.with_values(f.values), h.with_values(h.values)
    a = l2_inner(conf, normal_composed(conf, f, 32, 32), h)
    b = l2_inner(conf, f, normal_composed(conf, h, 32, 32))
    assert a == pytest.approx(b, rel=1e-2)


def test_normal_operator_energy(conf, grid32):
    """⟨Nf, f⟩_{L²(Ω)} = ‖If‖²_{L²(Γ₋, μ)}"""
    inflow = build_inflow_grid(conf, 32, 32)
    f = random_tensor_field(grid32, np.random.default_rng(3))
    sino = xray_forward(conf, f, inflow)
    energy = l2_inner(conf, normal_composed(conf, f, 32, 32), f)
    assert energy == pytest.approx(sino.inner(sino), rel=1e-2)


def test_normal_operator_annihilates_potentials(conf, grid32):
    rng = np.random.default_rng(7)
    pot = normal_composed(conf, potential_field(conf, grid32, random_one_form(rng)), 32, 32)
    ref = normal_composed(conf, random_tensor_field(grid32, rng), 32, 32)
    assert pot.max_abs() <= 1e-3 * ref.max_abs()


def test_normal_operator_ignores_potential_part(conf, grid32):
    """⟨h, NSf − Nf⟩ ≈ 0（S はソレノイダル射影）"""
    rng = np.random.default_rng(9)
    f = random_tensor_field(grid32, rng, radius=0.6)
    f = f.with_values(f.values)
    h = random_tensor_field(grid32, rng, radius=0.6)
    S = solenoidal_projector(conf, grid32)
    fs = SymTensor2Field.from_vector(grid32, S(f.vector()), "inner")
    Nf = normal_composed(conf, f, 32, 32)
    diff = normal_composed(conf, fs, 32, 32) - Nf
    assert abs(l2_inner(conf, h, diff)) <= 5e-2 * l2_norm(conf, h) * l2_norm(conf, Nf)


def test_unknown_route(flat, grid16):
    with pytest.raises(InputError):
        normal_operator(flat, SymTensor2Field.zeros(grid16), route="fourier")


def _kernel_vs_composed(spec, N, z_count):
    grid = Grid(N, spec.domain)
    f = random_tensor_field(grid, np.random.default_rng(8), radius=0.6)
    composed = normal_composed(spec, f, z_count, z_count)
    ij = np.array([[N // 2, N // 2], [N // 3, N // 2], [N // 2, 2 * N // 3]])
    pts = grid.points[ij[:, 0], ij[:, 1]]
    kernel, skipped = normal_kernel_points(spec, f, pts)
    assert skipped == 0
    ref = composed.values[ij[:, 0], ij[:, 1]]
    return np.max(np.abs(kernel - ref)) / composed.max_abs()


def test_kernel_matches_composed(conf):
    assert _kernel_vs_composed(conf, 32, 32) <= 5e-2


@pytest.mark.slow
def test_kernel_matches_composed_fine(conf):
    assert _kernel_vs_composed(conf, 64, 64) <= 2e-2


# ================================================
# グループ4: H̃ ノルム
# ================================================

@pytest.mark.parametrize("order", [1, 2])
def test_htilde_homogeneous(conf, grid32, order):
    f = random_tensor_field(grid32, np.random.default_rng(6), radius=0.95)
    base = htilde_norm(conf, f, order)
    assert base > 0
    assert htilde_norm(conf, -3.0 * f, order) == pytest.approx(3.0 * base, rel=1e-10)


def test_htilde_of_zero_and_bad_order(conf, grid32):
    assert htilde_norm(conf, SymTensor2Field.zeros(grid32)) == 0.0
    with pytest.raises(InputError):
        htilde_norm(conf, SymTensor2Field.zeros(grid32), order=3)
