# -*- coding: utf-8 -*-
"""
tests/test_geodesic.py

src/geometry/geodesic.py の測地流・exp/log・境界距離・ヤコビアン。
"""
from __future__ import annotations

from math import gcd

import numpy as np
import pytest
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra

from src.errors import DomainError, InputError
from src.geometry.geodesic import (
    PhasePoint,
    boundary_distance,
    distance_table,
    energy_drift,
    exp_map,
    flow,
    jacobi_determinant,
    log_map,
)
from src.geometry.metric import conformal

LENS = ((0.5, 8.0, 0.0, 0.0),)


# ================================================
# グループ1: flow
# ================================================

def test_flow_euclidean_chord(flat):
    path = flow(flat, PhasePoint(np.array([-1.0, 0.0]), np.array([1.0, 0.0])), step=1e-2)
    assert path.exited
    assert path.exit_time == pytest.approx(2.0, abs=1e-10)
    assert path.exit_point == pytest.approx(np.array([1.0, 0.0]), abs=1e-10)


def test_flow_conserves_energy(conf_pair):
    p0 = PhasePoint.from_angle(conf_pair, [-1.0, 0.0], 0.3)
    assert p0.energy(conf_pair) == pytest.approx(0.5)
    path = flow(conf_pair, p0, step=5e-3)
    assert energy_drift(conf_pair, path) <= 1e-6


def test_flow_exit_matches_half_step(conf):
    p0 = PhasePoint.from_angle(conf, [-1.0, 0.0], 0.3)
    coarse = flow(conf, p0, step=1e-2)
    fine = flow(conf, p0, step=5e-3)
    assert np.linalg.norm(coarse.exit_point - fine.exit_point) <= 1e-5
    assert coarse.exit_time == pytest.approx(fine.exit_time, abs=1e-5)


def test_flow_stops_at_t_max(flat):
    path = flow(flat, PhasePoint(np.array([0.0, 0.0]), np.array([0.0, 1.0])), t_max=0.25, step=1e-2)
    assert not path.exited
    assert path.exit_time == pytest.approx(0.25, abs=1e-12)


def test_flow_time_reversal(conf_pair):
    """τ だけ進めて ξ を反転し、τ だけ戻ると出発点に戻る"""
    p0 = PhasePoint.from_angle(conf_pair, [0.1, -0.2], 0.7)
    fwd = flow(conf_pair, p0, t_max=0.6, step=5e-3)
    assert not fwd.exited
    back = flow(conf_pair, PhasePoint(fwd.x[-1], -fwd.xi[-1]), t_max=0.6, step=5e-3)
    assert back.x[-1] == pytest.approx(p0.x, abs=1e-6)
    assert back.xi[-1] == pytest.approx(-p0.xi, abs=1e-6)


# ================================================
# グループ2: exp / log
# ================================================

def test_exp_map_euclidean(flat):
    x = np.array([0.1, -0.3])
    v = np.array([0.4, 0.25])
    assert exp_map(flat, x, v) == pytest.approx(x + v, abs=1e-10)
    assert exp_map(flat, x, np.zeros(2)) == pytest.approx(x, abs=0.0)


def test_exp_map_leaves_outer_disk(flat):
    with pytest.raises(DomainError):
        exp_map(flat, [0.0, 0.0], [2.0, 0.0])


def test_exp_log_round_trip(conf_pair):
    x = np.array([0.1, -0.2])
    v = np.array([0.3, 0.2])
    y = exp_map(conf_pair, x, v)
    assert log_map(conf_pair, x, y) == pytest.approx(v, abs=1e-5)


# ================================================
# グループ3: 境界距離
# ================================================

def test_boundary_distance_euclidean(flat):
    x = flat.domain.boundary_point(0.4)
    y = flat.domain.boundary_point(2.5)
    rho, xi0, xi1 = boundary_distance(flat, x, y)
    assert rho == pytest.approx(np.linalg.norm(x - y), abs=1e-8)
    # ξ_init は y − x 方向の単位余ベクトル
    assert xi0 == pytest.approx((y - x) / np.linalg.norm(y - x), abs=1e-8)
    assert xi1 == pytest.approx(xi0, abs=1e-8)


def test_boundary_distance_same_point(flat):
    x = flat.domain.boundary_point(1.0)
    rho, _, _ = boundary_distance(flat, x, x)
    assert rho == 0.0


def test_boundary_distance_symmetric(conf_pair):
    x = conf_pair.domain.boundary_point(0.3)
    y = conf_pair.domain.boundary_point(2.9)
    a, _, _ = boundary_distance(conf_pair, x, y)
    b, _, _ = boundary_distance(conf_pair, y, x)
    assert a == pytest.approx(b, abs=1e-6)


def _g_length(spec, x, xi):
    return np.sqrt(np.einsum("...i,...ij,...j->...", xi, spec.inverse(x), xi))


def test_initial_covectors_have_unit_length(conf_pair):
    x = conf_pair.domain.boundary_point(0.3)
    y = conf_pair.domain.boundary_point(2.9)
    _, xi0, _ = boundary_distance(conf_pair, x, y)
    assert _g_length(conf_pair, x, xi0) == pytest.approx(1.0, abs=1e-8)

    table = distance_table(conf_pair, 8)
    off = ~np.eye(8, dtype=bool)
    starts = np.broadcast_to(conf_pair.domain.boundary_point(table.angles)[:, None, :], (8, 8, 2))
    lengths = _g_length(conf_pair, starts[off], table.xi_init[off])
    assert lengths == pytest.approx(np.ones(56), abs=1e-8)


def test_boundary_distance_rejects_interior_point(flat):
    with pytest.raises(DomainError):
        boundary_distance(flat, [0.5, 0.0], [1.0, 0.0])


def _graph_distance(phi_spec, src, dst, n=161, reach=5):
    """一様格子上の (2reach+1)² 近傍グラフ（辺長は中点の計量）で最短路。"""
    xs = np.linspace(-1.0, 1.0, n)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    inside = X ** 2 + Y ** 2 <= 1.0 + 1e-12
    ids = -np.ones((n, n), dtype=int)
    ids[inside] = np.arange(int(inside.sum()))
    rows, cols, vals = [], [], []
    for dx in range(-reach, reach + 1):
        for dy in range(-reach, reach + 1):
            if (dx, dy) == (0, 0) or gcd(abs(dx), abs(dy)) != 1:
                continue
            i0, i1 = max(0, -dx), min(n, n - dx)
            j0, j1 = max(0, -dy), min(n, n - dy)
            a = ids[i0:i1, j0:j1]
            b = ids[i0 + dx:i1 + dx, j0 + dy:j1 + dy]
            ok = (a >= 0) & (b >= 0)
            mid = np.stack([X[i0:i1, j0:j1] + 0.5 * dx * (xs[1] - xs[0]),
                            Y[i0:i1, j0:j1] + 0.5 * dy * (xs[1] - xs[0])], axis=-1)[ok]
            d = np.array([dx, dy]) * (xs[1] - xs[0])
            g = phi_spec.tensor(mid)
            rows.append(a[ok])
            cols.append(b[ok])
            vals.append(np.sqrt(np.einsum("i,mij,j->m", d, g, d)))
    G = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(int(inside.sum()),) * 2)
    pick = lambda p: ids[int(round((p[0] + 1.0) / (xs[1] - xs[0]))),  # noqa: E731
                         int(round((p[1] + 1.0) / (xs[1] - xs[0])))]
    return float(dijkstra(G, directed=True, indices=pick(src))[pick(dst)])


@pytest.mark.slow
def test_boundary_distance_matches_graph_oracle(conf_pair):
    x = np.array([0.0, -1.0])
    y = np.array([0.0, 1.0])
    rho, _, _ = boundary_distance(conf_pair, x, y)
    d_graph = _graph_distance(conf_pair, x, y, n=401)
    # グラフ最短路は連続の最短路を（離散化誤差を除き）下回らない
    assert d_graph >= rho * (1.0 - 1e-3)
    assert d_graph == pytest.approx(rho, rel=1e-3)


# ================================================
# グループ4: 距離表
# ================================================

def test_distance_table_euclidean(flat):
    table = distance_table(flat, 16)
    dth = np.abs(table.angles[:, None] - table.angles[None, :])
    assert table.rho == pytest.approx(2.0 * np.sin(dth / 2.0), abs=1e-8)
    assert np.all(np.diag(table.rho) == 0.0)
    assert table.symmetry_defect() <= 1e-6
    rho2, cov = table.to_frames()
    assert rho2.shape == (16, 17)
    assert len(cov) == 256


def test_distance_table_needs_enough_samples(flat):
    with pytest.raises(InputError):
        distance_table(flat, 4)


# ================================================
# グループ5: ヤコビアン
# ================================================

def test_jacobi_euclidean_is_t(flat):
    prof = jacobi_determinant(flat, PhasePoint(np.array([-1.0, 0.0]), np.array([1.0, 0.0])), step=1e-2)
    assert prof.det == pytest.approx(prof.t, abs=1e-10)
    assert not prof.conjugate


def test_jacobi_simple_conformal_positive(conf):
    prof = jacobi_determinant(conf, PhasePoint.from_angle(conf, [-1.0, 0.0], 0.2), step=1e-2)
    assert np.all(prof.det[prof.t > 0] > 0)
    assert not prof.conjugate


def test_jacobi_lens_has_conjugate_point():
    lens = conformal(LENS, tag="lens")
    prof = jacobi_determinant(lens, PhasePoint.from_angle(lens, [-1.0, 0.0], 0.0), step=1e-2)
    assert prof.conjugate
