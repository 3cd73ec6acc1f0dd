# -*- coding: utf-8 -*-
"""
src/transform/xray.py

測地線 X 線変換 I、その随伴 I*、正規作用素 N = I*I（合成とカーネルの 2 経路）、H̃ ノルム。

Γ₋ のパラメータ化
-----------------
(β, ψ) の直積格子。β は境界角、ψ ∈ (−π/2, π/2) は内向き方向の角で、
余ベクトル ω のユークリッド角は β + π + ψ。重み
    dμ = |ω·ν| dS_x dS_ω,  dS_x = √(t̂ᵀg t̂)·R dβ,  dS_ω = (det g)^{−1/2} / |ω0|²_{g*} dψ

Public API
----------
InflowGrid, Sinogram
build_inflow_grid(spec, z_count, w_count, outer=False)
xray_forward(spec, f, inflow), xray_adjoint(spec, u, grid)
normal_composed(spec, f), normal_kernel(spec, f, x), normal_operator(spec, f, route)
htilde_norm(spec, F, order)
forward_matrix, adjoint_matrix（疎行列・キャッシュ付き）
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Dict, Tuple

import numpy as np
import pandas as pd
import scipy.sparse as sp
from scipy.special import roots_legendre

from src.errors import InputError
from src.fields.tensorfield import (
    Grid,
    SymTensor2Field,
    _Field,
    bilinear_weights,
    contract,
    difference_matrices,
    h1_norm,
    lower_indices,
    raise_indices,
)
from src.geometry.charts import boundary_normal_chart
from src.geometry.geodesic import log_map_batch, march, march_chunked
from src.geometry.metric import MetricSpec, collar_cutoff, det2, inv2, unit_covector

logger = logging.getLogger(__name__)

# ================================================
# 定数
# ================================================

_DEFAULT_STEP = 1e-2
_DEFAULT_COUNT = 64
_RECORD_CHUNK = 1024
_HORIZON_FACTOR = 30.0

_NEAR_CELLS = 2.0          # |x − y| < 2·dx は極座標局所求積に置き換える
_POLAR_RADIAL = 6
_POLAR_ANGULAR = 32

_PARTITION_BUMPS = 8
_HTILDE_COLLAR = 0.09


def _quad(a, g, b):
    return np.einsum("...i,...ij,...j->...", a, g, b)


def _outer_compact(w: np.ndarray) -> np.ndarray:
    """ω_iω_j の上三角 (11, 12, 22)。"""
    return np.stack([w[..., 0] ** 2, w[..., 0] * w[..., 1], w[..., 1] ** 2], axis=-1)


def _raise_compact(spec: MetricSpec, x: np.ndarray, f: np.ndarray) -> np.ndarray:
    ginv = spec.inverse(x)
    full = np.empty(f.shape[:-1] + (2, 2))
    full[..., 0, 0] = f[..., 0]
    full[..., 0, 1] = full[..., 1, 0] = f[..., 1]
    full[..., 1, 1] = f[..., 2]
    up = np.einsum("...ik,...kl,...jl->...ij", ginv, full, ginv)
    return np.stack([up[..., 0, 0], up[..., 0, 1], up[..., 1, 1]], axis=-1)


# ================================================
# Γ₋ のサンプリング
# ================================================

@dataclass(eq=False)
class InflowGrid:
    spec: MetricSpec
    z_count: int
    w_count: int
    outer: bool
    beta: np.ndarray        # (Z,)
    psi: np.ndarray         # (W,)
    z: np.ndarray           # (Z, W, 2)
    omega: np.ndarray       # (Z, W, 2)  |ω|_g = 1
    omega_nu: np.ndarray    # (Z, W)     ω_i ν^i（負）
    dS_x: np.ndarray        # (Z,)
    dS_w: np.ndarray        # (Z, W)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.z_count, self.w_count

    @property
    def radius(self) -> float:
        d = self.spec.domain
        return d.outer_radius if self.outer else d.radius

    @property
    def weights(self) -> np.ndarray:
        return np.abs(self.omega_nu) * self.dS_x[:, None] * self.dS_w

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.weights))

    def rays(self) -> np.ndarray:
        """march 用の初期状態 (Z·W, 4)。"""
        return np.concatenate([self.z.reshape(-1, 2), self.omega.reshape(-1, 2)], axis=1)


@lru_cache(maxsize=16)
def build_inflow_grid(
    spec: MetricSpec,
    z_count: int = _DEFAULT_COUNT,
    w_count: int = _DEFAULT_COUNT,
    outer: bool = False,
) -> InflowGrid:
    """境界角 × 内向き方向角の直積格子と dμ 重み（outer=True で ∂Ω₁ 上）。"""
    if z_count < 4 or w_count < 4:
        raise InputError("inflow grid needs at least 4 boundary and 4 direction samples")
    dom = spec.domain
    R = dom.outer_radius if outer else dom.radius
    beta = 2.0 * np.pi * np.arange(z_count) / z_count
    dpsi = np.pi / w_count
    psi = -0.5 * np.pi + (np.arange(w_count) + 0.5) * dpsi

    zb = dom.c + R * np.stack([np.cos(beta), np.sin(beta)], axis=-1)      # (Z, 2)
    g = spec.tensor(zb)
    ginv = inv2(g)
    n = np.stack([np.cos(beta), np.sin(beta)], axis=-1)
    t = np.stack([-np.sin(beta), np.cos(beta)], axis=-1)
    nu = np.einsum("zij,zj->zi", ginv, n) / np.sqrt(_quad(n, ginv, n))[:, None]
    dS_x = R * np.sqrt(_quad(t, g, t)) * (2.0 * np.pi / z_count)

    ang = beta[:, None] + np.pi + psi[None, :]
    w0 = np.stack([np.cos(ang), np.sin(ang)], axis=-1)                    # (Z, W, 2)
    n2 = np.einsum("zwi,zij,zwj->zw", w0, ginv, w0)
    omega = w0 / np.sqrt(n2)[..., None]
    omega_nu = np.einsum("zwi,zi->zw", omega, nu)
    dS_w = (1.0 / np.sqrt(det2(g)))[:, None] / n2 * dpsi
    z = np.broadcast_to(zb[:, None, :], (z_count, w_count, 2)).copy()
    return InflowGrid(spec, z_count, w_count, outer, beta, psi, z, omega, omega_nu, dS_x, dS_w)


# ================================================
# サイノグラム
# ================================================

@dataclass
class Sinogram:
    grid: InflowGrid
    values: np.ndarray      # (Z, W)

    def _check(self, other: "Sinogram") -> None:
        a, b = self.grid, other.grid
        if (a.spec, a.shape, a.outer) != (b.spec, b.shape, b.outer):
            raise InputError("sinograms live on different inflow grids")

    def __add__(self, other: "Sinogram") -> "Sinogram":
        self._check(other)
        return replace(self, values=self.values + other.values)

    def __sub__(self, other: "Sinogram") -> "Sinogram":
        self._check(other)
        return replace(self, values=self.values - other.values)

    def __mul__(self, c: float) -> "Sinogram":
        return replace(self, values=c * self.values)

    __rmul__ = __mul__

    def __neg__(self) -> "Sinogram":
        return (-1.0) * self

    def inner(self, other: "Sinogram") -> float:
        """L²(Γ₋, dμ) 内積。"""
        self._check(other)
        return float(np.sum(self.grid.weights * self.values * other.values))

    def norm(self) -> float:
        return float(np.sqrt(max(self.inner(self), 0.0)))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def to_frame(self) -> pd.DataFrame:
        Z, W = self.grid.shape
        return pd.DataFrame({
            "boundary_angle": np.repeat(self.grid.beta, W),
            "direction_angle": np.tile(self.grid.psi, Z),
            "mu_weight": self.grid.weights.ravel(),
            "value": self.values.ravel(),
        })


# ================================================
# 順変換
# ================================================

def _region_radius(spec: MetricSpec, outer: bool) -> float:
    return spec.domain.outer_radius if outer else spec.domain.radius


@lru_cache(maxsize=8)
def forward_matrix(
    spec: MetricSpec,
    grid: Grid,
    z_count: int = _DEFAULT_COUNT,
    w_count: int = _DEFAULT_COUNT,
    step: float = _DEFAULT_STEP,
    outer: bool = False,
    support: str = "inner",
) -> sp.csr_matrix:
    """
    (Z·W × 3N²) の順変換行列。各レイの記録点に台形則の重みと
    双一次補間の重み、成分 (v1², 2v1v2, v2²) を掛けて積み上げる。
    """
    inflow = build_inflow_grid(spec, z_count, w_count, outer)
    Y0 = inflow.rays()
    N2 = grid.N * grid.N
    R = _region_radius(spec, outer)
    rows, cols, vals = [], [], []
    for s in range(0, len(Y0), _RECORD_CHUNK):
        res = march(spec, Y0[s:s + _RECORD_CHUNK], step=step, stop_radius=R, record=True)
        dt = np.diff(res.rec_t, axis=0)
        w = np.zeros_like(res.rec_t)
        w[:-1] += 0.5 * dt
        w[1:] += 0.5 * dt
        k, m = np.nonzero(w > 0)
        x = res.rec_Y[k, m, 0:2]
        xi = res.rec_Y[k, m, 2:4]
        v = xi if spec.family == "euclidean" else np.einsum("pij,pj->pi", spec.inverse(x), xi)
        comp = np.stack([v[:, 0] ** 2, 2.0 * v[:, 0] * v[:, 1], v[:, 1] ** 2], axis=1) * w[k, m][:, None]
        idx, bw = bilinear_weights(grid, x, support)
        for c in range(3):
            rows.append(np.repeat(s + m, 4))
            cols.append((c * N2 + idx).ravel())
            vals.append((comp[:, c:c + 1] * bw).ravel())
    A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(len(Y0), 3 * N2)).tocsr()
    logger.debug("forward matrix %s N=%d Γ₋=%dx%d nnz=%d", spec.name, grid.N, z_count, w_count, A.nnz)
    return A


def xray_forward(
    spec: MetricSpec,
    f: SymTensor2Field,
    inflow: InflowGrid,
    step: float = _DEFAULT_STEP,
) -> Sinogram:
    """
    If(z, ω) = ∫ f_ij(γ) γ̇^i γ̇^j dt。
    f が閉形式 rule を持てば RK4 の積分変数として rule をレイ上で積分し、
    そうでなければ疎行列（双一次読み出し）を使う。
    """
    if inflow.spec != spec:
        raise InputError("inflow grid was built for another metric")
    if f.contravariant:
        f = lower_indices(spec, f)
    if f.rule is not None:
        def integrand(x: np.ndarray, v: np.ndarray) -> np.ndarray:
            return contract(f.sample(x), v)

        res = march_chunked(spec, inflow.rays(), step=step, stop_radius=inflow.radius, integrand=integrand)
        vals = res.Y[:, 4]
    else:
        A = forward_matrix(spec, f.grid, inflow.z_count, inflow.w_count, step, inflow.outer, f.support)
        vals = A @ f.vector()
    return Sinogram(inflow, vals.reshape(inflow.shape))


# ================================================
# 随伴
# ================================================

def _cubic_weights(t: np.ndarray) -> np.ndarray:
    """Catmull–Rom の 4 点重み（標本 −1, 0, 1, 2 に対する、t ∈ [0, 1]）。"""
    t2, t3 = t * t, t * t * t
    return 0.5 * np.stack([-t3 + 2.0 * t2 - t,
                           3.0 * t3 - 5.0 * t2 + 2.0,
                           -3.0 * t3 + 4.0 * t2 + t,
                           t3 - t2], axis=-1)


def _inflow_stencil(be: np.ndarray, pe: np.ndarray, z_count: int, w_count: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    入射点 (β, ψ) での u の 4×4 三次読み出し（列番号, 重み）、各 (P, 16)。
    β は周期的、ψ は端の標本で打ち切る。
    """
    fa = be / (2.0 * np.pi / z_count)
    a0 = np.floor(fa).astype(int)
    ia = (a0[:, None] + np.arange(-1, 3)[None, :]) % z_count
    wa = _cubic_weights(fa - a0)
    fb = np.clip((pe + 0.5 * np.pi) / (np.pi / w_count) - 0.5, -0.5, w_count - 0.5)
    b0 = np.floor(fb).astype(int)
    ib = np.clip(b0[:, None] + np.arange(-1, 3)[None, :], 0, w_count - 1)
    wb = _cubic_weights(fb - b0)
    cols = (ia[:, :, None] * w_count + ib[:, None, :]).reshape(len(be), 16)
    return cols, (wa[:, :, None] * wb[:, None, :]).reshape(len(be), 16)


@lru_cache(maxsize=8)
def adjoint_matrix(
    spec: MetricSpec,
    grid: Grid,
    z_count: int = _DEFAULT_COUNT,
    w_count: int = _DEFAULT_COUNT,
    step: float = _DEFAULT_STEP,
    outer: bool = False,
) -> Tuple[sp.csr_matrix, np.ndarray]:
    """
    (3N² × Z·W) の随伴行列と除外節点マスク。
    節点 y ごとに 2W 本のユークリッド等角方向を逆追跡し、入射点 (β, ψ) で
    u を三次補間して dS_ω·ω_iω_j を積む。
    """
    region = "outer" if outer else "inner"
    nodes = np.flatnonzero(grid.support_mask(region).reshape(-1))
    pts = grid.points.reshape(-1, 2)[nodes]
    A = 2 * w_count
    alpha = 2.0 * np.pi * (np.arange(A) + 0.5) / A
    R = _region_radius(spec, outer)
    c0 = spec.domain.c
    N2 = grid.N * grid.N

    y = np.repeat(pts, A, axis=0)
    a = np.tile(alpha, len(pts))
    node_of = np.repeat(nodes, A)
    om = unit_covector(spec, y, a)
    g = spec.tensor(y)
    w0 = np.stack([np.cos(a), np.sin(a)], axis=-1)
    dS = (1.0 / np.sqrt(det2(g))) / _quad(w0, inv2(g), w0) * (2.0 * np.pi / A)

    res = march_chunked(spec, np.concatenate([y, -om], axis=1), step=step, stop_radius=R,
                        t_end=_HORIZON_FACTOR * 2.0 * spec.domain.outer_radius)
    ok = res.exited
    ze = res.Y[:, 0:2]
    w_in = -res.Y[:, 2:4]
    be = np.mod(np.arctan2(ze[:, 1] - c0[1], ze[:, 0] - c0[0]), 2.0 * np.pi)
    pe = np.arctan2(w_in[:, 1], w_in[:, 0]) - be - np.pi
    pe = (pe + np.pi) % (2.0 * np.pi) - np.pi
    cols16, bw = _inflow_stencil(be, pe, z_count, w_count)
    bw = bw * (dS * ok)[:, None]

    oo = _outer_compact(om)
    rows = np.repeat(node_of, 16)
    blocks = [
        sp.coo_matrix(((oo[:, c:c + 1] * bw).ravel(), (rows, cols16.ravel())),
                      shape=(N2, z_count * w_count)).tocsr()
        for c in range(3)
    ]
    B = sp.vstack(blocks, format="csr")

    excluded = np.zeros(N2, dtype=bool)
    excluded[node_of[~ok]] = True
    if excluded.any():
        logger.warning("adjoint: %d nodes excluded (back-trace did not reach the boundary)", int(excluded.sum()))
        keep = sp.diags(np.tile((~excluded).astype(float), 3))
        B = (keep @ B).tocsr()
    logger.debug("adjoint matrix %s N=%d Γ₋=%dx%d nnz=%d", spec.name, grid.N, z_count, w_count, B.nnz)
    return B, excluded.reshape(grid.N, grid.N)


def xray_adjoint(spec: MetricSpec, u: Sinogram, grid: Grid, step: float = _DEFAULT_STEP) -> SymTensor2Field:
    """[I*u]_ij(y) = ∫ u(入射点) ω_iω_j dS_ω（共変成分）。"""
    if u.grid.spec != spec:
        raise InputError("sinogram was sampled for another metric")
    B, _ = adjoint_matrix(spec, grid, u.grid.z_count, u.grid.w_count, step, u.grid.outer)
    support = "outer" if u.grid.outer else "inner"
    return SymTensor2Field.from_vector(grid, B @ u.values.ravel(), support)


def normal_composed(
    spec: MetricSpec,
    f: SymTensor2Field,
    z_count: int = _DEFAULT_COUNT,
    w_count: int = _DEFAULT_COUNT,
    step: float = _DEFAULT_STEP,
    outer: bool = False,
) -> SymTensor2Field:
    """Nf = I*(If)。outer=True なら Ω₁ 全体で評価する。"""
    inflow = build_inflow_grid(spec, z_count, w_count, outer)
    return xray_adjoint(spec, xray_forward(spec, f, inflow, step), f.grid, step)


# ================================================
# カーネル経路
# ================================================

def _kernel_point(spec: MetricSpec, f: SymTensor2Field, f_up: np.ndarray, x: np.ndarray,
                  step: float) -> Tuple[np.ndarray, int]:
    grid = f.grid
    pts = grid.points.reshape(-1, 2)
    mask = f.mask.reshape(-1)
    dist = np.hypot(pts[:, 0] - x[0], pts[:, 1] - x[1])
    near = mask & (dist < _NEAR_CELLS * grid.dx)
    far = np.flatnonzero(mask & ~near)
    Gx = spec.tensor(x)
    sq = np.sqrt(det2(Gx))
    out = np.zeros(3)

    res = log_map_batch(spec, x[None, :], pts[far], step=step)
    ok = res.converged & (res.t > 0)
    skipped = int(np.sum(~ok))
    if ok.any():
        rho = res.t[ok]
        om = res.omega[ok]
        xi = res.xi_end[ok]
        ve = res.xdot_end[ok]
        dxe = res.dx_end[ok]
        w0 = np.stack([np.cos(res.angle[ok]), np.sin(res.angle[ok])], axis=-1)
        n2 = _quad(w0, inv2(Gx), w0)
        jac = np.abs(ve[:, 0] * dxe[:, 1] - ve[:, 1] * dxe[:, 0])
        D = rho / n2 / jac
        weight = (2.0 / sq) * contract(f_up[far[ok]], xi) * D / rho * grid.dx ** 2
        out += weight @ _outer_compact(om)

    n_near = int(np.sum(near))
    if n_near:
        r0 = grid.dx * np.sqrt(n_near / np.pi)
        sn, sw = roots_legendre(_POLAR_RADIAL)
        s = 0.5 * r0 * (sn + 1.0)
        ws = 0.5 * r0 * sw
        phi = 2.0 * np.pi * np.arange(_POLAR_ANGULAR) / _POLAR_ANGULAR
        u = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
        p = x + (s[:, None, None] * u[None, :, :])
        fu = _raise_compact(spec, p.reshape(-1, 2), f.sample(p.reshape(-1, 2))).reshape(len(s), len(phi), 3)
        Gu = u @ Gx
        nrm = np.sqrt(np.einsum("ai,ai->a", Gu, u))
        # e = s·u: 核 s⁴/s⁵ と面積要素 s ds dφ が打ち消し合い、s 依存は f(x + e) だけ
        ang = 2.0 * sq * contract(fu, Gu[None]) / nrm[None] ** 5          # (S, Φ)
        out += (2.0 * np.pi / len(phi)) * np.einsum("sa,s,ac->c", ang, ws, _outer_compact(Gu))
    return out, skipped


def normal_kernel(spec: MetricSpec, f: SymTensor2Field, x, step: float = _DEFAULT_STEP) -> np.ndarray:
    """
    (Nf)_kl(x) = (2/√det g) ∫ f^ij ρ^{−1} ρ_{y^i}ρ_{y^j} ρ_{x^k}ρ_{x^l} |det ∂²(ρ²/2)/∂x∂y| dy
    を格子求積で評価する（上三角 3 成分）。
    """
    vals, _ = normal_kernel_points(spec, f, np.asarray(x, dtype=float).reshape(1, 2), step)
    return vals[0]


def normal_kernel_points(spec: MetricSpec, f: SymTensor2Field, points: np.ndarray,
                         step: float = _DEFAULT_STEP) -> Tuple[np.ndarray, int]:
    """点列でのカーネル経路 Nf と、log 写像が失敗して飛ばしたセルの総数。"""
    if f.contravariant:
        f_up = f.values.reshape(-1, 3)
    else:
        f_up = raise_indices(spec, f).values.reshape(-1, 3)
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    out = np.zeros((len(pts), 3))
    skipped = 0
    for i, x in enumerate(pts):
        out[i], k = _kernel_point(spec, f, f_up, x, step)
        skipped += k
    if skipped:
        logger.warning("normal kernel: %d cells skipped (distance solver failed)", skipped)
    return out, skipped


def normal_operator(spec: MetricSpec, f: SymTensor2Field, route: str = "composed", **kw) -> SymTensor2Field:
    """route = "composed" | "kernel"。カーネル経路は Ω 内の全節点で評価する。"""
    if route == "composed":
        return normal_composed(spec, f, **kw)
    if route == "kernel":
        pts = f.grid.points.reshape(-1, 2)
        nodes = np.flatnonzero(f.grid.mask.reshape(-1))
        vals = np.zeros((f.grid.N * f.grid.N, 3))
        vals[nodes], _ = normal_kernel_points(spec, f, pts[nodes], kw.get("step", _DEFAULT_STEP))
        return SymTensor2Field(f.grid, vals.reshape(f.grid.N, f.grid.N, 3), "inner")
    raise InputError(f"unknown normal-operator route '{route}'")


# ================================================
# H̃ ノルム
# ================================================

def boundary_partition(beta: np.ndarray, count: int = _PARTITION_BUMPS) -> np.ndarray:
    """境界角の cos² 分割 χ_j(β)（Σ_j χ_j = 1）。(count, P)。"""
    half = 2.0 * np.pi / count
    centers = half * np.arange(count)
    d = (beta[None, :] - centers[:, None] + np.pi) % (2.0 * np.pi) - np.pi
    return np.where(np.abs(d) < half, np.cos(0.5 * np.pi * d / half) ** 2, 0.0)


@lru_cache(maxsize=8)
def _htilde_frame(spec: MetricSpec, grid: Grid, support: str) -> Dict[str, np.ndarray]:
    """コラー内節点の (節点番号, 重み Σχ_j, x^n, ∂_{x'} 方向, ∂_{x^n} 方向)。"""
    dom = spec.domain
    chart = boundary_normal_chart(spec, collar=_HTILDE_COLLAR + 0.01,
                                  outer_collar=_HTILDE_COLLAR + 0.005)
    r = grid.radius_map.reshape(-1)
    cand = np.flatnonzero(grid.support_mask(support).reshape(-1) & (np.abs(r - dom.radius) < _HTILDE_COLLAR))
    b, s = chart.beta_coords(grid.points.reshape(-1, 2)[cand])
    good = ~np.isnan(s)
    cand, b, s = cand[good], b[good], s[good]
    chi, _ = collar_cutoff(np.abs(s), _HTILDE_COLLAR)
    weight = chi * boundary_partition(b).sum(axis=0)
    Xb, V = chart.frame_at(b, s)
    dxp = chart.tangent_scale(b)
    return {"nodes": cand, "weight": weight, "xn": s, "d_tan": Xb / dxp[:, None], "d_nor": V}


def _component_weights(F: _Field) -> np.ndarray:
    return np.array([1.0, 2.0, 1.0]) if isinstance(F, SymTensor2Field) else np.ones(F.ncomp)


def _htilde1(spec: MetricSpec, F: _Field) -> float:
    fr = _htilde_frame(spec, F.grid, F.support)
    Dx, Dy = difference_matrices(F.grid, F.support)
    nodes = fr["nodes"]
    mult = _component_weights(F)
    total = 0.0
    for c in range(F.ncomp):
        u = F.values[..., c].reshape(-1)
        gx, gy = (Dx @ u)[nodes], (Dy @ u)[nodes]
        dt = fr["d_tan"][:, 0] * gx + fr["d_tan"][:, 1] * gy
        dn = fr["d_nor"][:, 0] * gx + fr["d_nor"][:, 1] * gy
        dens = dt ** 2 + (fr["xn"] * dn) ** 2 + u[nodes] ** 2
        total += mult[c] * float(np.sum(fr["weight"] * dens))
    return float(np.sqrt(total * F.grid.dx ** 2))


def htilde_norm(spec: MetricSpec, F: _Field, order: int = 2) -> float:
    """
    order=1: Σ_j ∫ χ_j (|∂_{x'}F|² + |x^n ∂_{x^n}F|² + |F|²) dx の平方根
    order=2: Σ_i ‖∂_{x^i}F‖_{H̃¹} + ‖F‖_{H¹(Ω₁)}
    """
    if order == 1:
        return _htilde1(spec, F)
    if order != 2:
        raise InputError("htilde_norm order must be 1 or 2")
    Dx, Dy = difference_matrices(F.grid, F.support)
    total = h1_norm(F)
    for D in (Dx, Dy):
        vals = np.stack([(D @ F.values[..., c].reshape(-1)).reshape(F.grid.N, F.grid.N)
                         for c in range(F.ncomp)], axis=-1)
        total += _htilde1(spec, F.with_values(vals))
    return float(total)


__all__ = [
    "InflowGrid",
    "Sinogram",
    "adjoint_matrix",
    "boundary_partition",
    "build_inflow_grid",
    "forward_matrix",
    "htilde_norm",
    "normal_composed",
    "normal_kernel",
    "normal_kernel_points",
    "normal_operator",
    "xray_adjoint",
    "xray_forward",
]
