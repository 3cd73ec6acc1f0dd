# -*- coding: utf-8 -*-
"""
src/transform/decomp.py

ソレノイダル・ポテンシャル分解 f = f^s + dv（v|∂Ω = 0）とゲージ正規化。

離散化
------
D   : 対称微分（3N² × 2N²）、M_T / M_V : テンソル / 1-形式の質量行列
Δˢ  : 弱形式 −Dᵀ M_T D（内部節点に制限すると対称正定値）
δ   : 弱発散 −M_V⁻¹ Dᵀ M_T（−d の離散形式随伴）
未知数は Ω の節点から境界層（4 近傍のいずれかが Ω の外）を除いたもの。

Public API
----------
Decomposition, GaugeResult, GlobalGaugeResult
laplacian_s_solve(spec, h, b=None)
weak_divergence(spec, f)
decompose(spec, f), solenoidal_part(spec, f)
solenoidal_projector(spec, grid)           S を係数ベクトルに作用させる（疎 LU 使い回し）
gauge_normalize_boundary(spec, f)
semigeodesic_chart(spec)
gauge_normalize_global(chart_or_spec, f)
recover_potential(chart_or_spec, f, f_s)
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import scipy.sparse as sp
from scipy.integrate import cumulative_trapezoid
from scipy.sparse.linalg import cg, factorized
from sklearn.linear_model import LinearRegression

from src.errors import InputError, SolverError
from src.fields.tensorfield import (
    Grid,
    OneFormField,
    SymTensor2Field,
    l2_norm,
    lower_indices,
    mass_form,
    mass_tensor,
    metric_on_grid,
    node_weights,
    sym_diff_matrix,
)
from src.geometry.charts import (
    BoundaryNormalChart,
    SemiGeodesicChart,
    boundary_normal_chart,
    semigeodesic_chart,
)
from src.geometry.metric import BumpSet, MetricSpec, collar_cutoff

logger = logging.getLogger(__name__)

# ================================================
# 定数
# ================================================

_DEFAULT_RTOL = 1e-8
_DEFAULT_MAXITER = 20000
_EDGE_SAMPLES = 2          # ∂Ω との交点から何サンプル離れた表点を検査に使うか


# ================================================
# データ型
# ================================================

@dataclass
class Decomposition:
    f_s: SymTensor2Field
    v: OneFormField
    residual: float
    iterations: int
    history: List[float] = field(default_factory=list)

    def potential(self, spec: MetricSpec) -> SymTensor2Field:
        """Pf = dv。"""
        D = sym_diff_matrix(spec, self.v.grid, "inner")
        return SymTensor2Field.from_vector(self.v.grid, D @ self.v.vector(), "inner")

    def report(self) -> str:
        return (f"residual={self.residual:.3e}\n"
                f"iterations={self.iterations}\n"
                f"max|f_s|={self.f_s.max_abs():.6e}\n"
                f"max|v|={self.v.max_abs():.6e}\n")


@dataclass
class GaugeResult:
    f_tilde: SymTensor2Field
    v: OneFormField
    collar_residual: float       # コラー（x^n ≤ 幅/2）の節点での max|f̃_in| / max|f|
    chart: BoundaryNormalChart


@dataclass
class GlobalGaugeResult:
    f_sharp: SymTensor2Field
    v_sharp: OneFormField
    max_fin: float               # 表の内部点での max|f#_in| / max|f|
    band: np.ndarray             # 接線帯に入る節点（N, N）
    chart: SemiGeodesicChart
    table: Dict[str, np.ndarray] = field(default_factory=dict, repr=False)


# ================================================
# Δˢ の Dirichlet 解
# ================================================

@lru_cache(maxsize=16)
def _unknowns(grid: Grid) -> np.ndarray:
    """1-形式ベクトル（成分優先 2N²）中の内部未知数の位置。"""
    inner = grid.interior("inner").reshape(-1)
    return np.flatnonzero(np.tile(inner, 2))


@lru_cache(maxsize=16)
def stiffness(spec: MetricSpec, grid: Grid) -> sp.csr_matrix:
    """K = Dᵀ M_T D（2N² × 2N²）。"""
    D = sym_diff_matrix(spec, grid, "inner")
    return (D.T @ mass_tensor(spec, grid, "inner") @ D).tocsr()


def _mass_form_inverse(spec: MetricSpec, grid: Grid) -> sp.csr_matrix:
    """M_V⁻¹（節点ごとの 2×2 ブロック g_ab / w）。台の外は 0。"""
    g, _, _, _ = metric_on_grid(spec, grid)
    w = node_weights(spec, grid, "inner")
    inv_w = np.divide(1.0, w, out=np.zeros_like(w), where=w > 0)
    blk = lambda a, b: sp.diags(g[:, a, b] * inv_w)  # noqa: E731
    return sp.bmat([[blk(0, 0), blk(0, 1)], [blk(1, 0), blk(1, 1)]], format="csr")


def weak_divergence(spec: MetricSpec, f: SymTensor2Field) -> OneFormField:
    """δf = −M_V⁻¹ Dᵀ M_T f（⟨δf, w⟩ = −⟨f, dw⟩ が w|∂Ω = 0 で成り立つ）。"""
    if f.contravariant:
        f = lower_indices(spec, f)
    D = sym_diff_matrix(spec, f.grid, "inner")
    r = D.T @ (mass_tensor(spec, f.grid, "inner") @ f.vector())
    return OneFormField.from_vector(f.grid, -(_mass_form_inverse(spec, f.grid) @ r), "inner")


def _solve(K_II: sp.csr_matrix, rhs: np.ndarray, rtol: float, maxiter: int):
    history: List[float] = []
    bnorm = float(np.linalg.norm(rhs))
    if bnorm == 0.0:
        return np.zeros_like(rhs), 0.0, 0, history

    def callback(xk: np.ndarray) -> None:
        history.append(float(np.linalg.norm(rhs - K_II @ xk)) / bnorm)

    diag = K_II.diagonal()
    M = sp.diags(np.where(diag > 0, 1.0 / np.where(diag > 0, diag, 1.0), 1.0))
    x, info = cg(K_II, rhs, rtol=rtol, atol=0.0, maxiter=maxiter, M=M, callback=callback)
    res = float(np.linalg.norm(rhs - K_II @ x)) / bnorm
    if info != 0:
        raise SolverError(f"conjugate gradient did not converge (info={info}, residual={res:.3e})", history)
    logger.debug("Δˢ solve: %d iterations, residual %.3e", len(history), res)
    return x, res, len(history), history


def laplacian_s_solve(
    spec: MetricSpec,
    h: OneFormField,
    b: Optional[OneFormField] = None,
    rtol: float = _DEFAULT_RTOL,
    maxiter: int = _DEFAULT_MAXITER,
    return_info: bool = False,
):
    """
    δd u = h（Ω 内）、u = b（境界層節点）を弱形式 K u = −M_V h で解く。
    b は境界層節点の値だけが使われる。
    """
    grid = h.grid
    K = stiffness(spec, grid)
    I = _unknowns(grid)
    lift = np.zeros(2 * grid.N * grid.N)
    if b is not None:
        if b.grid != grid:
            raise InputError("boundary data lives on another grid")
        layer = np.tile(grid.boundary_layer("inner").reshape(-1), 2)
        lift[layer] = b.vector()[layer]
    rhs = -(mass_form(spec, grid, "inner") @ h.vector()) - K @ lift
    xI, res, it, hist = _solve(K[I][:, I].tocsr(), rhs[I], rtol, maxiter)
    u = lift.copy()
    u[I] = xI
    out = OneFormField.from_vector(grid, u, "inner")
    if return_info:
        return out, res, it, hist
    return out


# ================================================
# 分解
# ================================================

def decompose(spec: MetricSpec, f: SymTensor2Field, rtol: float = _DEFAULT_RTOL,
              maxiter: int = _DEFAULT_MAXITER) -> Decomposition:
    """v = (Δˢ_D)⁻¹ δf、f^s = f − dv。"""
    if f.support != "inner":
        raise InputError("decompose expects a field supported in the inner disk")
    if f.contravariant:
        f = lower_indices(spec, f)
    v, res, it, hist = laplacian_s_solve(spec, weak_divergence(spec, f), None, rtol, maxiter,
                                         return_info=True)
    D = sym_diff_matrix(spec, f.grid, "inner")
    dv = SymTensor2Field.from_vector(f.grid, D @ v.vector(), "inner")
    fs = f.with_values(f.values - dv.values)
    return Decomposition(fs, v, res, it, hist)


def solenoidal_part(spec: MetricSpec, f: SymTensor2Field, **kw) -> SymTensor2Field:
    """射影 S: f ↦ f^s。"""
    return decompose(spec, f, **kw).f_s


@lru_cache(maxsize=8)
def solenoidal_projector(spec: MetricSpec, grid: Grid) -> Callable[[np.ndarray], np.ndarray]:
    """
    係数ベクトル（3N²、共変成分）に作用する S = I − D_I K_II⁻¹ D_Iᵀ M_T。
    K_II は疎 LU で一度だけ分解する。S は M_T 内積について自己随伴。
    """
    D = sym_diff_matrix(spec, grid, "inner")
    M = mass_tensor(spec, grid, "inner")
    I = _unknowns(grid)
    DI = D[:, I].tocsr()
    solve = factorized(stiffness(spec, grid)[I][:, I].tocsc())

    def apply(x: np.ndarray) -> np.ndarray:
        return x - DI @ solve(DI.T @ (M @ x))

    return apply


def weak_divergence_residual(spec: MetricSpec, f: SymTensor2Field) -> float:
    """sup_w |⟨f, dw⟩| / (‖f‖·‖dw‖)（w は内部節点に台を持つ 1-形式）の上界。"""
    D = sym_diff_matrix(spec, f.grid, "inner")
    M = mass_tensor(spec, f.grid, "inner")
    I = _unknowns(f.grid)
    r = (D.T @ (M @ f.vector()))[I]
    K_II = stiffness(spec, f.grid)[I][:, I]
    # K_II の対角で正規化
    scale = np.sqrt(np.maximum(K_II.diagonal(), 1e-300))
    nf = l2_norm(spec, f)
    return float(np.max(np.abs(r) / scale) / nf) if nf > 0 else 0.0


def projection_continuity(
    spec0: MetricSpec,
    bumps: BumpSet,
    f: SymTensor2Field,
    eps_grid: Sequence[float] = (1e-3, 1e-2, 1e-1),
) -> Tuple[pd.DataFrame, float]:
    """
    ‖S_g f − S_{g0} f‖ / ‖f‖ を g = g0 + ε·bumps について並べ、
    log-log の傾きを返す（連続性なら ≈ 1）。
    """
    base = solenoidal_part(spec0, f)
    nf = l2_norm(spec0, f)
    pts = f.grid.points.reshape(-1, 2)[f.grid.outer_mask.reshape(-1)]
    rows = []
    for eps in eps_grid:
        spec = spec0.perturbed(bumps.scaled(eps), tag=f"{spec0.name}+{eps:g}")
        diff = solenoidal_part(spec, f).values - base.values
        gap = l2_norm(spec0, base.with_values(diff)) / nf
        rows.append({"eps": float(eps), "c1_gap": bumps.scaled(eps).c1_norm(pts), "relative_change": gap})
    df = pd.DataFrame(rows)
    good = df["relative_change"] > 0
    if good.sum() < 2:
        return df, float("nan")
    X = np.log(df.loc[good, ["c1_gap"]].to_numpy())
    y = np.log(df.loc[good, "relative_change"].to_numpy())
    return df, float(LinearRegression().fit(X, y).coef_[0])


# ================================================
# ゲージ正規化（境界コラー）
# ================================================

def _fft_dbeta(a: np.ndarray) -> np.ndarray:
    n = a.shape[0]
    k = np.fft.fftfreq(n, d=1.0 / n).reshape((n,) + (1,) * (a.ndim - 1))
    return np.real(np.fft.ifft(1j * k * np.fft.fft(a, axis=0), axis=0))


def _frame_inverse(J: np.ndarray) -> np.ndarray:
    """列 = 座標ベクトルの (…, 2, 2) を逆行列に。"""
    det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    safe = np.abs(det) > 1e-12
    d = np.where(safe, det, 1.0)
    out = np.empty_like(J)
    out[..., 0, 0] = J[..., 1, 1] / d
    out[..., 1, 1] = J[..., 0, 0] / d
    out[..., 0, 1] = -J[..., 0, 1] / d
    out[..., 1, 0] = -J[..., 1, 0] / d
    return out * safe[..., None, None]


def _chart_to_cartesian(J: np.ndarray, v_chart: np.ndarray, f_chart: np.ndarray):
    """v_cart = J⁻ᵀ v_chart、f_cart = J⁻ᵀ f_chart J⁻¹（f_chart は (…, 2, 2)）。"""
    Ji = _frame_inverse(J)
    v = np.einsum("...ai,...a->...i", Ji, v_chart)
    f = np.einsum("...ai,...ab,...bj->...ij", Ji, f_chart, Ji)
    return v, f


def _sym2(a11, a12, a22) -> np.ndarray:
    return np.stack([np.stack([a11, a12], -1), np.stack([a12, a22], -1)], -2)


def _to_compact(full: np.ndarray) -> np.ndarray:
    return np.stack([full[..., 0, 0], 0.5 * (full[..., 0, 1] + full[..., 1, 0]), full[..., 1, 1]], axis=-1)


def gauge_normalize_boundary(
    spec: MetricSpec,
    f: SymTensor2Field,
    collar: Optional[float] = None,
) -> GaugeResult:
    """
    境界法線座標 (β, s) で
        ∂_s v_s = f_ss,  ∂_s v_β − 2Γ^β_{sβ} v_β = 2f_βs − ∂_β v_s,  v|_{s=0} = 0
    を s 方向に積分し（Γ^β_{sβ} = ½∂_s log h_ββ なので積分因子で解ける）、
    カットオフ χ(s) を掛けた v で f̃ = f − d(χv) を作る。
    """
    if f.contravariant:
        f = lower_indices(spec, f)
    chart = boundary_normal_chart(spec, collar=collar)
    width = chart.width
    X, V, Xb, s = chart.X, chart.V, chart.Xb, chart.s
    B, S = X.shape[:2]
    F = f.sample(X.reshape(-1, 2)).reshape(B, S, 3)
    Ff = _sym2(F[..., 0], F[..., 1], F[..., 2])
    f_bb = np.einsum("...i,...ij,...j->...", Xb, Ff, Xb)
    f_bs = np.einsum("...i,...ij,...j->...", Xb, Ff, V)
    f_ss = np.einsum("...i,...ij,...j->...", V, Ff, V)
    h_bb, _, _ = chart.beta_metric

    v_s = cumulative_trapezoid(f_ss, s, axis=1, initial=0.0)
    dv_s_db = _fft_dbeta(v_s)
    v_b = h_bb * cumulative_trapezoid((2.0 * f_bs - dv_s_db) / h_bb, s, axis=1, initial=0.0)

    chi, dchi = collar_cutoff(s, width)
    chi, dchi = chi[None, :], dchi[None, :]
    dh_db = _fft_dbeta(h_bb)
    dh_ds = np.gradient(h_bb, s, axis=1, edge_order=2)
    inner_bb = _fft_dbeta(v_b) - 0.5 * dh_db / h_bb * v_b + 0.5 * dh_ds * v_s
    dv_bb = chi * inner_bb
    dv_bs = chi * f_bs + 0.5 * dchi * v_b
    dv_ss = chi * f_ss + dchi * v_s

    J = np.stack([Xb, V], axis=-1)                     # 列 = (∂_β, ∂_s)
    v_cart, dv_cart = _chart_to_cartesian(J, np.stack([chi * v_b, chi * v_s], -1),
                                          _sym2(dv_bb, dv_bs, dv_ss))

    grid = f.grid
    pts = grid.points.reshape(-1, 2)
    r = grid.radius_map.reshape(-1)
    cand = np.flatnonzero(grid.mask.reshape(-1) & (r > spec.domain.radius - 1.5 * width))
    bq, sq = chart.beta_coords(pts[cand])
    ok = ~np.isnan(sq)
    cand, bq, sq = cand[ok], bq[ok], sq[ok]
    N2 = grid.N * grid.N
    v_nodes = np.zeros((N2, 2))
    dv_nodes = np.zeros((N2, 3))
    v_nodes[cand] = chart.sample_table(v_cart, bq, sq)
    dv_nodes[cand] = _to_compact(chart.sample_table(dv_cart, bq, sq))
    v = OneFormField(grid, v_nodes.reshape(grid.N, grid.N, 2), "inner")
    f_tilde = f.with_values(f.values - dv_nodes.reshape(grid.N, grid.N, 3))

    # コラー内側半分の節点で f̃_in を検査
    half = sq <= 0.5 * width
    Xbq, Vq = chart.frame_at(bq[half], sq[half])
    ft = _sym2(*[f_tilde.values.reshape(-1, 3)[cand[half], c] for c in range(3)])
    e_t = Xbq / np.sqrt(np.einsum("mi,mij,mj->m", Xbq, spec.tensor(pts[cand[half]]), Xbq))[:, None]
    fin = np.maximum(np.abs(np.einsum("mi,mij,mj->m", e_t, ft, Vq)),
                     np.abs(np.einsum("mi,mij,mj->m", Vq, ft, Vq)))
    scale = max(f.max_abs(), 1e-300)
    resid = float(np.max(fin) / scale) if fin.size else 0.0
    logger.debug("boundary gauge: collar nodes=%d, residual=%.3e", int(half.sum()), resid)
    return GaugeResult(f_tilde, v, resid, chart)


# ================================================
# ゲージ正規化（半測地座標、大域）
# ================================================

def _column_integrate(chart: SemiGeodesicChart, F: np.ndarray) -> Dict[str, np.ndarray]:
    """
    列 y¹ = const に沿って x₀ から
        ∂_r v_2 = h_22,  ∂_r v_1 − 2Γ^1_{12} v_1 = 2h_12 − ∂_1 v_2
    を積分する（Γ^1_{12} = ½∂_r log g_11、v = 0 が x₀ 側の境界条件）。
    F は表点での共変成分 (C, K, 3)。
    """
    J1 = np.nan_to_num(chart.J1)
    V = np.nan_to_num(chart.V)
    valid = chart.valid
    Ff = _sym2(F[..., 0], F[..., 1], F[..., 2]) * valid[..., None, None]
    h11 = np.einsum("...i,...ij,...j->...", J1, Ff, J1)
    h12 = np.einsum("...i,...ij,...j->...", J1, Ff, V)
    h22 = np.einsum("...i,...ij,...j->...", V, Ff, V)
    g11, _, _ = chart.metric_table
    g11 = g11 * valid
    dr = chart.r[1] - chart.r[0]
    y1 = chart.y1

    v2 = cumulative_trapezoid(h22, dx=dr, axis=1, initial=0.0)
    d1v2 = np.gradient(v2, y1, axis=0)
    tiny = g11 > 1e-14
    q = np.divide(2.0 * h12 - d1v2, g11, out=np.zeros_like(g11), where=tiny)
    phi = cumulative_trapezoid(q, dx=dr, axis=1, initial=0.0)
    v1 = g11 * phi

    dg_r = np.gradient(g11, dr, axis=1)
    dg_1 = np.gradient(g11, y1, axis=0)
    G112 = np.divide(0.5 * dg_r, g11, out=np.zeros_like(g11), where=tiny)
    G111 = np.divide(0.5 * dg_1, g11, out=np.zeros_like(g11), where=tiny)
    G211 = -0.5 * dg_r
    dv22 = np.gradient(v2, dr, axis=1)
    dv12 = 0.5 * (d1v2 + np.gradient(v1, dr, axis=1)) - G112 * v1
    dv11 = np.gradient(v1, y1, axis=0) - G111 * v1 - G211 * v2
    return {"h11": h11, "h12": h12, "h22": h22, "g11": g11, "v1": v1, "v2": v2,
            "fs11": h11 - dv11, "fs12": h12 - dv12, "fs22": h22 - dv22}


def _check_mask(chart: SemiGeodesicChart) -> np.ndarray:
    """∂Ω・x₀・接線帯から離れた Ω 内の表点。"""
    inside = chart.in_domain
    m = inside.copy()
    for k in range(1, _EDGE_SAMPLES + 1):
        m[:, k:] &= inside[:, :-k]
        m[:, :-k] &= inside[:, k:]
    m[chart.band_columns] = False
    return m


def _resolve_chart(chart_or_spec: Union[SemiGeodesicChart, MetricSpec]) -> SemiGeodesicChart:
    if isinstance(chart_or_spec, SemiGeodesicChart):
        return chart_or_spec
    return semigeodesic_chart(chart_or_spec)


def _node_chart_coords(chart: SemiGeodesicChart, grid: Grid, support: str):
    pts = grid.points.reshape(-1, 2)
    dist = np.hypot(pts[:, 0] - chart.x0[0], pts[:, 1] - chart.x0[1])
    nodes = np.flatnonzero(grid.support_mask(support).reshape(-1) & (dist > 1e-9))
    return nodes, chart.to_chart(pts[nodes])


def _band_nodes(chart: SemiGeodesicChart, y: np.ndarray) -> np.ndarray:
    ok = chart.y1[~chart.band_columns]
    if ok.size == 0:
        return np.ones(len(y), dtype=bool)
    return (y[:, 0] < ok.min()) | (y[:, 0] > ok.max())


def _table_to_nodes(chart: SemiGeodesicChart, table: np.ndarray, y: np.ndarray) -> np.ndarray:
    flat = table.reshape(table.shape[0], table.shape[1], -1)
    out = np.stack([chart.interpolator(flat[..., c])(y) for c in range(flat.shape[-1])], axis=-1)
    return out.reshape((len(y),) + table.shape[2:])


def _global_gauge(chart: SemiGeodesicChart, f: SymTensor2Field):
    X = np.nan_to_num(chart.X)
    C, K = X.shape[:2]
    F = f.sample(X.reshape(-1, 2)).reshape(C, K, 3)
    tab = _column_integrate(chart, F)
    J = np.stack([np.nan_to_num(chart.J1), np.nan_to_num(chart.V)], axis=-1)
    v_cart, fs_cart = _chart_to_cartesian(J, np.stack([tab["v1"], tab["v2"]], -1),
                                          _sym2(tab["fs11"], tab["fs12"], tab["fs22"]))
    return tab, v_cart, fs_cart


def gauge_normalize_global(
    chart_or_spec: Union[SemiGeodesicChart, MetricSpec],
    f: SymTensor2Field,
) -> GlobalGaugeResult:
    """
    半測地座標で e_n に平行な直線に沿って (∂Ω₁)₋ から積分し、f#_in = 0 にする。
    接線帯（列が ∂Ω と 5° 未満で交わる）の節点は計算するがフラグを立てる。
    """
    chart = _resolve_chart(chart_or_spec)
    spec = chart.spec
    if f.contravariant:
        f = lower_indices(spec, f)
    tab, v_cart, fs_cart = _global_gauge(chart, f)

    check = _check_mask(chart)
    g11 = tab["g11"]
    e12 = np.divide(tab["fs12"], np.sqrt(g11), out=np.zeros_like(g11), where=g11 > 1e-14)
    fin = np.maximum(np.abs(e12), np.abs(tab["fs22"]))[check]
    scale = max(f.max_abs(), 1e-300)
    max_fin = float(np.max(fin) / scale) if fin.size else 0.0

    grid = f.grid
    N2 = grid.N * grid.N
    nodes, y = _node_chart_coords(chart, grid, "outer")
    v_nodes = np.zeros((N2, 2))
    fs_nodes = np.zeros((N2, 3))
    v_nodes[nodes] = _table_to_nodes(chart, v_cart, y)
    fs_nodes[nodes] = _to_compact(_table_to_nodes(chart, fs_cart, y))
    band = np.zeros(N2, dtype=bool)
    band[nodes] = _band_nodes(chart, y)
    inner = grid.mask.reshape(-1)
    if (band & inner).any():
        logger.warning("global gauge: %d nodes in the tangency band", int((band & inner).sum()))
    f_sharp = SymTensor2Field(grid, fs_nodes.reshape(grid.N, grid.N, 3), "inner")
    v_sharp = OneFormField(grid, v_nodes.reshape(grid.N, grid.N, 2), "outer")
    logger.debug("global gauge: max f#_in = %.3e", max_fin)
    return GlobalGaugeResult(f_sharp, v_sharp, max_fin, band.reshape(grid.N, grid.N), chart, tab)


def recover_potential(
    chart_or_spec: Union[SemiGeodesicChart, MetricSpec],
    f: SymTensor2Field,
    f_s: SymTensor2Field,
) -> OneFormField:
    """
    f − f^s = dv から v を線積分で復元する:
    ∂_n v_n = f_nn − f^s_nn の後に v_α の線形系を同じ列に沿って解く。
    """
    chart = _resolve_chart(chart_or_spec)
    spec = chart.spec
    if f.contravariant:
        f = lower_indices(spec, f)
    if f_s.contravariant:
        f_s = lower_indices(spec, f_s)
    X = np.nan_to_num(chart.X).reshape(-1, 2)
    C, K = chart.X.shape[:2]
    F = (f.sample(X) - f_s.sample(X)).reshape(C, K, 3)
    tab = _column_integrate(chart, F)
    J = np.stack([np.nan_to_num(chart.J1), np.nan_to_num(chart.V)], axis=-1)
    v_cart, _ = _chart_to_cartesian(J, np.stack([tab["v1"], tab["v2"]], -1),
                                    np.zeros(tab["v1"].shape + (2, 2)))
    grid = f.grid
    nodes, y = _node_chart_coords(chart, grid, "outer")
    vals = np.zeros((grid.N * grid.N, 2))
    vals[nodes] = _table_to_nodes(chart, v_cart, y)
    return OneFormField(grid, vals.reshape(grid.N, grid.N, 2), "outer")


def chart_potential_table(chart: SemiGeodesicChart, f: SymTensor2Field, f_s: SymTensor2Field) -> Dict[str, np.ndarray]:
    """recover_potential の表（(y¹, r) 成分）。検証用。"""
    X = np.nan_to_num(chart.X).reshape(-1, 2)
    C, K = chart.X.shape[:2]
    return _column_integrate(chart, (f.sample(X) - f_s.sample(X)).reshape(C, K, 3))


__all__ = [
    "Decomposition",
    "GaugeResult",
    "GlobalGaugeResult",
    "chart_potential_table",
    "decompose",
    "gauge_normalize_boundary",
    "gauge_normalize_global",
    "laplacian_s_solve",
    "projection_continuity",
    "recover_potential",
    "semigeodesic_chart",
    "solenoidal_part",
    "solenoidal_projector",
    "weak_divergence",
    "weak_divergence_residual",
]
