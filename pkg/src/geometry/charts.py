# -*- coding: utf-8 -*-
"""
src/geometry/charts.py

g_in = δ_in を満たす 2 種類の座標チャート。

BoundaryNormalChart : 境界法線座標 (x', x^n)。x^n = ρ(x, ∂Ω)、x' は x₀ からの境界弧長。
                      法線測地線を (β, s) 表に記録し、∂_β X は FFT、逆写像は 3 次スプライン + Newton。
SemiGeodesicChart   : x₀ ∈ ∂Ω₁ を中心とする極正規座標から y¹ = θ¹/θ², y² = r。
                      列（y¹ = const）ごとに測地線と Jacobi 場を記録する。

表の中では (β, s)・(y¹, r) をそのまま座標として使う（どちらも g_in = δ_in）。
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import RectBivariateSpline, RegularGridInterpolator

from src.errors import ChartError
from src.geometry.geodesic import exp_map, log_map_batch, march
from src.geometry.metric import MetricSpec, christoffel_from_metric, inv2

logger = logging.getLogger(__name__)

# ================================================
# 定数
# ================================================

_COLLAR_FRACTION = 0.15
_N_BETA = 256
_N_S = 60
_PAD = 3
_NEWTON_ITERS = 30
_NEWTON_TOL = 1e-12

_SG_COLUMNS = 961
_SG_HALF_SPAN = 3.0
_SG_DR = 1.25e-3
_TANGENCY_DEG = 5.0


def _quad(a: np.ndarray, g: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.einsum("...i,...ij,...j->...", a, g, b)


# ================================================
# 境界法線座標
# ================================================

@dataclass
class BoundaryNormalChart:
    spec: MetricSpec
    x0_angle: float
    width: float
    outer_width: float
    beta: np.ndarray            # (B,)
    s: np.ndarray               # (S,)  外側は負
    X: np.ndarray               # (B, S, 2)
    V: np.ndarray               # (B, S, 2)  ∂_s X
    Xb: np.ndarray              # (B, S, 2)  ∂_β X
    arclength: np.ndarray       # (B,)  x'(β)
    perimeter: float
    _splines: Dict[str, RectBivariateSpline] = field(default_factory=dict, repr=False)

    # ---------------- 表の量 ----------------
    @property
    def beta_metric(self) -> np.ndarray:
        """(β, s) 座標での (h_ββ, h_βs, h_ss)。"""
        g = self.spec.tensor(self.X)
        return (_quad(self.Xb, g, self.Xb), _quad(self.Xb, g, self.V), _quad(self.V, g, self.V))

    @property
    def dxp_dbeta(self) -> np.ndarray:
        hbb, _, _ = self.beta_metric
        return np.sqrt(hbb[:, self.zero_index])

    @property
    def zero_index(self) -> int:
        return int(np.argmin(np.abs(self.s)))

    def metric_table(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(x', x^n) 座標での (g_11, g_1n, g_nn)。"""
        hbb, hbs, hss = self.beta_metric
        j = 1.0 / self.dxp_dbeta[:, None]
        return hbb * j ** 2, hbs * j, hss

    def verify(self) -> Dict[str, float]:
        _, g1n, gnn = self.metric_table()
        return {"max_g1n": float(np.max(np.abs(g1n))), "max_gnn_minus_1": float(np.max(np.abs(gnn - 1.0)))}

    def christoffel_table(self) -> np.ndarray:
        """(x', x^n) 座標の Γ^k_ij を表の上で差分評価（[B, S, k, i, j]）。"""
        g11, g1n, gnn = self.metric_table()
        G = np.stack([np.stack([g11, g1n], -1), np.stack([g1n, gnn], -1)], -2)
        dxp = np.gradient(self.arclength)
        dG1 = np.gradient(G, axis=0) / dxp[:, None, None, None]
        dGn = np.gradient(G, self.s, axis=1, edge_order=2)
        dG = np.stack([dG1, dGn], axis=2)
        return christoffel_from_metric(G, dG)

    def second_fundamental_form(self) -> Tuple[np.ndarray, np.ndarray]:
        """境界上の Γ^n_{x'x'} = −½ ∂_n g_11（強凸なら正）。"""
        g11, _, _ = self.metric_table()
        dn = np.gradient(g11, self.s, axis=1, edge_order=2)
        return self.arclength, -0.5 * dn[:, self.zero_index]

    # ---------------- 補間 ----------------
    def _table_spline(self, arr: np.ndarray) -> RectBivariateSpline:
        b_ext = np.concatenate([self.beta[-_PAD:] - 2 * np.pi, self.beta, self.beta[:_PAD] + 2 * np.pi])
        a_ext = np.concatenate([arr[-_PAD:], arr, arr[:_PAD]], axis=0)
        return RectBivariateSpline(b_ext, self.s, a_ext, kx=3, ky=3)

    def _spline(self, name: str) -> RectBivariateSpline:
        if name not in self._splines:
            arr = {"x": self.X[..., 0], "y": self.X[..., 1],
                   "vx": self.V[..., 0], "vy": self.V[..., 1],
                   "bx": self.Xb[..., 0], "by": self.Xb[..., 1]}[name]
            self._splines[name] = self._table_spline(arr)
        return self._splines[name]

    def sample_table(self, table: np.ndarray, beta: np.ndarray, s: np.ndarray) -> np.ndarray:
        """(B, S, ...) の表の量を (β, s) で 3 次スプライン補間する。"""
        b = self._wrap_beta(np.asarray(beta, dtype=float))
        s = np.asarray(s, dtype=float)
        flat = table.reshape(table.shape[0], table.shape[1], -1)
        out = np.stack([self._table_spline(flat[..., c]).ev(b, s) for c in range(flat.shape[-1])], axis=-1)
        return out.reshape(b.shape + table.shape[2:])

    def _wrap_beta(self, b: np.ndarray) -> np.ndarray:
        return np.mod(b - self.beta[0], 2 * np.pi) + self.beta[0]

    def point_at(self, beta: np.ndarray, s: np.ndarray) -> np.ndarray:
        b = self._wrap_beta(np.asarray(beta, dtype=float))
        s = np.asarray(s, dtype=float)
        return np.stack([self._spline("x").ev(b, s), self._spline("y").ev(b, s)], axis=-1)

    def frame_at(self, beta: np.ndarray, s: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """(∂_β X, ∂_s X)。"""
        b = self._wrap_beta(np.asarray(beta, dtype=float))
        s = np.asarray(s, dtype=float)
        Xb = np.stack([self._spline("bx").ev(b, s), self._spline("by").ev(b, s)], axis=-1)
        V = np.stack([self._spline("vx").ev(b, s), self._spline("vy").ev(b, s)], axis=-1)
        return Xb, V

    def beta_coords(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """点 → (β, s)。コラー外は NaN。"""
        p = np.asarray(points, dtype=float).reshape(-1, 2)
        r, th = self.spec.domain.polar(p)
        b = self._wrap_beta(th)
        s = self.spec.domain.radius - r
        for _ in range(_NEWTON_ITERS):
            X = self.point_at(b, s)
            Xb, V = self.frame_at(b, s)
            F = X - p
            det = Xb[:, 0] * V[:, 1] - Xb[:, 1] * V[:, 0]
            db = -(V[:, 1] * F[:, 0] - V[:, 0] * F[:, 1]) / det
            ds = -(-Xb[:, 1] * F[:, 0] + Xb[:, 0] * F[:, 1]) / det
            b = self._wrap_beta(b + db)
            s = np.clip(s + ds, self.s[0] - 0.05, self.s[-1] + 0.05)
            if np.max(np.abs(F)) < _NEWTON_TOL:
                break
        out = (s < self.s[0] - 1e-12) | (s > self.s[-1] + 1e-12)
        s = np.where(out, np.nan, s)
        b = np.where(out, np.nan, b)
        return b, s

    # ---------------- x' 変換 ----------------
    def tangent_scale(self, beta: np.ndarray) -> np.ndarray:
        """dx'/dβ（境界上、周期補間）。"""
        b = self._wrap_beta(np.asarray(beta, dtype=float))
        bb = np.concatenate([self.beta, [self.beta[0] + 2 * np.pi]])
        vv = np.concatenate([self.dxp_dbeta, self.dxp_dbeta[:1]])
        return np.interp(b, bb, vv)

    def x_prime(self, beta: np.ndarray) -> np.ndarray:
        b = self._wrap_beta(np.asarray(beta, dtype=float))
        bb = np.concatenate([self.beta, [self.beta[0] + 2 * np.pi]])
        aa = np.concatenate([self.arclength, [self.perimeter]])
        return np.mod(np.interp(b, bb, aa), self.perimeter)

    def beta_of(self, xp: np.ndarray) -> np.ndarray:
        xp = np.mod(np.asarray(xp, dtype=float), self.perimeter)
        bb = np.concatenate([self.beta, [self.beta[0] + 2 * np.pi]])
        aa = np.concatenate([self.arclength, [self.perimeter]])
        return np.interp(xp, aa, bb)

    def to_chart(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """点 → (x', x^n)。"""
        b, s = self.beta_coords(points)
        xp = np.where(np.isnan(b), np.nan, self.x_prime(np.nan_to_num(b)))
        return xp, s

    def from_chart(self, xp: np.ndarray, xn: np.ndarray) -> np.ndarray:
        return self.point_at(self.beta_of(xp), xn)


def boundary_normal_chart(
    spec: MetricSpec,
    x0=None,
    collar: Optional[float] = None,
    outer_collar: float = 0.0,
    n_beta: int = _N_BETA,
    n_s: int = _N_S,
) -> BoundaryNormalChart:
    """
    境界から内向き（outer_collar > 0 なら外向きも）の法線測地線を表にする。
    コラー幅は既定で 0.15·R。法線測地線が焦点を持てば ChartError。
    """
    dom = spec.domain
    width = _COLLAR_FRACTION * dom.radius if collar is None else float(collar)
    if not (0.0 < width < dom.radius):
        raise ChartError(f"collar width {width} outside (0, R)")
    if outer_collar < 0 or outer_collar >= dom.outer_radius - dom.radius + 0.1:
        raise ChartError(f"outer collar {outer_collar} too wide")
    x0_angle = 0.0 if x0 is None else float(np.arctan2(x0[1] - dom.center[1], x0[0] - dom.center[0]))
    beta = x0_angle + 2.0 * np.pi * np.arange(n_beta) / n_beta
    ds = width / n_s
    n_out = int(np.ceil(outer_collar / ds - 1e-9)) if outer_collar > 0 else 0
    z = dom.boundary_point(beta)
    n = np.stack([np.cos(beta), np.sin(beta)], axis=-1)
    nstar = np.sqrt(_quad(n, spec.inverse(z), n))
    stop = 1.25 * dom.outer_radius

    def trace(sign: float, count: int):
        Y0 = np.concatenate([z, sign * n / nstar[:, None]], axis=1)
        res = march(spec, Y0, t_end=count * ds, step=ds, stop_radius=stop, record=True)
        if res.exited.any():
            raise ChartError("normal geodesic left the tracing region")
        Ys = res.rec_Y[: count + 1]
        g = spec.tensor(Ys[..., :2])
        v = np.einsum("kmij,kmj->kmi", inv2(g), Ys[..., 2:4])
        return Ys[..., :2], v

    Xin, Vin = trace(-1.0, n_s)                     # (n_s+1, B, 2)
    Xs, Vs, ss = [Xin], [Vin], [np.arange(n_s + 1) * ds]
    if n_out:
        Xo, Vo = trace(1.0, n_out)
        Xs.insert(0, Xo[:0:-1])
        Vs.insert(0, -Vo[:0:-1])
        ss.insert(0, -np.arange(n_out, 0, -1) * ds)
    X = np.concatenate(Xs, axis=0).transpose(1, 0, 2)
    V = np.concatenate(Vs, axis=0).transpose(1, 0, 2)
    s = np.concatenate(ss)

    k = np.fft.fftfreq(n_beta, d=1.0 / n_beta)
    Xb = np.real(np.fft.ifft(1j * k[:, None, None] * np.fft.fft(X, axis=0), axis=0))

    det = Xb[..., 0] * V[..., 1] - Xb[..., 1] * V[..., 0]
    if np.min(det) <= 0.05 * np.max(det):
        raise ChartError("collar exceeds the injectivity of boundary normal coordinates")

    g0 = spec.tensor(X[:, n_out])
    speed = np.sqrt(_quad(Xb[:, n_out], g0, Xb[:, n_out]))
    ext = np.concatenate([speed, speed[:1]])
    arclen = cumulative_trapezoid(ext, dx=2.0 * np.pi / n_beta, initial=0.0)
    chart = BoundaryNormalChart(spec, x0_angle, width, n_out * ds, beta, s, X, V, Xb,
                                arclen[:-1], float(arclen[-1]))
    logger.debug("boundary normal chart %s: %s", spec.name, chart.verify())
    return chart


# ================================================
# 半測地（大域）座標
# ================================================

@dataclass
class SemiGeodesicChart:
    """
    x₀ ∈ ∂Ω₁ から出る測地線を列 y¹ = const に持つ大域チャート。
    表は (列 c, 半径 k) の格子で、範囲外は NaN。
    """
    spec: MetricSpec
    x0: np.ndarray
    frame: np.ndarray           # (2, 2) 行 = e1, e2（g(x₀) 正規直交、e2 は内向き法線）
    y1: np.ndarray              # (C,)
    r: np.ndarray               # (K,)
    X: np.ndarray               # (C, K, 2)
    V: np.ndarray               # (C, K, 2)  ∂x/∂y²
    J1: np.ndarray              # (C, K, 2)  ∂x/∂y¹
    valid: np.ndarray           # (C, K)
    entry_angle_deg: np.ndarray  # (C,) ∂Ω との交差角（交差しない列は 0）

    @property
    def metric_table(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        X = np.nan_to_num(self.X)
        g = self.spec.tensor(X)
        return _quad(self.J1, g, self.J1), _quad(self.J1, g, self.V), _quad(self.V, g, self.V)

    @property
    def in_domain(self) -> np.ndarray:
        r, _ = self.spec.domain.polar(np.nan_to_num(self.X, nan=1e9))
        return self.valid & (r <= self.spec.domain.radius)

    @property
    def band_columns(self) -> np.ndarray:
        """∂Ω と 5° 未満で交わる（または交わらない）列。"""
        return self.entry_angle_deg < _TANGENCY_DEG

    def verify(self) -> Dict[str, float]:
        """Ω 内の表点での max|g_12|、max|g_22 − 1|。"""
        _, g12, g22 = self.metric_table
        m = self.in_domain & ~self.band_columns[:, None]
        return {"max_g12": float(np.max(np.abs(g12[m]))), "max_g22_minus_1": float(np.max(np.abs(g22[m] - 1.0)))}

    def to_chart(self, points: np.ndarray, step: float = 1e-2) -> np.ndarray:
        """点 → (y¹, y²)。exp_{x₀}⁻¹ を shooting で解く。"""
        p = np.asarray(points, dtype=float).reshape(-1, 2)
        res = log_map_batch(self.spec, np.broadcast_to(self.x0, p.shape), p, step=step, tol=1e-10)
        if not np.all(res.converged):
            raise ChartError(f"semigeodesic inverse failed at {int(np.sum(~res.converged))} points")
        G0 = self.spec.tensor(self.x0)
        u = np.einsum("ij,mj->mi", inv2(G0), res.omega)
        th = np.einsum("ai,ij,mj->ma", self.frame, G0, u)
        if np.min(th[:, 1]) <= 0:
            raise ChartError("theta_n lower bound violated: metric not simple on the outer disk")
        return np.stack([th[:, 0] / th[:, 1], res.t], axis=1)

    def from_chart(self, y: np.ndarray, step: float = 1e-3) -> np.ndarray:
        y = np.asarray(y, dtype=float).reshape(-1, 2)
        u = (y[:, :1] * self.frame[0] + self.frame[1]) / np.sqrt(1.0 + y[:, :1] ** 2)
        return exp_map(self.spec, np.broadcast_to(self.x0, u.shape), y[:, 1:2] * u, step=step)

    def interpolator(self, table: np.ndarray) -> RegularGridInterpolator:
        """表の量を (y¹, r) で線形補間する（範囲外・NaN は 0）。"""
        return RegularGridInterpolator((self.y1, self.r), np.nan_to_num(table), method="linear",
                                       bounds_error=False, fill_value=0.0)


def semigeodesic_chart(
    spec: MetricSpec,
    x0_angle: float = -0.5 * np.pi,
    columns: int = _SG_COLUMNS,
    half_span: float = _SG_HALF_SPAN,
    dr: float = _SG_DR,
) -> SemiGeodesicChart:
    """
    x₀ = ∂Ω₁ 上の角 x0_angle の点（既定は最下点）を中心とする半測地チャート。
    """
    dom = spec.domain
    x0 = dom.boundary_point(x0_angle, outer=True)
    G0 = spec.tensor(x0)
    inward = -np.array([np.cos(x0_angle), np.sin(x0_angle)])
    e2 = inward / np.sqrt(inward @ G0 @ inward)
    t = np.array([-inward[1], inward[0]])
    t = t - (t @ G0 @ e2) * e2
    e1 = t / np.sqrt(t @ G0 @ t)
    if (e1[0] * e2[1] - e1[1] * e2[0]) < 0:
        e1 = -e1
    frame = np.stack([e1, e2])

    y1 = np.linspace(-half_span, half_span, columns)
    u = (y1[:, None] * e1 + e2) / np.sqrt(1.0 + y1[:, None] ** 2)
    du = (e1 - y1[:, None] * e2) / (1.0 + y1[:, None] ** 2) ** 1.5
    xi0 = u @ G0
    dxi0 = du @ G0
    C = len(y1)
    Y0 = np.concatenate([np.broadcast_to(x0, (C, 2)), xi0, np.zeros((C, 2)), dxi0], axis=1)
    res = march(spec, Y0, step=dr, stop_radius=dom.outer_radius, variational=True, record=True)

    K = res.rec_t.shape[0]
    r = np.arange(K) * dr
    on_grid = np.abs(res.rec_t - r[:, None]) < 1e-9
    valid = (res.rec_valid & on_grid).T                 # (C, K)
    Yr = res.rec_Y.transpose(1, 0, 2)
    X = np.where(valid[..., None], Yr[..., 0:2], np.nan)
    g = spec.tensor(np.nan_to_num(Yr[..., 0:2]))
    V = np.where(valid[..., None], np.einsum("ckij,ckj->cki", inv2(g), Yr[..., 2:4]), np.nan)
    J1 = np.where(valid[..., None], Yr[..., 4:6], np.nan)

    # ∂Ω との交差角
    rad, th = dom.polar(np.nan_to_num(X, nan=1e9))
    inside = valid & (rad <= dom.radius)
    angle = np.zeros(C)
    for c in range(C):
        ks = np.flatnonzero(inside[c])
        if len(ks) == 0:
            continue
        k = ks[0]
        n = np.array([np.cos(th[c, k]), np.sin(th[c, k])])
        gk = g[c, k]
        sin_a = abs(n @ V[c, k]) / (np.sqrt(n @ inv2(gk) @ n) * np.sqrt(V[c, k] @ gk @ V[c, k]))
        angle[c] = np.degrees(np.arcsin(min(sin_a, 1.0)))
    chart = SemiGeodesicChart(spec, x0, frame, y1, r, X, V, J1, valid, angle)
    logger.debug("semigeodesic chart %s: %s, band columns=%d",
                 spec.name, chart.verify(), int(chart.band_columns.sum()))
    return chart
