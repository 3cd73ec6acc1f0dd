# -*- coding: utf-8 -*-
"""
src/rigidity/boundary.py

境界距離データからの境界ジェット復元と、境界距離関数の線形化。

座標
----
境界法線座標 (β, s)。β は境界角、s = x^n は ∂Ω までの距離。
接方向 p' は β 成分で与え（½ ≤ |p'| ≤ 2）、二点は y± = β₀ ± εp'。
n = 2 なので f^{(k)}_{ββ} は境界角ごとのスカラー。

ジェット復元
------------
ρ²_{g₁} − ρ²_{g₀} の ε 偶部を ε², ε⁴, ε⁶, ε⁸ に最小二乗で当てはめ、
    c₂ = f^{(0)} p²
    c_{2k+2} = C_k ∫₀¹(Γ^n_{s,ββ} p²)^k ds · f^{(k)} p²     (k ≥ 1)
を解く。k ≥ 1 では既知の低次ジェットを collar_jet 計量として g₀ に足し、
その計量と g₁ の差を再計算してから割る。

Public API
----------
EpsilonScan, BoundaryJet, LinearizationTable
boundary_normal_chart(spec, x0, collar)
default_eps_grid(eps0, levels)
epsilon_scan(spec0, spec1, x_prime, p, eps) / epsilon_scans(...)
jet_constant(k)
jet_recover(scans, order)
conformal_jet_oracle(spec, angles)
linearize_distance(spec, f, inflow)
remainder_scaling(spec, f, inflow, eps_grid)
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import quad
from scipy.special import roots_legendre
from sklearn.linear_model import LinearRegression

from src.errors import ConditioningError, ConvexityError, InputError
from src.geometry.charts import boundary_normal_chart
from src.geometry.geodesic import march_chunked, shoot_boundary_pairs
from src.geometry.metric import BumpSet, MetricSpec, collar_jet, det2
from src.transform.xray import InflowGrid

logger = logging.getLogger(__name__)

# ================================================
# 定数
# ================================================

_DEFAULT_EPS0 = 0.32
_DEFAULT_LEVELS = 5
_DEFAULT_STEP = 1e-2
_MAX_ORDER = 2
_FIT_POWERS = 4                 # ε², ε⁴, ε⁶, ε⁸
_DIRECTION_RANGE = (0.5, 2.0)
_COND_LIMIT = 1e8
_CONVEXITY_FLOOR = 0.05
_FOURIER_ORDER = 7
_JET_COLLAR = 0.15              # 再計算用 collar_jet の幅（R 比）
_CHART_COLLAR = 0.05
_CHART_SAMPLES = 20
_POLAR_TOL = 1e-6
_DEFAULT_SCALING = (0.01, 0.02, 0.04, 0.08)


# ================================================
# 補助
# ================================================

def default_eps_grid(eps0: float = _DEFAULT_EPS0, levels: int = _DEFAULT_LEVELS) -> np.ndarray:
    """ε₀·2^{−i}, i = 0 … levels−1。"""
    if eps0 <= 0 or levels < 1:
        raise InputError("eps grid needs eps0 > 0 and at least one level")
    return eps0 * 2.0 ** -np.arange(levels)


def even_fit(eps: np.ndarray, values: np.ndarray, powers: int = _FIT_POWERS) -> np.ndarray:
    """values ≈ Σ_j c_{2j} ε^{2j}（j = 1 … powers）の最小二乗係数 [c₂, c₄, …]。"""
    eps = np.asarray(eps, dtype=float)
    P = min(powers, len(eps))
    A = eps[:, None] ** (2.0 * np.arange(1, P + 1))[None, :]
    scale = np.max(np.abs(A), axis=0)
    coef, *_ = np.linalg.lstsq(A / scale, np.asarray(values, dtype=float), rcond=None)
    return coef / scale


def jet_constant(k: int) -> float:
    """C_k = 2^{−k}∫₀¹(t − t²)^k dt（C₀ = 1, C₁ = 1/12, C₂ = 1/120）。"""
    if k < 0:
        raise InputError("jet order must be non-negative")
    val, _ = quad(lambda t: (t - t * t) ** k, 0.0, 1.0)
    return float(2.0 ** -k * val)


def _angle_of(spec: MetricSpec, x_prime) -> float:
    x = np.asarray(x_prime, dtype=float)
    if x.ndim == 0:
        return float(x)
    _, th = spec.domain.polar(x.reshape(2))
    return float(th)


def _check_directions(directions: Sequence[float]) -> np.ndarray:
    p = np.asarray(directions, dtype=float).ravel()
    lo, hi = _DIRECTION_RANGE
    if len(p) == 0 or np.any(np.abs(p) < lo) or np.any(np.abs(p) > hi):
        raise InputError(f"tangential directions must satisfy {lo} <= |p'| <= {hi}")
    return p


def _sym_monomials(P: np.ndarray) -> np.ndarray:
    """p^α p^β（α ≤ β、非対角は 2 倍）を並べた計画行列（L × d(d+1)/2）。"""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    d = P.shape[1]
    cols = []
    for a in range(d):
        for b in range(a, d):
            cols.append((1.0 if a == b else 2.0) * P[:, a] * P[:, b])
    return np.stack(cols, axis=1)


def _solve_directions(p: np.ndarray, values: np.ndarray, row_scale: np.ndarray) -> float:
    """Σ_l (row_scale_l · f_{αβ}p^αp^β − values_l)² を最小化する f（d = 1）。"""
    A = _sym_monomials(p[:, None])
    cond = float(np.linalg.cond(A)) if len(p) >= A.shape[1] else np.inf
    if not np.isfinite(cond) or cond > _COND_LIMIT:
        raise ConditioningError("direction set does not span the symmetric tensors", cond)
    sol, *_ = np.linalg.lstsq(A * row_scale[:, None], values, rcond=None)
    return float(sol[0])


def _fourier_fit(angles: np.ndarray, values: np.ndarray, order: int = _FOURIER_ORDER) -> np.ndarray:
    """[a0, a1..aL, b1..bL] の三角多項式を最小二乗で当てはめる。"""
    L = max(0, min(order, (len(angles) - 1) // 2))
    m = np.arange(1, L + 1)
    A = np.concatenate([np.ones((len(angles), 1)),
                        np.cos(angles[:, None] * m[None, :]),
                        np.sin(angles[:, None] * m[None, :])], axis=1)
    coef, *_ = np.linalg.lstsq(A, values, rcond=None)
    return coef


def _gamma_beta(spec: MetricSpec, angles: np.ndarray) -> np.ndarray:
    """境界上の Γ^n_ββ = −½ ∂_s h_ββ を境界角 angles で返す。"""
    chart = boundary_normal_chart(spec, collar=_CHART_COLLAR * spec.domain.radius, n_s=_CHART_SAMPLES)
    hbb, _, _ = chart.beta_metric
    dn = np.gradient(hbb, chart.s, axis=1, edge_order=2)[:, chart.zero_index]
    return np.interp(np.mod(angles, 2.0 * np.pi), np.mod(chart.beta, 2.0 * np.pi), -0.5 * dn,
                     period=2.0 * np.pi)


def _require_radial_normals(spec: MetricSpec) -> None:
    """collar_jet は (θ, R − r) を法線座標とみなすので、g₀ の法線測地線が半径方向か確かめる。"""
    dom = spec.domain
    chart = boundary_normal_chart(spec, collar=_CHART_COLLAR * dom.radius, n_s=_CHART_SAMPLES)
    n = np.stack([np.cos(chart.beta), np.sin(chart.beta)], axis=-1)
    expect = dom.c + (dom.radius - chart.s)[None, :, None] * n[:, None, :]
    gap = float(np.max(np.abs(chart.X - expect)))
    if gap > _POLAR_TOL:
        raise InputError(f"jet re-simulation needs radial boundary normals for '{spec.name}' (gap {gap:.2e})")


def _shoot_rho2(spec: MetricSpec, theta: np.ndarray, target: np.ndarray, step: float):
    rho, xi0, _ = shoot_boundary_pairs(spec, theta, target, step=step)
    return rho ** 2, xi0


def _path_integral(spec: MetricSpec, spec0: MetricSpec, spec1: MetricSpec,
                   theta: np.ndarray, xi0: np.ndarray, step: float) -> np.ndarray:
    """spec の測地線（[0, 1] パラメータ）に沿った I(g₁ − g₀)。"""
    z = spec.domain.boundary_point(theta)

    def integrand(x: np.ndarray, v: np.ndarray) -> np.ndarray:
        f = spec1.tensor(x) - spec0.tensor(x)
        return np.einsum("mi,mij,mj->m", v, f, v)

    res = march_chunked(spec, np.concatenate([z, xi0], axis=1), step=step, integrand=integrand)
    return res.t * res.Y[:, 4]


def _slope(x: np.ndarray, y: np.ndarray) -> float:
    keep = (x > 0) & (y > 0)
    if keep.sum() < 2:
        return float("nan")
    X = np.log(x[keep]).reshape(-1, 1)
    return float(LinearRegression().fit(X, np.log(y[keep])).coef_[0])


# ================================================
# ε スキャン
# ================================================

@dataclass
class EpsilonScan:
    spec0: MetricSpec
    spec1: MetricSpec
    x_angle: float
    p: float
    eps: np.ndarray                     # (E,)
    rho2_0: np.ndarray                  # (2, E)  行 0: +ε、行 1: −ε
    rho2_1: np.ndarray                  # (2, E)
    step: float = _DEFAULT_STEP
    path_I0: Optional[np.ndarray] = None    # (2, E)  g₀ 測地線上の I₀(g₁ − g₀)
    path_I1: Optional[np.ndarray] = None    # (2, E)  g₁ 測地線上の I₁(g₁ − g₀)

    @property
    def difference(self) -> np.ndarray:
        return self.rho2_1 - self.rho2_0

    @property
    def even_difference(self) -> np.ndarray:
        d = self.difference
        return 0.5 * (d[0] + d[1])

    def coefficients(self) -> np.ndarray:
        """偶部の [c₂, c₄, c₆, c₈]。"""
        return even_fit(self.eps, self.even_difference)

    def path_coefficients(self) -> Tuple[float, float]:
        """I₀f と I₁f の ε² 係数（k = 0 の経路非依存性の確認用）。"""
        if self.path_I0 is None or self.path_I1 is None:
            raise InputError("scan was built without path integrals (path_check=False)")
        c0 = even_fit(self.eps, 0.5 * (self.path_I0[0] + self.path_I0[1]))[0]
        c1 = even_fit(self.eps, 0.5 * (self.path_I1[0] + self.path_I1[1]))[0]
        return float(c0), float(c1)

    def leading_exponent(self) -> float:
        """log|偶部| の log ε に対する傾き。"""
        return _slope(self.eps, np.abs(self.even_difference))

    def metadata(self) -> Dict[str, object]:
        return {
            "metric0": self.spec0.name,
            "metric1": self.spec1.name,
            "x_angle": f"{self.x_angle:.12f}",
            "p": f"{self.p:.12f}",
            "eps_levels": len(self.eps),
            "fit_powers": min(_FIT_POWERS, len(self.eps)),
            "step": self.step,
        }

    def to_frame(self) -> pd.DataFrame:
        E = len(self.eps)
        df = pd.DataFrame({
            "eps": np.tile(self.eps, 2),
            "sign": np.repeat([1, -1], E),
            "rho2_0": self.rho2_0.ravel(),
            "rho2_1": self.rho2_1.ravel(),
            "difference": self.difference.ravel(),
        })
        if self.path_I0 is not None and self.path_I1 is not None:
            df["path_I0"] = self.path_I0.ravel()
            df["path_I1"] = self.path_I1.ravel()
        return df


def epsilon_scans(
    spec0: MetricSpec,
    spec1: MetricSpec,
    angles: Sequence[float],
    directions: Sequence[float] = (1.0,),
    eps: Optional[Sequence[float]] = None,
    step: float = _DEFAULT_STEP,
    path_check: bool = False,
) -> List[EpsilonScan]:
    """境界角 × 方向の全組を 1 回の shooting バッチで走査する（角の順、方向の順）。"""
    if spec0.domain != spec1.domain:
        raise InputError("both metrics must live on the same disk")
    eps = default_eps_grid() if eps is None else np.asarray(eps, dtype=float).ravel()
    if len(eps) == 0 or np.any(eps <= 0):
        raise InputError("eps grid must be non-empty and positive")
    p = _check_directions(directions)
    angles = np.asarray(angles, dtype=float).ravel()
    A, P, E = len(angles), len(p), len(eps)

    th, pp, sg, ee = np.meshgrid(angles, p, np.array([1.0, -1.0]), eps, indexing="ij")
    theta = th.ravel()
    target = theta + (sg * pp * ee).ravel()
    r0, xi0 = _shoot_rho2(spec0, theta, target, step)
    if spec1 == spec0:
        r1, xi1 = r0, xi0
    else:
        r1, xi1 = _shoot_rho2(spec1, theta, target, step)
    shape = (A, P, 2, E)
    r0, r1 = r0.reshape(shape), r1.reshape(shape)
    I0 = I1 = None
    if path_check:
        I0 = _path_integral(spec0, spec0, spec1, theta, xi0, step).reshape(shape)
        I1 = _path_integral(spec1, spec0, spec1, theta, xi1, step).reshape(shape)
    logger.debug("epsilon scans %s vs %s: %d pairs", spec0.name, spec1.name, len(theta))

    out: List[EpsilonScan] = []
    for a in range(A):
        for j in range(P):
            out.append(EpsilonScan(
                spec0, spec1, float(angles[a]), float(p[j]), eps.copy(), r0[a, j], r1[a, j], step,
                None if I0 is None else I0[a, j], None if I1 is None else I1[a, j],
            ))
    return out


def epsilon_scan(
    spec0: MetricSpec,
    spec1: MetricSpec,
    x_prime,
    p: float = 1.0,
    eps: Optional[Sequence[float]] = None,
    step: float = _DEFAULT_STEP,
    path_check: bool = False,
) -> EpsilonScan:
    """x'（境界角または境界点）と p' の 1 組の走査。"""
    angle = _angle_of(spec0, x_prime)
    return epsilon_scans(spec0, spec1, [angle], [p], eps, step, path_check)[0]


# ================================================
# ジェット復元
# ================================================

@dataclass
class BoundaryJet:
    angles: np.ndarray          # (J,)
    coeffs: np.ndarray          # (K+1, J)  f^{(k)}_{ββ}(β_j)
    gamma0: np.ndarray          # (J,)      g₀ の Γ^n_ββ
    gamma1: np.ndarray          # (J,)      g₁ の Γ^n_ββ
    directions: np.ndarray
    eps: np.ndarray
    tags: Tuple[str, str] = ("", "")
    path_c2: Optional[np.ndarray] = None    # (2, J)  I₀f, I₁f の ε² 係数

    @property
    def order(self) -> int:
        return self.coeffs.shape[0] - 1

    def coefficient(self, k: int) -> np.ndarray:
        if not 0 <= k <= self.order:
            raise InputError(f"jet order {k} was not recovered (max {self.order})")
        return self.coeffs[k]

    def fourier(self, k: int) -> np.ndarray:
        return _fourier_fit(self.angles, self.coefficient(k))

    def metadata(self) -> Dict[str, object]:
        return {
            "metric0": self.tags[0],
            "metric1": self.tags[1],
            "order": self.order,
            "directions": " ".join(f"{v:g}" for v in self.directions),
            "eps": " ".join(f"{v:g}" for v in self.eps),
            "fit_powers": min(_FIT_POWERS, len(self.eps)),
        }

    def to_frame(self) -> pd.DataFrame:
        K1, J = self.coeffs.shape
        df = pd.DataFrame({
            "boundary_angle": np.tile(self.angles, K1),
            "order": np.repeat(np.arange(K1), J),
            "value": self.coeffs.ravel(),
            "gamma0": np.tile(self.gamma0, K1),
            "gamma1": np.tile(self.gamma1, K1),
        })
        return df


def _group_scans(scans: Sequence[EpsilonScan]):
    if not scans:
        raise InputError("jet recovery needs at least one epsilon scan")
    first = scans[0]
    for s in scans:
        if s.spec0 != first.spec0 or s.spec1 != first.spec1:
            raise InputError("all scans must compare the same pair of metrics")
        if s.eps.shape != first.eps.shape or not np.allclose(s.eps, first.eps):
            raise InputError("all scans must share one eps grid")
    angles = np.array(sorted({s.x_angle for s in scans}))
    groups = [[s for s in scans if s.x_angle == a] for a in angles]
    dirs = np.array([s.p for s in groups[0]])
    for g in groups:
        if len(g) != len(dirs) or not np.allclose([s.p for s in g], dirs):
            raise InputError("every boundary angle needs the same direction set")
    return angles, groups, dirs


def _mean_gamma_power(a: np.ndarray, b: np.ndarray, k: int) -> np.ndarray:
    """∫₀¹((1 − s)a + s b)^k ds（Gauss-Legendre で厳密）。"""
    x, w = roots_legendre(k + 1)
    s = 0.5 * (x + 1.0)
    return 0.5 * np.sum(w[:, None] * ((1.0 - s)[:, None] * a[None, :] + s[:, None] * b[None, :]) ** k, axis=0)


def jet_recover(
    scans: Sequence[EpsilonScan],
    order: int = 1,
    convexity_floor: float = _CONVEXITY_FLOOR,
    collar: Optional[float] = None,
) -> BoundaryJet:
    """
    f^{(0)} … f^{(order)} を復元する。
    k ≥ 1 は低次ジェットを足した打ち切り計量を g₀ の代わりに走査し直す。
    走査点を越えた接方向の変化は境界角全体への Fourier 当てはめで補う。
    """
    if not 0 <= order <= _MAX_ORDER:
        raise InputError(f"recovery order must be within 0..{_MAX_ORDER}")
    angles, groups, dirs = _group_scans(scans)
    spec0, spec1 = scans[0].spec0, scans[0].spec1
    eps, step = scans[0].eps, scans[0].step
    if order > 0 and order + 2 > min(_FIT_POWERS, len(eps)):
        raise InputError(f"eps grid of {len(eps)} levels cannot separate order {order}")

    J = len(angles)
    coeffs = np.zeros((order + 1, J))
    ones = np.ones(len(dirs))
    for j, g in enumerate(groups):
        c2 = np.array([s.coefficients()[0] for s in g])
        coeffs[0, j] = _solve_directions(dirs, c2, ones)

    path_c2 = None
    if all(s.path_I0 is not None for s in scans):
        path_c2 = np.array([[np.mean([s.path_coefficients()[i] / s.p ** 2 for s in g]) for g in groups]
                            for i in (0, 1)])

    gamma0 = _gamma_beta(spec0, angles)
    gamma1 = _gamma_beta(spec1, angles) if spec1 != spec0 else gamma0
    if order == 0:
        return BoundaryJet(angles, coeffs, gamma0, gamma1, dirs, eps, (spec0.name, spec1.name), path_c2)

    _require_radial_normals(spec0)
    if J < 3:
        raise InputError("tangential re-simulation needs at least 3 boundary angles")
    width = (_JET_COLLAR * spec0.domain.radius) if collar is None else float(collar)
    rho2_1 = np.stack([np.stack([s.rho2_1 for s in g]) for g in groups])        # (J, P, 2, E)
    for k in range(1, order + 1):
        fourier = np.stack([_fourier_fit(angles, coeffs[i]) for i in range(k)])
        trunc = collar_jet(spec0, width, fourier, tag=f"{spec0.name}+jet{k - 1}")
        rescan = epsilon_scans(trunc, trunc, angles, dirs, eps, step)
        rho2_t = np.stack([s.rho2_0 for s in rescan]).reshape(rho2_1.shape)
        even = 0.5 * ((rho2_1 - rho2_t)[:, :, 0] + (rho2_1 - rho2_t)[:, :, 1])   # (J, P, E)

        gt = _gamma_beta(trunc, angles)
        avg = 0.5 * (gt + gamma1)
        if np.min(avg) < convexity_floor:
            raise ConvexityError("averaged second fundamental form below threshold", float(np.min(avg)))
        mean_k = _mean_gamma_power(gt, gamma1, k)
        Ck = jet_constant(k)
        for j in range(J):
            c = np.array([even_fit(eps, even[j, l])[k] for l in range(len(dirs))])
            coeffs[k, j] = _solve_directions(dirs, c, Ck * mean_k[j] * dirs ** (2 * k))
        logger.info("jet order %d recovered at %d boundary angles", k, J)
    return BoundaryJet(angles, coeffs, gamma0, gamma1, dirs, eps, (spec0.name, spec1.name), path_c2)


def conformal_jet_oracle(spec: MetricSpec, angles: Sequence[float]) -> np.ndarray:
    """
    g₀ = ユークリッド、g₁ = e^{2φ}δ のときの記号的 Taylor 係数 (2, J)：
        f^{(0)} = R²(e^{2φ} − 1),  f^{(1)} = 2R − 2R e^{φ}(1 + R ∂_rφ)
    """
    if spec.family != "conformal":
        raise InputError("the Taylor oracle is defined for the conformal family")
    dom = spec.domain
    a = np.asarray(angles, dtype=float).ravel()
    z = dom.boundary_point(a)
    phi, dphi, _ = spec.conformal_factor(z)
    n = np.stack([np.cos(a), np.sin(a)], axis=-1)
    dr = np.sum(dphi * n, axis=-1)
    R = dom.radius
    f0 = R ** 2 * (np.exp(2.0 * phi) - 1.0)
    f1 = 2.0 * R - 2.0 * R * np.exp(phi) * (1.0 + R * dr)
    return np.stack([f0, f1])


# ================================================
# 距離関数の線形化
# ================================================

@dataclass
class LinearizationTable:
    frame: pd.DataFrame
    f_c1: float
    tag: str = ""

    @property
    def residual(self) -> np.ndarray:
        return self.frame["residual"].to_numpy()

    def max_residual(self) -> float:
        return float(np.max(np.abs(self.residual)))

    def bound_ratio(self) -> float:
        """max |R| / (|x − y|·‖f‖²_{C¹})。"""
        if self.f_c1 == 0.0:
            return 0.0
        chord = self.frame["chord"].to_numpy()
        keep = chord > 0
        return float(np.max(np.abs(self.residual[keep]) / (chord[keep] * self.f_c1 ** 2)))


def _check_perturbation(spec: MetricSpec, f) -> BumpSet:
    if not isinstance(f, BumpSet):
        raise InputError("linearization needs a closed-form compact perturbation (BumpSet)")
    R = spec.domain.radius
    for _amp, a, cx, cy, _, _ in f.terms:
        if np.hypot(cx - spec.domain.center[0], cy - spec.domain.center[1]) + a >= R:
            raise InputError("perturbation must vanish near the boundary")
    return f


def _require_positive(spec: MetricSpec) -> None:
    dom = spec.domain
    r = np.linspace(0.0, dom.outer_radius, 45)
    t = np.linspace(0.0, 2.0 * np.pi, 96, endpoint=False)
    rr, tt = np.meshgrid(r, t, indexing="ij")
    pts = dom.c + np.stack([rr * np.cos(tt), rr * np.sin(tt)], axis=-1)
    g = spec.tensor(pts)
    if np.min(det2(g)) <= 0 or np.min(g[..., 0, 0]) <= 0:
        raise InputError(f"g + f is not positive definite for '{spec.name}'")


def linearize_distance(
    spec: MetricSpec,
    f: BumpSet,
    inflow: InflowGrid,
    step: float = _DEFAULT_STEP,
) -> LinearizationTable:
    """
    Γ₋ の各レイの端点対で ρ̃ − ρ − ½ I_g f を表にする。
    ρ と I_g f は g 測地線の 1 回の積分、ρ̃ は g + f での shooting。
    """
    bumps = _check_perturbation(spec, f)
    if inflow.spec != spec or inflow.outer:
        raise InputError("linearization needs an inflow grid on ∂Ω for the same metric")
    tilde = spec.perturbed(bumps)
    _require_positive(tilde)

    def integrand(x: np.ndarray, v: np.ndarray) -> np.ndarray:
        val, _, _ = bumps.evaluate(x)
        return np.einsum("mi,mij,mj->m", v, val, v)

    res = march_chunked(spec, inflow.rays(), step=step, integrand=integrand)
    rho = res.t
    half_If = 0.5 * res.Y[:, 4]
    _, theta_y = spec.domain.polar(res.Y[:, :2])
    Z, W = inflow.shape
    theta_x = np.repeat(inflow.beta, W)
    if all(t[0] == 0.0 for t in bumps.terms):
        rho_t = rho.copy()
    else:
        rho_t, _, _ = shoot_boundary_pairs(tilde, theta_x, theta_y, step=step)
    zx = spec.domain.boundary_point(theta_x)
    zy = spec.domain.boundary_point(theta_y)

    frame = pd.DataFrame({
        "boundary_angle": theta_x,
        "direction_angle": np.tile(inflow.psi, Z),
        "exit_angle": theta_y,
        "chord": np.hypot(*(zy - zx).T),
        "rho": rho,
        "rho_perturbed": rho_t,
        "half_If": half_If,
        "residual": rho_t - rho - half_If,
    })
    # ‖f‖_{C¹} は Ω 上の極座標サンプルで評価
    dom = spec.domain
    r = np.linspace(0.0, dom.radius, 41)
    t = np.linspace(0.0, 2.0 * np.pi, 96, endpoint=False)
    rr, tt = np.meshgrid(r, t, indexing="ij")
    pts = dom.c + np.stack([rr * np.cos(tt), rr * np.sin(tt)], axis=-1)
    table = LinearizationTable(frame, bumps.c1_norm(pts), tilde.name)
    logger.info("linearization %s: max |R| = %.3e", tilde.name, table.max_residual())
    return table


def remainder_scaling(
    spec: MetricSpec,
    f: BumpSet,
    inflow: InflowGrid,
    eps_grid: Sequence[float] = _DEFAULT_SCALING,
    step: float = _DEFAULT_STEP,
) -> Tuple[pd.DataFrame, float]:
    """f → εf の掃引。returns (表, log max|R| の log ε に対する傾き)。"""
    rows = []
    for e in eps_grid:
        tab = linearize_distance(spec, f.scaled(float(e)), inflow, step)
        rows.append({"eps": float(e), "max_residual": tab.max_residual(), "bound_ratio": tab.bound_ratio()})
    df = pd.DataFrame(rows)
    return df, _slope(df["eps"].to_numpy(), df["max_residual"].to_numpy())


__all__ = [
    "BoundaryJet",
    "EpsilonScan",
    "LinearizationTable",
    "boundary_normal_chart",
    "conformal_jet_oracle",
    "default_eps_grid",
    "epsilon_scan",
    "epsilon_scans",
    "even_fit",
    "jet_constant",
    "jet_recover",
    "linearize_distance",
    "remainder_scaling",
]
