# -*- coding: utf-8 -*-
"""
src/geometry/metric.py

平面円板上の閉形式リーマン計量ファミリー。

Families
--------
euclidean  : g_ij = δ_ij
conformal  : g = e^{2φ} δ,  φ(x) = Σ A·exp(−B|x − c|²)
general    : g = base + Σ A·ψ(|x − c|/a)·R(α)diag(1, β)R(α)ᵀ   (ψ はコンパクト台の C^∞ バンプ)
collar_jet : g = base + χ(R − r)·Σ_k (R − r)^k c_k(θ) dθ⊗dθ   (境界コラー内の打ち切りジェット)

Public API
----------
DiskDomain, BumpSet, MetricSpec
euclidean(), conformal(terms), general(bumps, base), collar_jet(base, width, coeffs)
eval_metric(spec, x) -> (..., n, n)
christoffel(spec, x) -> (..., n, n, n)   Γ[..., k, i, j] = Γ^k_ij
christoffel_from_metric(g, dg)
hamiltonian(spec, x, xi) -> H = ½ g^{ij} ξ_i ξ_j

配列規約
--------
点は (..., 2) 配列。gradient の添字は dg[..., l, i, j] = ∂_l g_ij、
hessian は ddg[..., k, l, i, j] = ∂_k ∂_l g_ij。
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from src.errors import DomainError, MetricError

logger = logging.getLogger(__name__)

# ================================================
# 定数
# ================================================

_FAMILIES = ("euclidean", "conformal", "general", "collar_jet")

_CONFORMAL_GROUP = 4      # (A, B, cx, cy)
_BUMP_GROUP = 6           # (A, a, cx, cy, alpha, beta)
_COND_LIMIT = 1e12
_DOMAIN_SLACK = 1e-9


# ================================================
# 領域
# ================================================

@dataclass(frozen=True)
class DiskDomain:
    """円板 Ω（半径 radius）と拡大円板 Ω₁（半径 outer_radius）。"""
    center: Tuple[float, float] = (0.0, 0.0)
    radius: float = 1.0
    outer_radius: float = 1.1

    def __post_init__(self) -> None:
        if not (0.0 < self.radius < self.outer_radius):
            raise DomainError(
                f"need 0 < radius < outer_radius, got {self.radius}, {self.outer_radius}"
            )

    @property
    def c(self) -> np.ndarray:
        return np.asarray(self.center, dtype=float)

    def polar(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        d = np.asarray(x, dtype=float) - self.c
        return np.hypot(d[..., 0], d[..., 1]), np.arctan2(d[..., 1], d[..., 0])

    def boundary_point(self, angle, outer: bool = False) -> np.ndarray:
        """境界角 angle の点（outer=True で ∂Ω₁）。"""
        R = self.outer_radius if outer else self.radius
        a = np.asarray(angle, dtype=float)
        return self.c + R * np.stack([np.cos(a), np.sin(a)], axis=-1)

    def inside(self, x: np.ndarray, outer: bool = False) -> np.ndarray:
        R = self.outer_radius if outer else self.radius
        r, _ = self.polar(x)
        return r <= R * (1.0 + _DOMAIN_SLACK)


# ================================================
# コンパクト台バンプ
# ================================================

def _bump_profile(q: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """ψ(q) = exp(1 − 1/(1 − q)) と q に関する 1 階・2 階微分（q ≥ 1 で 0）。"""
    q = np.asarray(q, dtype=float)
    inside = q < 1.0
    u = np.where(inside, 1.0 / np.where(inside, 1.0 - q, 1.0), 0.0)
    psi = np.where(inside, np.exp(1.0 - u), 0.0)
    d1 = -u ** 2 * psi
    d2 = psi * (u ** 4 - 2.0 * u ** 3)
    return psi, d1, d2


def bump(x: np.ndarray, center: Sequence[float], radius: float) -> np.ndarray:
    """スカラーのバンプ関数 ψ(|x − c|²/a²)。値は中心で 1。"""
    d = np.asarray(x, dtype=float) - np.asarray(center, dtype=float)
    psi, _, _ = _bump_profile((d[..., 0] ** 2 + d[..., 1] ** 2) / radius ** 2)
    return psi


def bump_derivatives(x: np.ndarray, center: Sequence[float], radius: float):
    """(ψ, ∇ψ, ∇²ψ)。"""
    d = np.asarray(x, dtype=float) - np.asarray(center, dtype=float)
    psi, p1, p2 = _bump_profile((d[..., 0] ** 2 + d[..., 1] ** 2) / radius ** 2)
    grad = (2.0 * p1 / radius ** 2)[..., None] * d
    hess = (4.0 * p2 / radius ** 4)[..., None, None] * d[..., :, None] * d[..., None, :]
    hess = hess + (2.0 * p1 / radius ** 2)[..., None, None] * np.eye(2)
    return psi, grad, hess


@dataclass(frozen=True)
class BumpSet:
    """
    コンパクト台の対称 2-テンソル Σ A·ψ(|x−c|²/a²)·T(α, β)。

    T(α, β) = β·I + (1 − β)·u uᵀ,  u = (cos α, sin α)。
    β = 1 で等方（共形型）、β = 0 でランク 1。
    terms は (A, a, cx, cy, alpha, beta) のタプル列。
    """
    terms: Tuple[Tuple[float, ...], ...] = ()

    def __post_init__(self) -> None:
        for t in self.terms:
            if len(t) != _BUMP_GROUP:
                raise MetricError(f"bump term needs {_BUMP_GROUP} entries, got {len(t)}")
            if t[1] <= 0:
                raise MetricError("bump radius must be positive")

    @classmethod
    def from_flat(cls, params: Sequence[float]) -> "BumpSet":
        p = [float(v) for v in params]
        if len(p) % _BUMP_GROUP:
            raise MetricError(f"general family needs groups of {_BUMP_GROUP} parameters")
        return cls(tuple(tuple(p[i:i + _BUMP_GROUP]) for i in range(0, len(p), _BUMP_GROUP)))

    def flat(self) -> Tuple[float, ...]:
        return tuple(v for t in self.terms for v in t)

    def scaled(self, c: float) -> "BumpSet":
        return BumpSet(tuple((c * t[0],) + tuple(t[1:]) for t in self.terms))

    @staticmethod
    def _shape(alpha: float, beta: float) -> np.ndarray:
        u = np.array([np.cos(alpha), np.sin(alpha)])
        return beta * np.eye(2) + (1.0 - beta) * np.outer(u, u)

    def evaluate(self, x: np.ndarray, order: int = 0):
        """(value, gradient, hessian) を order まで返す。"""
        x = np.asarray(x, dtype=float)
        shp = x.shape[:-1]
        val = np.zeros(shp + (2, 2))
        grad = np.zeros(shp + (2, 2, 2)) if order >= 1 else None
        hess = np.zeros(shp + (2, 2, 2, 2)) if order >= 2 else None
        for A, a, cx, cy, alpha, beta in self.terms:
            T = A * self._shape(alpha, beta)
            d = x - np.array([cx, cy])
            q = (d[..., 0] ** 2 + d[..., 1] ** 2) / a ** 2
            psi, p1, p2 = _bump_profile(q)
            val += psi[..., None, None] * T
            if order >= 1:
                dpsi = (2.0 * p1 / a ** 2)[..., None] * d
                grad += dpsi[..., :, None, None] * T
            if order >= 2:
                ddpsi = (4.0 * p2 / a ** 4)[..., None, None] * d[..., :, None] * d[..., None, :]
                ddpsi = ddpsi + (2.0 * p1 / a ** 2)[..., None, None] * np.eye(2)
                hess += ddpsi[..., :, :, None, None] * T
        return val, grad, hess

    def c1_norm(self, x: np.ndarray) -> float:
        """サンプル点上の sup|f| + sup|∂f|（Frobenius）。"""
        v, g, _ = self.evaluate(x, order=1)
        return float(np.max(np.linalg.norm(v, axis=(-2, -1)))
                     + np.max(np.sqrt(np.sum(g ** 2, axis=(-3, -2, -1)))))


# ================================================
# 計量仕様
# ================================================

@dataclass(frozen=True)
class MetricSpec:
    """
    不変な計量記述。family ごとに params の意味が異なる。

    base を持つ場合（general / collar_jet）は base の計量に加算される。
    frozen なので lru_cache のキーとして使える。
    """
    family: str
    params: Tuple[float, ...] = ()
    dim: int = 2
    domain: DiskDomain = field(default_factory=DiskDomain)
    base: Optional["MetricSpec"] = None
    tag: str = ""

    def __post_init__(self) -> None:
        if self.family not in _FAMILIES:
            raise MetricError(f"unknown metric family '{self.family}'")
        if self.dim != 2:
            raise MetricError("only dimension 2 families are shipped")
        if self.family == "conformal" and len(self.params) % _CONFORMAL_GROUP:
            raise MetricError(f"conformal family needs groups of {_CONFORMAL_GROUP} parameters")
        if self.family in ("euclidean", "conformal") and self.base is not None:
            raise MetricError(f"family '{self.family}' does not take a base metric")
        if self.family == "general":
            BumpSet.from_flat(self.params)
        if self.family == "collar_jet":
            _collar_layout(self.params)

    # ------------------------------------------------
    @property
    def is_euclidean(self) -> bool:
        if self.family == "euclidean":
            return True
        if self.family in ("general", "collar_jet"):
            return False
        return self.family == "conformal" and all(
            self.params[i] == 0.0 for i in range(0, len(self.params), _CONFORMAL_GROUP)
        )

    @property
    def has_hessian(self) -> bool:
        if self.family == "collar_jet":
            return False
        return self.base is None or self.base.has_hessian

    @property
    def name(self) -> str:
        return self.tag or self.family

    def perturbed(self, bumps: BumpSet, tag: str = "") -> "MetricSpec":
        """g + Σ bump を表す general ファミリーを返す。"""
        return MetricSpec("general", bumps.flat(), self.dim, self.domain, base=self,
                          tag=tag or f"{self.name}+bumps")

    def describe(self) -> Dict[str, object]:
        out: Dict[str, object] = {
            "family": self.family,
            "params": [float(p) for p in self.params],
            "radius": self.domain.radius,
            "outer_radius": self.domain.outer_radius,
            "tag": self.name,
        }
        if self.base is not None:
            out["base"] = self.base.describe()
        return out

    # ------------------------------------------------
    def evaluate(self, x: np.ndarray, order: int = 0):
        """
        (g, dg, ddg) を order (0/1/2) まで返す。ドメイン検査はしない
        （レイ追跡の内部ステージは Ω₁ をわずかに越えることがある）。
        """
        x = np.asarray(x, dtype=float)
        if order >= 2 and not self.has_hessian:
            raise MetricError(f"family '{self.family}' provides first derivatives only")
        if self.base is not None:
            g, dg, ddg = self.base.evaluate(x, order)
        else:
            g, dg, ddg = _euclidean(x, order)
        if self.family == "conformal":
            g, dg, ddg = _conformal(self.params, x, order)
        elif self.family == "general":
            v, gr, he = BumpSet.from_flat(self.params).evaluate(x, order)
            g = g + v
            dg = None if gr is None else dg + gr
            ddg = None if he is None else ddg + he
        elif self.family == "collar_jet":
            v, gr = _collar_jet(self.params, self.domain, x, order)
            g = g + v
            dg = None if gr is None else dg + gr
        return g, dg, ddg

    def tensor(self, x: np.ndarray) -> np.ndarray:
        return self.evaluate(x, 0)[0]

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.evaluate(x, 1)[1]

    def hessian(self, x: np.ndarray) -> np.ndarray:
        return self.evaluate(x, 2)[2]

    def inverse(self, x: np.ndarray) -> np.ndarray:
        return inv2(self.tensor(x))

    def conformal_factor(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """conformal ファミリーの (φ, ∂φ, ∂²φ)。"""
        if self.family != "conformal":
            raise MetricError("conformal_factor is defined for the conformal family only")
        return _conformal_phi(self.params, np.asarray(x, dtype=float))


# ================================================
# ファミリー実装
# ================================================

def _euclidean(x: np.ndarray, order: int):
    shp = x.shape[:-1]
    g = np.broadcast_to(np.eye(2), shp + (2, 2)).copy()
    dg = np.zeros(shp + (2, 2, 2)) if order >= 1 else None
    ddg = np.zeros(shp + (2, 2, 2, 2)) if order >= 2 else None
    return g, dg, ddg


def _conformal_phi(params: Sequence[float], x: np.ndarray):
    shp = x.shape[:-1]
    phi = np.zeros(shp)
    dphi = np.zeros(shp + (2,))
    ddphi = np.zeros(shp + (2, 2))
    for i in range(0, len(params), _CONFORMAL_GROUP):
        A, B, cx, cy = params[i:i + _CONFORMAL_GROUP]
        d = x - np.array([cx, cy])
        e = A * np.exp(-B * (d[..., 0] ** 2 + d[..., 1] ** 2))
        phi += e
        dphi += (-2.0 * B * e)[..., None] * d
        ddphi += e[..., None, None] * (
            4.0 * B ** 2 * d[..., :, None] * d[..., None, :] - 2.0 * B * np.eye(2)
        )
    return phi, dphi, ddphi


def _conformal(params: Sequence[float], x: np.ndarray, order: int):
    phi, dphi, ddphi = _conformal_phi(params, x)
    e2 = np.exp(2.0 * phi)
    eye = np.eye(2)
    g = e2[..., None, None] * eye
    dg = ddg = None
    if order >= 1:
        dg = (2.0 * e2[..., None] * dphi)[..., :, None, None] * eye
    if order >= 2:
        coef = 4.0 * dphi[..., :, None] * dphi[..., None, :] + 2.0 * ddphi
        ddg = (e2[..., None, None] * coef)[..., :, :, None, None] * eye
    return g, dg, ddg


def _collar_layout(params: Sequence[float]) -> Tuple[float, int, int]:
    if len(params) < 3:
        raise MetricError("collar_jet needs (width, K, L, coefficients...)")
    width, K, L = float(params[0]), int(params[1]), int(params[2])
    if width <= 0 or K < 1 or L < 0 or len(params) != 3 + K * (2 * L + 1):
        raise MetricError("collar_jet parameter layout mismatch")
    return width, K, L


def collar_cutoff(s: np.ndarray, width: float) -> Tuple[np.ndarray, np.ndarray]:
    """χ(s): s ≤ width/2 で 1、s ≥ width で 0 の C² 平滑ステップとその微分。"""
    h = 0.5 * width
    u = np.clip((np.asarray(s, dtype=float) - h) / h, 0.0, 1.0)
    chi = 1.0 - (10 * u ** 3 - 15 * u ** 4 + 6 * u ** 5)
    dchi = -(30 * u ** 2 - 60 * u ** 3 + 30 * u ** 4) / h
    return chi, dchi


def fourier_eval(coef: np.ndarray, theta: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """係数 [a0, a1..aL, b1..bL] の三角多項式とその θ 微分。"""
    L = (len(coef) - 1) // 2
    val = np.full(np.shape(theta), float(coef[0]))
    der = np.zeros(np.shape(theta))
    for m in range(1, L + 1):
        a, b = coef[m], coef[L + m]
        c, s = np.cos(m * theta), np.sin(m * theta)
        val = val + a * c + b * s
        der = der + m * (-a * s + b * c)
    return val, der


def _collar_jet(params: Sequence[float], domain: DiskDomain, x: np.ndarray, order: int):
    width, K, L = _collar_layout(params)
    coeffs = np.asarray(params[3:], dtype=float).reshape(K, 2 * L + 1)
    d = x - domain.c
    r = np.maximum(np.hypot(d[..., 0], d[..., 1]), 1e-12)
    theta = np.arctan2(d[..., 1], d[..., 0])
    s = domain.radius - r
    chi, dchi = collar_cutoff(s, width)

    P = np.zeros_like(r)
    P_s = np.zeros_like(r)
    P_t = np.zeros_like(r)
    for k in range(K):
        c, dc = fourier_eval(coeffs[k], theta)
        P += s ** k * c
        P_t += s ** k * dc
        if k >= 1:
            P_s += k * s ** (k - 1) * c
    F = chi * P

    r2 = r ** 2
    w = np.stack([-d[..., 1], d[..., 0]], axis=-1) / r2[..., None]
    ww = w[..., :, None] * w[..., None, :]
    val = F[..., None, None] * ww
    if order < 1:
        return val, None

    ds = -d / r[..., None]
    dF = (dchi * P + chi * P_s)[..., None] * ds + (chi * P_t)[..., None] * w
    xx, yy = d[..., 0], d[..., 1]
    r4 = r2 ** 2
    Dw = np.empty(x.shape[:-1] + (2, 2))
    Dw[..., 0, 0] = 2 * xx * yy / r4
    Dw[..., 0, 1] = (yy ** 2 - xx ** 2) / r4
    Dw[..., 1, 0] = (yy ** 2 - xx ** 2) / r4
    Dw[..., 1, 1] = -2 * xx * yy / r4
    grad = dF[..., :, None, None] * ww[..., None, :, :]
    grad = grad + F[..., None, None, None] * (
        Dw[..., :, :, None] * w[..., None, None, :] + w[..., None, :, None] * Dw[..., :, None, :]
    )
    return val, grad


# ================================================
# コンストラクタ
# ================================================

def euclidean(domain: Optional[DiskDomain] = None, tag: str = "euclidean") -> MetricSpec:
    return MetricSpec("euclidean", (), 2, domain or DiskDomain(), tag=tag)


def conformal(terms: Sequence[Sequence[float]], domain: Optional[DiskDomain] = None,
              tag: str = "conformal") -> MetricSpec:
    """terms: (A, B, cx, cy) の列。φ = Σ A·exp(−B|x − c|²)。"""
    flat = tuple(float(v) for t in terms for v in t)
    return MetricSpec("conformal", flat, 2, domain or DiskDomain(), tag=tag)


def general(bumps: BumpSet, base: Optional[MetricSpec] = None, tag: str = "general") -> MetricSpec:
    dom = base.domain if base is not None else DiskDomain()
    return MetricSpec("general", bumps.flat(), 2, dom, base=base, tag=tag)


def collar_jet(base: MetricSpec, width: float, coeffs: np.ndarray, tag: str = "collar_jet") -> MetricSpec:
    """coeffs: (K, 2L+1) の Fourier 係数。k 行目が (R − r)^k の係数関数。"""
    c = np.atleast_2d(np.asarray(coeffs, dtype=float))
    K, M = c.shape
    L = (M - 1) // 2
    params = (float(width), float(K), float(L)) + tuple(float(v) for v in c.ravel())
    return MetricSpec("collar_jet", params, 2, base.domain, base=base, tag=tag)


# ================================================
# 評価 API
# ================================================

def inv2(g: np.ndarray) -> np.ndarray:
    """2×2 対称行列のバッチ逆行列（閉形式）。"""
    a, b, d = g[..., 0, 0], g[..., 0, 1], g[..., 1, 1]
    det = a * d - b * b
    out = np.empty_like(g)
    out[..., 0, 0] = d / det
    out[..., 1, 1] = a / det
    out[..., 0, 1] = out[..., 1, 0] = -b / det
    return out


def det2(g: np.ndarray) -> np.ndarray:
    return g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]


def _check_domain(spec: MetricSpec, x: np.ndarray) -> None:
    ok = spec.domain.inside(x, outer=True)
    if not np.all(ok):
        bad = np.asarray(x, dtype=float).reshape(-1, 2)[~np.asarray(ok).reshape(-1)][0]
        raise DomainError(f"point {tuple(np.round(bad, 6))} outside the outer disk", bad)


def eval_metric(spec: MetricSpec, x) -> np.ndarray:
    """g_ij(x)。x ∉ Ω₁ は DomainError。"""
    x = np.asarray(x, dtype=float)
    _check_domain(spec, x)
    return spec.tensor(x)


def christoffel_from_metric(g: np.ndarray, dg: np.ndarray) -> np.ndarray:
    """Γ^k_ij = ½ g^{kl}(∂_i g_lj + ∂_j g_il − ∂_l g_ij)。"""
    ginv = inv2(g) if g.shape[-1] == 2 else np.linalg.inv(g)
    # dg[..., l, i, j] = ∂_l g_ij
    lower = (np.einsum("...ilj->...lij", dg) + np.einsum("...jil->...lij", dg) - dg)
    return 0.5 * np.einsum("...kl,...lij->...kij", ginv, lower)


def christoffel(spec: MetricSpec, x) -> np.ndarray:
    """Γ[..., k, i, j] = Γ^k_ij(x)。特異な計量は MetricError（条件数付き）。"""
    x = np.asarray(x, dtype=float)
    _check_domain(spec, x)
    g, dg, _ = spec.evaluate(x, 1)
    cond = np.linalg.cond(g.reshape(-1, 2, 2))
    if not np.all(np.isfinite(cond)) or np.max(cond) > _COND_LIMIT:
        raise MetricError("metric matrix is singular", float(np.max(cond)))
    return christoffel_from_metric(g, dg)


def hamiltonian(spec: MetricSpec, x, xi) -> np.ndarray:
    """H_g(x, ξ) = ½ g^{ij}(x) ξ_i ξ_j。"""
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    ginv = spec.inverse(x)
    return 0.5 * np.einsum("...i,...ij,...j->...", xi, ginv, xi)


def unit_covector(spec: MetricSpec, x: np.ndarray, angle) -> np.ndarray:
    """ユークリッド角 angle の余ベクトルを |ω|_g = 1 に正規化。"""
    a = np.asarray(angle, dtype=float)
    w0 = np.stack([np.cos(a), np.sin(a)], axis=-1)
    ginv = spec.inverse(np.broadcast_to(x, w0.shape))
    n = np.sqrt(np.einsum("...i,...ij,...j->...", w0, ginv, w0))
    return w0 / n[..., None]


# ================================================
# セルフテスト
# python -m src.geometry.metric
# ================================================

if __name__ == "__main__":
    pts = np.array([[0.0, 0.0], [0.3, 0.1], [-0.5, 0.6]])
    for spec in (euclidean(), conformal([(0.1, 1.0, 0.0, 0.0)]),
                 general(BumpSet(((0.2, 0.5, 0.1, 0.0, 0.3, 0.0),)))):
        G = eval_metric(spec, pts)
        print(f"{spec.name:<10} g11={G[:, 0, 0].round(4)}  Γ max={np.abs(christoffel(spec, pts)).max():.4f}")
