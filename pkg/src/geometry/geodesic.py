# -*- coding: utf-8 -*-
"""
src/geometry/geodesic.py

ハミルトン測地流のバッチ積分器と、その上に立つ二点問題。

状態ベクトル（1 本のレイにつき 1 行）
    [x(2), ξ(2), (∫ 被積分関数)(1, 任意), δx(2), δξ(2) (変分方程式, 任意)]

Public API
----------
PhasePoint, GeodesicPath, JacobiProfile, BoundaryDistanceTable
march(spec, Y0, ...)                    バッチ RK4（境界交差は二分法で確定）
flow(spec, p0, t_max, step)             単一レイの軌道
exp_map(spec, x, v)                     exp_x(v)
log_map(spec, x, y)                     exp_x⁻¹(y)（内部 Newton shooting）
boundary_distance(spec, x, y)           境界二点の ρ と初期・出口余ベクトル
distance_table(spec, m)                 m×m 境界距離表
jacobi_determinant(spec, p0)            exp 写像のヤコビ行列式の時間プロファイル
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np
import pandas as pd

from src.errors import DomainError, InputError, IntegrationError, ShootingError
from src.geometry.metric import MetricSpec, det2, hamiltonian, inv2, unit_covector

logger = logging.getLogger(__name__)

# ================================================
# 定数
# ================================================

_DEFAULT_STEP = 1e-3
_BISECT_ITERS = 48
_TRAP_FACTOR = 30.0          # 直径の何倍で「閉じ込め」とみなすか
_CHUNK = 20000

_SHOOT_TOL = 1e-12
_SHOOT_MAX_ITER = 40
_SHOOT_FD = 1e-7
_GOLDEN_ITERS = 90
_GOLDEN_HALF_WIDTH = 0.3

_LOG_TOL = 1e-11
_LOG_MAX_ITER = 25
_LOG_STOP_FACTOR = 1.25

Integrand = Callable[[np.ndarray, np.ndarray], np.ndarray]


# ================================================
# データ型
# ================================================

@dataclass
class PhasePoint:
    """余接点 (x, ξ)。"""
    x: np.ndarray
    xi: np.ndarray

    @classmethod
    def from_angle(cls, spec: MetricSpec, x, angle: float) -> "PhasePoint":
        """ユークリッド角 angle の余ベクトルを H_g = ½ に正規化して作る。"""
        x = np.asarray(x, dtype=float)
        return cls(x, unit_covector(spec, x, angle))

    def energy(self, spec: MetricSpec) -> float:
        return float(hamiltonian(spec, self.x, self.xi))


@dataclass
class GeodesicPath:
    t: np.ndarray
    x: np.ndarray
    xi: np.ndarray
    exit_time: float
    exit_point: np.ndarray
    exit_covector: np.ndarray
    exited: bool


@dataclass
class JacobiProfile:
    """det(t) は t → 0 で t に一致するよう正規化した exp 写像のヤコビアン。"""
    t: np.ndarray
    det: np.ndarray

    @property
    def conjugate(self) -> bool:
        late = self.t > 2.0 * (self.t[1] - self.t[0] if len(self.t) > 1 else 0.0)
        return bool(np.any(self.det[late] <= 0.0))

    @property
    def min_ratio(self) -> float:
        late = self.t > 0
        return float(np.min(self.det[late] / self.t[late])) if late.any() else float("nan")


@dataclass
class MarchResult:
    Y: np.ndarray
    t: np.ndarray
    exited: np.ndarray
    rec_t: Optional[np.ndarray] = None       # (K, M)
    rec_Y: Optional[np.ndarray] = None       # (K, M, D)
    rec_valid: Optional[np.ndarray] = None   # (K, M)


# ================================================
# 右辺と RK4
# ================================================

def _make_rhs(spec: MetricSpec, integrand: Optional[Integrand], variational: bool):
    flat = spec.family == "euclidean"
    order = 2 if variational else 1
    col_var = 5 if integrand is not None else 4

    def rhs(Y: np.ndarray) -> np.ndarray:
        x = Y[:, 0:2]
        xi = Y[:, 2:4]
        out = np.zeros_like(Y)
        if flat:
            v = xi
        else:
            g, dg, ddg = spec.evaluate(x, order)
            ginv = inv2(g)
            v = np.einsum("mij,mj->mi", ginv, xi)
            out[:, 2:4] = 0.5 * np.einsum("mi,mlij,mj->ml", v, dg, v)
        out[:, 0:2] = v
        if integrand is not None:
            out[:, 4] = integrand(x, v)
        if variational:
            dX = Y[:, col_var:col_var + 2]
            dXi = Y[:, col_var + 2:col_var + 4]
            if flat:
                out[:, col_var:col_var + 2] = dXi
            else:
                B = np.einsum("ml,mlij,mj->mi", dX, dg, v)
                dv = np.einsum("mij,mj->mi", ginv, dXi - B)
                out[:, col_var:col_var + 2] = dv
                out[:, col_var + 2:col_var + 4] = (
                    0.5 * np.einsum("mi,mj,mklij,ml->mk", v, v, ddg, dX)
                    + np.einsum("mi,mkij,mj->mk", v, dg, dv)
                )
        return out

    return rhs


def _rk4(rhs, Y: np.ndarray, h: np.ndarray) -> np.ndarray:
    hh = h[:, None]
    k1 = rhs(Y)
    k2 = rhs(Y + 0.5 * hh * k1)
    k3 = rhs(Y + 0.5 * hh * k2)
    k4 = rhs(Y + hh * k3)
    return Y + hh / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


# ================================================
# バッチ積分
# ================================================

def march(
    spec: MetricSpec,
    Y0: np.ndarray,
    *,
    t_end=np.inf,
    step: float = _DEFAULT_STEP,
    stop_radius: Optional[float] = None,
    integrand: Optional[Integrand] = None,
    variational: bool = False,
    record: bool = False,
) -> MarchResult:
    """
    固定ステップ RK4 でレイの束を進める。

    各レイは t_end に達するか、半径 stop_radius の円を越えた時点で止まる。
    越えたステップは部分ステップ長 τ ∈ [0, h] の二分法で交差点まで縮める
    （τ = 0 側は常に「内側または出発点」、h 側は「外側」）。
    """
    Y = np.array(Y0, dtype=float, copy=True)
    M = Y.shape[0]
    if integrand is not None and Y.shape[1] == (8 if variational else 4):
        # 積分変数の列 4（初期値 0）を確保する
        Y = np.insert(Y, 4, 0.0, axis=1)
    R = spec.domain.radius if stop_radius is None else float(stop_radius)
    c = spec.domain.c
    rhs = _make_rhs(spec, integrand, variational)

    t = np.zeros(M)
    t_end = np.broadcast_to(np.asarray(t_end, dtype=float), (M,)).copy()
    exited = np.zeros(M, dtype=bool)
    active = t_end > 0
    finite_end = np.isfinite(t_end)
    horizon = float(np.max(t_end[finite_end])) if finite_end.any() else 0.0
    horizon = max(horizon, _TRAP_FACTOR * 2.0 * spec.domain.outer_radius)
    max_steps = int(np.ceil(horizon / step)) + 2

    rec_t: List[np.ndarray] = []
    rec_Y: List[np.ndarray] = []
    rec_valid: List[np.ndarray] = []
    if record:
        rec_t.append(t.copy())
        rec_Y.append(Y.copy())
        rec_valid.append(np.ones(M, dtype=bool))

    def radius(P: np.ndarray) -> np.ndarray:
        return np.hypot(P[:, 0] - c[0], P[:, 1] - c[1])

    n = 0
    while active.any():
        n += 1
        if n > max_steps:
            bad = int(np.flatnonzero(active)[0])
            raise IntegrationError("ray did not reach the boundary within the time bound", bad)
        idx = np.flatnonzero(active)
        h = np.minimum(step, t_end[idx] - t[idx])
        Yi = Y[idx]
        Y1 = _rk4(rhs, Yi, h)
        cross = radius(Y1[:, :2]) >= R
        if cross.any():
            ci = np.flatnonzero(cross)
            Ys = Yi[ci]
            lo = np.zeros(len(ci))
            hi = h[ci].copy()
            for _ in range(_BISECT_ITERS):
                mid = 0.5 * (lo + hi)
                inside = radius(_rk4(rhs, Ys, mid)[:, :2]) < R
                lo = np.where(inside, mid, lo)
                hi = np.where(inside, hi, mid)
            Y1[ci] = _rk4(rhs, Ys, hi)
            h[ci] = hi
        if not np.all(np.isfinite(Y1)):
            bad = int(idx[np.flatnonzero(~np.all(np.isfinite(Y1), axis=1))[0]])
            raise IntegrationError("non-finite state during ray tracing", bad)
        Y[idx] = Y1
        t[idx] += h
        exited[idx[cross]] = True
        active[idx[cross]] = False
        reached = idx[~cross & (t[idx] >= t_end[idx] - 1e-14)]
        active[reached] = False
        if record:
            valid = np.zeros(M, dtype=bool)
            valid[idx] = True
            rec_t.append(t.copy())
            rec_Y.append(Y.copy())
            rec_valid.append(valid)

    out = MarchResult(Y=Y, t=t, exited=exited)
    if record:
        out.rec_t = np.stack(rec_t)
        out.rec_Y = np.stack(rec_Y)
        out.rec_valid = np.stack(rec_valid)
    return out


def march_chunked(spec: MetricSpec, Y0: np.ndarray, chunk: int = _CHUNK, **kw) -> MarchResult:
    """記録なしの march を chunk 本ずつ実行して連結する。"""
    if kw.get("record"):
        raise ValueError("march_chunked does not support record=True")
    parts = []
    t_end = kw.pop("t_end", np.inf)
    t_end = np.broadcast_to(np.asarray(t_end, dtype=float), (len(Y0),))
    for s in range(0, len(Y0), chunk):
        parts.append(march(spec, Y0[s:s + chunk], t_end=t_end[s:s + chunk], **kw))
    if not parts:
        return MarchResult(Y=np.zeros((0, Y0.shape[1])), t=np.zeros(0), exited=np.zeros(0, dtype=bool))
    return MarchResult(
        Y=np.concatenate([p.Y for p in parts]),
        t=np.concatenate([p.t for p in parts]),
        exited=np.concatenate([p.exited for p in parts]),
    )


def unit_covector_derivative(spec: MetricSpec, x: np.ndarray, angle: np.ndarray) -> np.ndarray:
    """d/da [ω0(a)/|ω0(a)|_{g*}]（Jacobi 場の初期値）。"""
    a = np.asarray(angle, dtype=float)
    w0 = np.stack([np.cos(a), np.sin(a)], axis=-1)
    w1 = np.stack([-np.sin(a), np.cos(a)], axis=-1)
    ginv = spec.inverse(np.broadcast_to(x, w0.shape))
    n2 = np.einsum("...i,...ij,...j->...", w0, ginv, w0)
    n = np.sqrt(n2)
    cross = np.einsum("...i,...ij,...j->...", w0, ginv, w1)
    return w1 / n[..., None] - w0 * (cross / (n2 * n))[..., None]


# ================================================
# 単一レイ API
# ================================================

def _require_outer(spec: MetricSpec, x: np.ndarray) -> None:
    if not np.all(spec.domain.inside(x, outer=True)):
        raise DomainError("start point outside the outer disk", np.asarray(x).reshape(-1)[:2])


def flow(
    spec: MetricSpec,
    p0: PhasePoint,
    t_max: float = np.inf,
    step: float = _DEFAULT_STEP,
    outer: bool = False,
) -> GeodesicPath:
    """
    ハミルトン方程式を固定ステップで積分する。∂Ω（outer=True なら ∂Ω₁）を
    越えた時点、または t_max で止まる。
    """
    x0 = np.asarray(p0.x, dtype=float)
    _require_outer(spec, x0)
    R = spec.domain.outer_radius if outer else spec.domain.radius
    Y0 = np.concatenate([x0, np.asarray(p0.xi, dtype=float)])[None, :]
    res = march(spec, Y0, t_end=t_max, step=step, stop_radius=R, record=True)
    valid = res.rec_valid[:, 0]
    tt = res.rec_t[valid, 0]
    YY = res.rec_Y[valid, 0]
    return GeodesicPath(
        t=tt, x=YY[:, :2], xi=YY[:, 2:4],
        exit_time=float(res.t[0]),
        exit_point=res.Y[0, :2].copy(),
        exit_covector=res.Y[0, 2:4].copy(),
        exited=bool(res.exited[0]),
    )


def exp_map(spec: MetricSpec, x, v, step: float = _DEFAULT_STEP) -> np.ndarray:
    """exp_x(v)。x: (..., 2)、v: (..., 2)。Ω₁ からの逸脱は DomainError。"""
    v = np.asarray(v, dtype=float)
    x = np.broadcast_to(np.asarray(x, dtype=float), v.shape)
    _require_outer(spec, x)
    flat_x = x.reshape(-1, 2)
    flat_v = v.reshape(-1, 2)
    G = spec.tensor(flat_x)
    xi = np.einsum("mij,mj->mi", G, flat_v)
    speed = np.sqrt(np.einsum("mi,mi->m", xi, flat_v))
    out = flat_x.copy()
    moving = speed > 0
    if moving.any():
        Y0 = np.concatenate([flat_x[moving], xi[moving] / speed[moving, None]], axis=1)
        res = march_chunked(spec, Y0, t_end=speed[moving], step=step,
                            stop_radius=spec.domain.outer_radius)
        if res.exited.any():
            raise DomainError("exp map leaves the outer disk", res.Y[np.argmax(res.exited), :2])
        out[moving] = res.Y[:, :2]
    return out.reshape(v.shape)


# ================================================
# 内部二点問題（log 写像）
# ================================================

@dataclass
class LogMapResult:
    """x から y への単位速度測地線。omega は x での単位余ベクトル。"""
    t: np.ndarray
    angle: np.ndarray
    omega: np.ndarray
    xi_end: np.ndarray
    xdot_end: np.ndarray
    dx_end: np.ndarray
    converged: np.ndarray
    residual: np.ndarray


def log_map_batch(
    spec: MetricSpec,
    x: np.ndarray,
    y: np.ndarray,
    step: float = _DEFAULT_STEP,
    tol: float = _LOG_TOL,
    max_iter: int = _LOG_MAX_ITER,
) -> LogMapResult:
    """
    (a, t) に関する Newton 法で exp_x(t·ω(a)♯) = y を解く。
    ヤコビアンは [∂x/∂a, ∂x/∂t] = [δx(t), ẋ(t)]（変分方程式）。
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    x, y = np.broadcast_arrays(x, y)
    M = len(x)
    G = spec.tensor(x)
    d = y - x
    w = np.einsum("mij,mj->mi", G, d)
    a = np.arctan2(w[:, 1], w[:, 0])
    t = np.sqrt(np.maximum(np.einsum("mi,mi->m", w, d), 0.0))

    xi_end = np.full((M, 2), np.nan)
    xdot_end = np.full((M, 2), np.nan)
    dx_end = np.full((M, 2), np.nan)
    residual = np.full(M, np.inf)
    conv = t < 1e-14
    residual[conv] = 0.0
    t[conv] = 0.0
    failed = np.zeros(M, dtype=bool)
    stop = _LOG_STOP_FACTOR * spec.domain.outer_radius

    for _ in range(max_iter):
        act = np.flatnonzero(~conv & ~failed)
        if len(act) == 0:
            break
        xa = x[act]
        om = unit_covector(spec, xa, a[act])
        dom = unit_covector_derivative(spec, xa, a[act])
        Y0 = np.concatenate([xa, om, np.zeros((len(act), 2)), dom], axis=1)
        res = march_chunked(spec, Y0, t_end=t[act], step=step, stop_radius=stop, variational=True)
        failed[act[res.exited]] = True
        xe = res.Y[:, 0:2]
        xie = res.Y[:, 2:4]
        ve = np.einsum("mij,mj->mi", spec.inverse(xe), xie)
        dxe = res.Y[:, 4:6]
        F = xe - y[act]
        rn = np.hypot(F[:, 0], F[:, 1])
        residual[act] = rn
        ok = (rn < tol) & ~res.exited
        done = act[ok]
        conv[done] = True
        xi_end[done] = xie[ok]
        xdot_end[done] = ve[ok]
        dx_end[done] = dxe[ok]

        upd = ~ok & ~res.exited
        J = np.stack([dxe[upd], ve[upd]], axis=-1)        # 列 = (∂a, ∂t)
        det = det2(J)
        good = np.abs(det) > 1e-14
        sel = act[upd]
        failed[sel[~good]] = True
        Jg = J[good]
        Fg = F[upd][good]
        inv = np.empty_like(Jg)
        inv[:, 0, 0] = Jg[:, 1, 1]
        inv[:, 1, 1] = Jg[:, 0, 0]
        inv[:, 0, 1] = -Jg[:, 0, 1]
        inv[:, 1, 0] = -Jg[:, 1, 0]
        delta = -np.einsum("mij,mj->mi", inv, Fg) / det[good][:, None]
        tgt = sel[good]
        a[tgt] += np.clip(delta[:, 0], -0.5, 0.5)
        t[tgt] = np.maximum(t[tgt] + delta[:, 1], 0.5 * t[tgt])

    omega = unit_covector(spec, x, a)
    omega[t == 0] = np.nan
    return LogMapResult(t=t, angle=a, omega=omega, xi_end=xi_end, xdot_end=xdot_end,
                        dx_end=dx_end, converged=conv & ~failed, residual=residual)


def log_map(spec: MetricSpec, x, y, step: float = _DEFAULT_STEP) -> np.ndarray:
    """exp_x(v) = y となる接ベクトル v（失敗は ShootingError）。"""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _require_outer(spec, x)
    _require_outer(spec, y)
    res = log_map_batch(spec, x.reshape(-1, 2), y.reshape(-1, 2), step=step)
    if not np.all(res.converged):
        raise ShootingError("log map did not converge", float(np.max(res.residual)))
    ginv = spec.inverse(x.reshape(-1, 2))
    v = res.t[:, None] * np.einsum("mij,mj->mi", ginv, np.nan_to_num(res.omega))
    return v.reshape(np.broadcast_shapes(x.shape, y.shape))


# ================================================
# 境界二点問題（shooting）
# ================================================

def _wrap(a: np.ndarray) -> np.ndarray:
    return (a + np.pi) % (2.0 * np.pi) - np.pi


def _exit_angle(spec: MetricSpec, theta_x: np.ndarray, a: np.ndarray, step: float):
    z = spec.domain.boundary_point(theta_x)
    xi = unit_covector(spec, z, a)
    res = march_chunked(spec, np.concatenate([z, xi], axis=1), step=step)
    _, ang = spec.domain.polar(res.Y[:, :2])
    return ang, res


def shoot_boundary_pairs(
    spec: MetricSpec,
    theta_x: np.ndarray,
    theta_y: np.ndarray,
    step: float = _DEFAULT_STEP,
    tol: float = _SHOOT_TOL,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    境界角の組 (θx, θy) ごとに出口角の不一致を Newton（中心差分微分）で 0 にし、
    収束しない組は黄金分割にフォールバックする。
    returns (ρ, ξ_init, ξ_exit)
    """
    theta_x = np.asarray(theta_x, dtype=float).ravel()
    theta_y = np.asarray(theta_y, dtype=float).ravel()
    M = len(theta_x)
    rho = np.zeros(M)
    xi0 = np.full((M, 2), np.nan)
    xi1 = np.full((M, 2), np.nan)
    same = np.abs(_wrap(theta_y - theta_x)) < 1e-14
    work = np.flatnonzero(~same)
    if len(work) == 0:
        return rho, xi0, xi1

    tx, ty = theta_x[work], theta_y[work]
    zx = spec.domain.boundary_point(tx)
    zy = spec.domain.boundary_point(ty)
    w = np.einsum("mij,mj->mi", spec.tensor(zx), zy - zx)
    a = np.arctan2(w[:, 1], w[:, 0])
    lo_a = tx + 0.5 * np.pi + 1e-13
    hi_a = tx + 1.5 * np.pi - 1e-13
    a = lo_a + np.mod(a - lo_a, 2.0 * np.pi)
    a = np.clip(a, lo_a, hi_a)

    res_norm = np.full(len(work), np.inf)
    conv = np.zeros(len(work), dtype=bool)
    for _ in range(_SHOOT_MAX_ITER):
        act = np.flatnonzero(~conv)
        if len(act) == 0:
            break
        ang, _ = _exit_angle(spec, tx[act], a[act], step)
        F = _wrap(ang - ty[act])
        res_norm[act] = np.abs(F)
        ok = np.abs(F) < tol
        conv[act[ok]] = True
        rest = act[~ok]
        if len(rest) == 0:
            break
        Fr = F[~ok]
        ap, _ = _exit_angle(spec, tx[rest], np.minimum(a[rest] + _SHOOT_FD, hi_a[rest]), step)
        am, _ = _exit_angle(spec, tx[rest], np.maximum(a[rest] - _SHOOT_FD, lo_a[rest]), step)
        span = np.minimum(a[rest] + _SHOOT_FD, hi_a[rest]) - np.maximum(a[rest] - _SHOOT_FD, lo_a[rest])
        dF = _wrap(ap - am) / span
        safe = np.abs(dF) > 1e-12
        delta = np.where(safe, -Fr / np.where(safe, dF, 1.0), 0.0)
        a[rest] = np.clip(a[rest] + np.clip(delta, -0.2, 0.2), lo_a[rest], hi_a[rest])

    bad = np.flatnonzero(~conv)
    if len(bad):
        logger.debug("golden-section fallback for %d boundary pairs", len(bad))
        a[bad], res_norm[bad] = _golden_fallback(spec, tx[bad], ty[bad], a[bad],
                                                 lo_a[bad], hi_a[bad], step)
        if np.max(res_norm[bad]) > np.sqrt(tol):
            raise ShootingError("boundary shooting did not converge", float(np.max(res_norm[bad])))

    z = spec.domain.boundary_point(tx)
    om = unit_covector(spec, z, a)
    res = march_chunked(spec, np.concatenate([z, om], axis=1), step=step)
    rho[work] = res.t
    xi0[work] = om
    xi1[work] = res.Y[:, 2:4]
    return rho, xi0, xi1


def _golden_fallback(spec, tx, ty, a, lo_a, hi_a, step):
    g = (np.sqrt(5.0) - 1.0) / 2.0
    lo = np.maximum(a - _GOLDEN_HALF_WIDTH, lo_a)
    hi = np.minimum(a + _GOLDEN_HALF_WIDTH, hi_a)

    def cost(b):
        ang, _ = _exit_angle(spec, tx, b, step)
        return np.abs(_wrap(ang - ty))

    c1 = hi - g * (hi - lo)
    c2 = lo + g * (hi - lo)
    f1, f2 = cost(c1), cost(c2)
    for _ in range(_GOLDEN_ITERS):
        left = f1 < f2
        hi = np.where(left, c2, hi)
        lo = np.where(left, lo, c1)
        c2n = np.where(left, c1, lo + g * (hi - lo))
        c1n = np.where(left, hi - g * (hi - lo), c2)
        c1, c2 = c1n, c2n
        f1, f2 = cost(c1), cost(c2)
    best = 0.5 * (lo + hi)
    return best, cost(best)


def _boundary_angle(spec: MetricSpec, p) -> float:
    r, th = spec.domain.polar(np.asarray(p, dtype=float))
    if abs(float(r) - spec.domain.radius) > 1e-6 * spec.domain.radius:
        raise DomainError("point is not on the boundary circle", np.asarray(p).ravel())
    return float(th)


def boundary_distance(spec: MetricSpec, x, y, step: float = _DEFAULT_STEP):
    """
    境界点 x, y の間の測地距離 ρ と初期単位余ベクトル ξ_init（= −∇_x ρ）、
    出口余ベクトル ξ_exit。x = y なら (0, nan, nan)。
    """
    tx, ty = _boundary_angle(spec, x), _boundary_angle(spec, y)
    rho, xi0, xi1 = shoot_boundary_pairs(spec, np.array([tx]), np.array([ty]), step=step)
    return float(rho[0]), xi0[0], xi1[0]


# ================================================
# 境界距離表
# ================================================

@dataclass
class BoundaryDistanceTable:
    angles: np.ndarray
    rho: np.ndarray
    xi_init: np.ndarray      # (m, m, 2)
    xi_exit: np.ndarray      # (m, m, 2)
    metric_tag: str = ""

    @property
    def rho2(self) -> np.ndarray:
        return self.rho ** 2

    def symmetry_defect(self) -> float:
        return float(np.max(np.abs(self.rho - self.rho.T)))

    def to_frames(self) -> Tuple[pd.DataFrame, pd.DataFrame]:
        """(ρ² 行列の表, 余ベクトルの長形式表)。"""
        cols = [f"{a:.12f}" for a in self.angles]
        rho2 = pd.DataFrame(self.rho2, columns=cols)
        rho2.insert(0, "theta", self.angles)
        m = len(self.angles)
        ii, jj = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
        cov = pd.DataFrame({
            "theta_x": self.angles[ii.ravel()],
            "theta_y": self.angles[jj.ravel()],
            "rho": self.rho.ravel(),
            "xi_init_1": self.xi_init[..., 0].ravel(),
            "xi_init_2": self.xi_init[..., 1].ravel(),
            "xi_exit_1": self.xi_exit[..., 0].ravel(),
            "xi_exit_2": self.xi_exit[..., 1].ravel(),
        })
        return rho2, cov


def distance_table(spec: MetricSpec, m: int, step: float = _DEFAULT_STEP) -> BoundaryDistanceTable:
    """m×m の境界距離表。上三角を shooting で解き、下三角は反転で埋める。"""
    if m < 8:
        raise InputError("distance_table needs m >= 8")
    angles = 2.0 * np.pi * np.arange(m) / m
    iu, ju = np.triu_indices(m, k=1)
    rho_u, xi0_u, xi1_u = shoot_boundary_pairs(spec, angles[iu], angles[ju], step=step)
    rho = np.zeros((m, m))
    xi_init = np.full((m, m, 2), np.nan)
    xi_exit = np.full((m, m, 2), np.nan)
    rho[iu, ju] = rho[ju, iu] = rho_u
    xi_init[iu, ju] = xi0_u
    xi_exit[iu, ju] = xi1_u
    # 逆向きの測地線: 初期余ベクトルは出口余ベクトルの反転（|ξ|_g = 1 に戻す）
    xi_init[ju, iu] = unit_covector(spec, spec.domain.boundary_point(angles[ju]),
                                    np.arctan2(-xi1_u[:, 1], -xi1_u[:, 0]))
    xi_exit[ju, iu] = -xi0_u
    logger.info("distance table %s: m=%d, pairs=%d", spec.name, m, len(iu))
    return BoundaryDistanceTable(angles, rho, xi_init, xi_exit, spec.name)


# ================================================
# Jacobi 行列式
# ================================================

def jacobi_batch(
    spec: MetricSpec,
    x0: np.ndarray,
    angles: np.ndarray,
    t_max=np.inf,
    step: float = 1e-2,
    stop_radius: Optional[float] = None,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, MarchResult]:
    """
    余ベクトル角 angles の測地線束について正規化ヤコビアン det(t) を記録する。
    returns (rec_t, rec_det, rec_valid, march_result)
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    angles = np.asarray(angles, dtype=float).ravel()
    x0 = np.broadcast_to(x0, (len(angles), 2))
    om = unit_covector(spec, x0, angles)
    dom = unit_covector_derivative(spec, x0, angles)
    Y0 = np.concatenate([x0, om, np.zeros_like(om), dom], axis=1)
    res = march(spec, Y0, t_end=t_max, step=step, stop_radius=stop_radius,
                variational=True, record=True)
    G0 = spec.tensor(x0)
    w0 = np.stack([np.cos(angles), np.sin(angles)], axis=-1)
    n2 = np.einsum("mi,mij,mj->m", w0, inv2(G0), w0)
    norm0 = np.sqrt(det2(G0)) * n2

    X = res.rec_Y[..., 0:2]
    Xi = res.rec_Y[..., 2:4]
    dX = res.rec_Y[..., 4:6]
    K, M = res.rec_t.shape
    g = spec.tensor(X.reshape(-1, 2))
    v = np.einsum("mij,mj->mi", inv2(g), Xi.reshape(-1, 2)).reshape(K, M, 2)
    raw = v[..., 0] * dX[..., 1] - v[..., 1] * dX[..., 0]
    dets = raw * np.sqrt(det2(g)).reshape(K, M) * norm0[None, :]
    return res.rec_t, dets, res.rec_valid, res


def jacobi_determinant(
    spec: MetricSpec,
    p0: PhasePoint,
    t_max: float = np.inf,
    step: float = _DEFAULT_STEP,
) -> JacobiProfile:
    """p0 から出る測地線に沿った exp 写像のヤコビアン（ユークリッドでは ≡ t）。"""
    x0 = np.asarray(p0.x, dtype=float)
    _require_outer(spec, x0)
    angle = float(np.arctan2(p0.xi[1], p0.xi[0]))
    rt, dets, valid, _ = jacobi_batch(spec, x0, np.array([angle]), t_max=t_max, step=step)
    keep = valid[:, 0]
    return JacobiProfile(t=rt[keep, 0], det=dets[keep, 0])


def energy_drift(spec: MetricSpec, path: GeodesicPath) -> float:
    """sup_t |H(x(t), ξ(t)) − H(0)| / H(0)。"""
    H = hamiltonian(spec, path.x, path.xi)
    return float(np.max(np.abs(H - H[0])) / abs(H[0]))
