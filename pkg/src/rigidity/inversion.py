# -*- coding: utf-8 -*-
"""
src/rigidity/inversion.py

正規作用素データからのソレノイダル部の正則化再構成と、安定性評価の経験的な裏付け。

再構成
------
M_T 内積で  min_{f ∈ ran S} ½‖N f − d‖² + ½ λ‖f‖²  を CG で解く。
正規方程式は S(N^♯N + λ)S f = S N^♯ d、N^♯ = M_T⁻¹ Nᵀ M_T。
λ = reg · λ_max(N^♯N)（べき乗法で見積もる）。

Public API
----------
InversionReport, StabilitySweep, HolderFit
reconstruct_solenoidal(spec, data, reg, maxiter, truth=None)
select_regularization(spec, data, regs)          L 字曲線
stability_ratio_sweep(spec, trials, seed, eps)
holder_fit(spec0, bumps, amplitudes)
convergence_staircase(spec, sizes, seed)
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy.sparse as sp
from sklearn.linear_model import LinearRegression

from src.errors import InputError
from src.fields.random_fields import random_tensor_field
from src.fields.tensorfield import (
    Grid,
    SymTensor2Field,
    lower_indices,
    mass_tensor,
    metric_on_grid,
    node_weights,
    tensor_mass_blocks,
)
from src.geometry.geodesic import distance_table
from src.geometry.metric import BumpSet, MetricSpec
from src.transform.decomp import solenoidal_projector
from src.transform.xray import adjoint_matrix, forward_matrix, htilde_norm, normal_composed

logger = logging.getLogger(__name__)

# ================================================
# 定数
# ================================================

_DEFAULT_REG = 1e-4
_DEFAULT_MAXITER = 500
_DEFAULT_TOL = 1e-6
_DEFAULT_COUNT = 32
_DEFAULT_STEP = 1e-2
_POWER_ITERS = 30
_STAGNATION_WINDOW = 25
_STAGNATION_GAIN = 0.999

_DEFAULT_TRIALS = 50
_DEFAULT_PERTURBATION = 0.02
# 共形型バンプ（β = 1）: (A, a, cx, cy, alpha, beta)
_DEFAULT_BUMPS = BumpSet(((1.0, 0.5, 0.2, -0.1, 0.0, 1.0),))
_DEFAULT_AMPLITUDES = (0.01, 0.02, 0.04, 0.08)
_DEFAULT_TABLE_SIZE = 16
_DEFAULT_REG_SWEEP = (1e-6, 1e-5, 1e-4, 1e-3, 1e-2)


# ================================================
# データ型
# ================================================

@dataclass
class InversionReport:
    f_hat: SymTensor2Field
    rel_error: Optional[float]
    iterations: int
    reg: float
    reg_effective: float
    discrepancy: float
    stability_ratio: float
    converged: bool
    stagnated: bool
    history: List[float] = field(default_factory=list)

    def to_dict(self) -> Dict[str, object]:
        return {
            "rel_error": None if self.rel_error is None else float(self.rel_error),
            "iterations": int(self.iterations),
            "reg": float(self.reg),
            "reg_effective": float(self.reg_effective),
            "discrepancy": float(self.discrepancy),
            "stability_ratio": float(self.stability_ratio),
            "converged": bool(self.converged),
            "stagnated": bool(self.stagnated),
            "grid_N": int(self.f_hat.grid.N),
        }


@dataclass
class StabilitySweep:
    table: pd.DataFrame          # trial, metric, fs_norm, nf_norm, ratio

    def summary(self) -> Dict[str, Dict[str, float]]:
        out: Dict[str, Dict[str, float]] = {}
        for tag, grp in self.table.groupby("metric", sort=False):
            r = grp["ratio"].to_numpy()
            med = float(np.median(r))
            out[str(tag)] = {
                "max": float(np.max(r)),
                "median": med,
                "max_over_median": float(np.max(r) / med) if med > 0 else float("inf"),
                "trials": int(len(r)),
            }
        return out

    def perturbation_factor(self) -> float:
        """摂動計量と基準計量の中央値の比（≥ 1 に折り返す）。"""
        meds = [v["median"] for v in self.summary().values()]
        if len(meds) < 2 or min(meds) <= 0:
            return float("nan")
        return float(max(meds) / min(meds))


@dataclass
class HolderFit:
    table: pd.DataFrame          # amplitude, delta, metric_gap
    exponent: float

    @property
    def delta_monotone(self) -> bool:
        d = self.table.sort_values("amplitude")["delta"].to_numpy()
        return bool(np.all(np.diff(d) >= 0))


# ================================================
# 離散正規作用素
# ================================================

class _NormalSystem:
    """N = B A（A: 順変換行列、B: 随伴行列）と M_T 内積、S。"""

    def __init__(self, spec: MetricSpec, grid: Grid, z_count: int, w_count: int, step: float):
        self.A = forward_matrix(spec, grid, z_count, w_count, step, False, "inner")
        self.B, _ = adjoint_matrix(spec, grid, z_count, w_count, step, False)
        self.M = mass_tensor(spec, grid, "inner")
        self.Minv = _mass_tensor_inverse(spec, grid)
        self.S = solenoidal_projector(spec, grid)
        self.n = 3 * grid.N * grid.N

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.B @ (self.A @ x)

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        """N^♯ y = M_T⁻¹ Nᵀ M_T y。"""
        return self.Minv @ (self.A.T @ (self.B.T @ (self.M @ y)))

    def inner(self, a: np.ndarray, b: np.ndarray) -> float:
        return float(a @ (self.M @ b))

    def norm(self, a: np.ndarray) -> float:
        return float(np.sqrt(max(self.inner(a, a), 0.0)))

    def scale(self) -> float:
        """λ_max(S N^♯N S) のべき乗法による見積もり（開始ベクトル固定）。"""
        x = self.S(np.ones(self.n))
        nx = self.norm(x)
        if nx == 0.0:
            return 0.0
        x /= nx
        lam = 0.0
        for _ in range(_POWER_ITERS):
            y = self.S(self.adjoint(self.apply(x)))
            lam = self.norm(y)
            if lam == 0.0:
                return 0.0
            x = y / lam
        return lam


def _mass_tensor_inverse(spec: MetricSpec, grid: Grid) -> sp.csr_matrix:
    """M_T⁻¹（節点ごとの 3×3 ブロック逆行列 / w）。台の外は 0。"""
    _, ginv, _, _ = metric_on_grid(spec, grid)
    w = node_weights(spec, grid, "inner")
    inv_w = np.divide(1.0, w, out=np.zeros_like(w), where=w > 0)
    Ci = np.linalg.inv(tensor_mass_blocks(ginv)) * inv_w[:, None, None]
    return sp.bmat([[sp.diags(Ci[:, a, b]) for b in range(3)] for a in range(3)], format="csr")


# ================================================
# 再構成
# ================================================

def reconstruct_solenoidal(
    spec: MetricSpec,
    data: SymTensor2Field,
    reg: float = _DEFAULT_REG,
    maxiter: int = _DEFAULT_MAXITER,
    truth: Optional[SymTensor2Field] = None,
    z_count: int = _DEFAULT_COUNT,
    w_count: int = _DEFAULT_COUNT,
    step: float = _DEFAULT_STEP,
    tol: float = _DEFAULT_TOL,
) -> InversionReport:
    """
    射影付き CG。各探索方向を S で射影し直し、離散化誤差による
    ran S からのずれを抑える。返すのは不一致 ‖Nf − d‖ 最小の反復。
    停滞（残差が窓内で改善しない）は stagnated フラグで返す。
    """
    if data.support != "inner":
        raise InputError("normal-operator data must be supported in the inner disk")
    if reg < 0:
        raise InputError("regularization weight must be non-negative")
    if data.contravariant:
        data = lower_indices(spec, data)
    grid = data.grid
    sysN = _NormalSystem(spec, grid, z_count, w_count, step)
    d = data.vector()
    dnorm = sysN.norm(d)
    lam = reg * sysN.scale()

    def report(x: np.ndarray, it: int, disc: float, conv: bool, stag: bool, hist: List[float]):
        f_hat = SymTensor2Field.from_vector(grid, x, "inner")
        err = None
        if truth is not None:
            t = lower_indices(spec, truth) if truth.contravariant else truth
            ts = sysN.S(t.vector())
            nt = sysN.norm(ts)
            err = sysN.norm(x - ts) / nt if nt > 0 else sysN.norm(x)
        hn = htilde_norm(spec, data)
        ratio = sysN.norm(x) / hn if hn > 0 else 0.0
        return InversionReport(f_hat, err, it, reg, lam, disc, ratio, conv, stag, hist)

    b = sysN.S(sysN.adjoint(d))
    if dnorm == 0.0 or sysN.norm(b) == 0.0:
        return report(np.zeros(sysN.n), 0, 0.0, True, False, [])

    x = np.zeros(sysN.n)
    r = b.copy()
    p = r.copy()
    rr = sysN.inner(r, r)
    rr0 = rr
    best_x, best_disc, best_it = x.copy(), 1.0, 0
    history: List[float] = []
    res_hist: List[float] = []
    converged = stagnated = False
    it = 0
    for it in range(1, maxiter + 1):
        Hp = sysN.S(sysN.adjoint(sysN.apply(p)) + lam * p)
        pHp = sysN.inner(p, Hp)
        if pHp <= 0.0:
            logger.warning("projected CG: non-positive curvature at iteration %d", it)
            break
        alpha = rr / pHp
        x = x + alpha * p
        r = r - alpha * Hp
        rr_new = sysN.inner(r, r)
        disc = sysN.norm(sysN.apply(x) - d) / dnorm
        history.append(disc)
        res_hist.append(float(np.sqrt(rr_new / rr0)))
        if disc < best_disc:
            best_x, best_disc, best_it = x.copy(), disc, it
        if res_hist[-1] < tol:
            converged = True
            break
        if it > _STAGNATION_WINDOW:
            before = min(res_hist[:-_STAGNATION_WINDOW])
            if min(res_hist[-_STAGNATION_WINDOW:]) >= _STAGNATION_GAIN * before:
                stagnated = True
                logger.warning("projected CG stagnated at iteration %d (residual %.3e)", it, res_hist[-1])
                break
        p = sysN.S(r + (rr_new / rr) * p)
        rr = rr_new
    logger.info("projected CG: %d iterations, best discrepancy %.3e at %d", it, best_disc, best_it)
    return report(sysN.S(best_x), it, best_disc, converged, stagnated, history)


def select_regularization(
    spec: MetricSpec,
    data: SymTensor2Field,
    regs: Sequence[float] = _DEFAULT_REG_SWEEP,
    **kw,
) -> Tuple[float, pd.DataFrame]:
    """
    L 字曲線 (log 不一致, log ‖f̂‖) の離散曲率が最大の reg を選ぶ。
    returns (reg, 表)
    """
    regs = sorted(float(r) for r in regs)
    if len(regs) < 3:
        raise InputError("L-curve selection needs at least 3 regularization values")
    rows = []
    for reg in regs:
        rep = reconstruct_solenoidal(spec, data, reg=reg, **kw)
        sol = float(np.sqrt(max(np.sum(rep.f_hat.values ** 2), 0.0)))
        rows.append({"reg": reg, "discrepancy": rep.discrepancy, "solution_norm": sol})
    df = pd.DataFrame(rows)
    t = np.log(df["reg"].to_numpy())
    a = np.log(np.maximum(df["discrepancy"].to_numpy(), 1e-300))
    b = np.log(np.maximum(df["solution_norm"].to_numpy(), 1e-300))
    da, db = np.gradient(a, t), np.gradient(b, t)
    dda, ddb = np.gradient(da, t), np.gradient(db, t)
    kappa = (da * ddb - db * dda) / np.maximum((da ** 2 + db ** 2) ** 1.5, 1e-300)
    df["curvature"] = kappa
    inner = kappa[1:-1]
    best = regs[1 + int(np.argmax(inner))]
    logger.info("L-curve corner at reg=%g", best)
    return best, df


# ================================================
# 安定性比の掃引
# ================================================

def stability_ratios(
    spec: MetricSpec,
    fields: Sequence[SymTensor2Field],
    z_count: int = _DEFAULT_COUNT,
    w_count: int = _DEFAULT_COUNT,
    step: float = _DEFAULT_STEP,
) -> pd.DataFrame:
    """‖f^s‖_{L²(Ω)} / ‖Nf‖_{H̃²(Ω₁)} を場ごとに並べる（N は Ω₁ 上で評価）。"""
    rows = []
    for i, f in enumerate(fields):
        fl = lower_indices(spec, f) if f.contravariant else f
        S = solenoidal_projector(spec, fl.grid)
        fs = S(fl.vector())
        fs_norm = float(np.sqrt(max(fs @ (mass_tensor(spec, fl.grid, "inner") @ fs), 0.0)))
        Nf = normal_composed(spec, fl, z_count, w_count, step, outer=True)
        nf = htilde_norm(spec, Nf)
        rows.append({"trial": i, "metric": spec.name, "fs_norm": fs_norm, "nf_norm": nf,
                     "ratio": fs_norm / nf if nf > 0 else float("nan")})
    return pd.DataFrame(rows)


def stability_ratio_sweep(
    spec: MetricSpec,
    trials: int = _DEFAULT_TRIALS,
    seed: int = 0,
    eps: float = _DEFAULT_PERTURBATION,
    bumps: BumpSet = _DEFAULT_BUMPS,
    grid: Optional[Grid] = None,
    z_count: int = _DEFAULT_COUNT,
    w_count: int = _DEFAULT_COUNT,
    step: float = _DEFAULT_STEP,
) -> StabilitySweep:
    """
    固定シードのランダム場で基準計量と g + ε·bumps の比を並べる。
    場は格子値だけを使う（行列経路）ので、同じ入力なら結果はビット単位で一致する。
    """
    if trials < 1:
        raise InputError("stability sweep needs at least one trial")
    grid = grid or Grid(32, spec.domain)
    rng = np.random.default_rng(seed)
    fields = [random_tensor_field(grid, rng) for _ in range(trials)]
    fields = [f.with_values(f.values) for f in fields]
    tables = [stability_ratios(spec, fields, z_count, w_count, step)]
    if eps != 0.0:
        pert = spec.perturbed(bumps.scaled(eps), tag=f"{spec.name}+{eps:g}")
        tables.append(stability_ratios(pert, fields, z_count, w_count, step))
    sweep = StabilitySweep(pd.concat(tables, ignore_index=True))
    for tag, s in sweep.summary().items():
        logger.info("stability %s: median %.4g, max/median %.3f", tag, s["median"], s["max_over_median"])
    return sweep


# ================================================
# Hölder 型のフィット
# ================================================

def holder_fit(
    spec0: MetricSpec,
    bumps: BumpSet = _DEFAULT_BUMPS,
    amplitudes: Sequence[float] = _DEFAULT_AMPLITUDES,
    m: int = _DEFAULT_TABLE_SIZE,
    step: float = _DEFAULT_STEP,
) -> HolderFit:
    """
    δ(a) = max |ρ_{g₀} − ρ_{g₀+a·h}|（m×m の境界点対）と C⁰ の計量差を並べ、
    log(差) を log δ に回帰した傾きを返す。a = 0 の行は回帰から外す。
    """
    dom = spec0.domain
    for _amp, a, cx, cy, _, _ in bumps.terms:
        if np.hypot(cx - dom.center[0], cy - dom.center[1]) + a >= dom.radius:
            raise InputError("Hoelder perturbations must vanish near the boundary")
    base = distance_table(spec0, m, step)
    r = np.linspace(0.0, dom.radius, 41)
    t = np.linspace(0.0, 2.0 * np.pi, 96, endpoint=False)
    rr, tt = np.meshgrid(r, t, indexing="ij")
    pts = dom.c + np.stack([rr * np.cos(tt), rr * np.sin(tt)], axis=-1)
    h, _, _ = bumps.evaluate(pts)
    h_sup = float(np.max(np.linalg.norm(h, axis=(-2, -1), ord=2)))

    rows = []
    for a in amplitudes:
        a = float(a)
        if a == 0.0:
            rows.append({"amplitude": 0.0, "delta": 0.0, "metric_gap": 0.0})
            continue
        pert = spec0.perturbed(bumps.scaled(a), tag=f"{spec0.name}+{a:g}h")
        tab = distance_table(pert, m, step)
        rows.append({"amplitude": a, "delta": float(np.max(np.abs(tab.rho - base.rho))),
                     "metric_gap": abs(a) * h_sup})
    df = pd.DataFrame(rows)
    keep = (df["delta"] > 0) & (df["metric_gap"] > 0)
    exponent = float("nan")
    if keep.sum() >= 2:
        X = np.log(df.loc[keep, ["delta"]].to_numpy())
        y = np.log(df.loc[keep, "metric_gap"].to_numpy())
        exponent = float(LinearRegression().fit(X, y).coef_[0])
    fit = HolderFit(df, exponent)
    if not fit.delta_monotone:
        logger.warning("delta(a) is not monotone on the sampled amplitudes")
    return fit


# ================================================
# 収束の階段
# ================================================

def convergence_staircase(
    spec: MetricSpec,
    sizes: Sequence[int] = (32, 48, 64),
    seed: int = 0,
    reg: float = _DEFAULT_REG,
    maxiter: int = _DEFAULT_MAXITER,
    step: float = _DEFAULT_STEP,
) -> pd.DataFrame:
    """
    同じ閉形式のランダム場を格子 N と Γ₋（N×N）で細かくしながら
    順変換（閉形式の積分）→ 再構成し、相対誤差を並べる。
    """
    rows = []
    for n in sizes:
        grid = Grid(int(n), spec.domain)
        f = random_tensor_field(grid, np.random.default_rng(seed))
        data = normal_composed(spec, f, int(n), int(n), step)
        rep = reconstruct_solenoidal(spec, data, reg=reg, maxiter=maxiter, truth=f,
                                     z_count=int(n), w_count=int(n), step=step)
        rows.append({"N": int(n), "rel_error": rep.rel_error, "iterations": rep.iterations})
    return pd.DataFrame(rows)


__all__ = [
    "HolderFit",
    "InversionReport",
    "StabilitySweep",
    "convergence_staircase",
    "holder_fit",
    "reconstruct_solenoidal",
    "select_regularization",
    "stability_ratio_sweep",
    "stability_ratios",
]
