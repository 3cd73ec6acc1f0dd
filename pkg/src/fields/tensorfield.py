# -*- coding: utf-8 -*-
"""
src/fields/tensorfield.py

一様格子上のスカラー場・1-形式・対称 2-テンソル場と共変微分作用素。

格子規約
--------
- N×N の一様格子（Ω₁ の外接正方形）。values[i, j] は x = xs[i], y = ys[j]。
- 対称テンソルは上三角 (11, 12, 22) のみを保持する。
- 疎行列作用素は「成分優先」のベクトル [成分0 の N² 個, 成分1 の N² 個, …] に作用する。
- 台 support="inner" は |x| ≤ R（Ω）、"outer" は |x| ≤ R₁（Ω₁）。台の外は 0 拡張。

Public API
----------
Grid, ScalarField, OneFormField, SymTensor2Field
sym_diff(spec, v), divergence(spec, f), l2_inner(spec, f, h)
raise_indices(spec, f), lower_indices(spec, f), h1_norm(F)
difference_matrices, sym_diff_matrix, mass_tensor, mass_form, bilinear_weights
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from functools import cached_property, lru_cache
from typing import Callable, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy import ndimage

from src.errors import InputError
from src.geometry.metric import DiskDomain, MetricSpec, christoffel_from_metric, det2, inv2

logger = logging.getLogger(__name__)

# ================================================
# 定数
# ================================================

_DEFAULT_N = 64
COMP = ((0, 0), (0, 1), (1, 1))           # 上三角成分の並び
_FULL = ((0, 0), (0, 1), (1, 0), (1, 1))
_E = np.array([[1.0 if tuple(sorted(f)) == c else 0.0 for c in COMP] for f in _FULL])

Rule = Callable[[np.ndarray], np.ndarray]


# ================================================
# 格子
# ================================================

@dataclass(frozen=True)
class Grid:
    """Ω₁ を覆う一様格子。frozen なので作用素キャッシュのキーになる。"""
    N: int = _DEFAULT_N
    domain: DiskDomain = field(default_factory=DiskDomain)

    def __post_init__(self) -> None:
        if self.N < 8:
            raise InputError("grid needs N >= 8")

    @property
    def half_width(self) -> float:
        return self.domain.outer_radius

    @cached_property
    def xs(self) -> np.ndarray:
        return self.domain.center[0] + np.linspace(-self.half_width, self.half_width, self.N)

    @cached_property
    def ys(self) -> np.ndarray:
        return self.domain.center[1] + np.linspace(-self.half_width, self.half_width, self.N)

    @property
    def dx(self) -> float:
        return 2.0 * self.half_width / (self.N - 1)

    @cached_property
    def points(self) -> np.ndarray:
        X, Y = np.meshgrid(self.xs, self.ys, indexing="ij")
        return np.stack([X, Y], axis=-1)

    @cached_property
    def radius_map(self) -> np.ndarray:
        r, _ = self.domain.polar(self.points)
        return r

    @cached_property
    def mask(self) -> np.ndarray:
        return self.radius_map <= self.domain.radius

    @cached_property
    def outer_mask(self) -> np.ndarray:
        return self.radius_map <= self.domain.outer_radius

    def support_mask(self, support: str) -> np.ndarray:
        if support == "inner":
            return self.mask
        if support == "outer":
            return self.outer_mask
        raise InputError(f"unknown support '{support}'")

    def support_radius(self, support: str) -> float:
        return self.domain.radius if support == "inner" else self.domain.outer_radius

    def boundary_layer(self, support: str = "inner") -> np.ndarray:
        """台の節点のうち 4 近傍のいずれかが台の外にあるもの。"""
        m = self.support_mask(support)
        inner = m.copy()
        for axis in (0, 1):
            for k in (-1, 1):
                inner &= _shift(m, k, axis)
        return m & ~inner

    def interior(self, support: str = "inner") -> np.ndarray:
        return self.support_mask(support) & ~self.boundary_layer(support)


def _shift(m: np.ndarray, k: int, axis: int) -> np.ndarray:
    """out[i] = m[i + k]（範囲外は False）。"""
    out = np.zeros_like(m)
    n = m.shape[axis]
    src = [slice(None)] * m.ndim
    dst = [slice(None)] * m.ndim
    if k >= 0:
        src[axis] = slice(k, n)
        dst[axis] = slice(0, n - k)
    else:
        src[axis] = slice(0, n + k)
        dst[axis] = slice(-k, n)
    out[tuple(dst)] = m[tuple(src)]
    return out


# ================================================
# 場
# ================================================

@dataclass
class _Field:
    grid: Grid
    values: np.ndarray
    support: str = "inner"
    rule: Optional[Rule] = None

    ncomp = 1

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 2 and self.ncomp == 1:
            v = v[..., None]
        if v.shape != (self.grid.N, self.grid.N, self.ncomp):
            raise InputError(
                f"{type(self).__name__} values must have shape "
                f"({self.grid.N}, {self.grid.N}, {self.ncomp}), got {v.shape}"
            )
        self.values = v * self.grid.support_mask(self.support)[..., None]

    # ---------------- 生成 ----------------
    @classmethod
    def zeros(cls, grid: Grid, support: str = "inner", **kw):
        return cls(grid, np.zeros((grid.N, grid.N, cls.ncomp)), support, **kw)

    @classmethod
    def from_rule(cls, grid: Grid, rule: Rule, support: str = "inner", **kw):
        """閉形式 rule（(M,2) → (M, ncomp)）を節点で標本化し、rule も保持する。"""
        vals = np.asarray(rule(grid.points.reshape(-1, 2)), dtype=float)
        return cls(grid, vals.reshape(grid.N, grid.N, cls.ncomp), support, rule=rule, **kw)

    @classmethod
    def from_vector(cls, grid: Grid, vec: np.ndarray, support: str = "inner", **kw):
        vals = np.asarray(vec, dtype=float).reshape(cls.ncomp, grid.N, grid.N).transpose(1, 2, 0)
        return cls(grid, vals, support, **kw)

    # ---------------- 変換 ----------------
    @property
    def mask(self) -> np.ndarray:
        return self.grid.support_mask(self.support)

    def vector(self) -> np.ndarray:
        return self.values.transpose(2, 0, 1).reshape(-1).copy()

    def with_values(self, values: np.ndarray):
        return replace(self, values=values, rule=None)

    def _check(self, other: "_Field") -> None:
        if type(other) is not type(self) or other.grid != self.grid or other.support != self.support:
            raise InputError("field grid/support mismatch")

    def __add__(self, other):
        self._check(other)
        rule = None
        if self.rule is not None and other.rule is not None:
            r1, r2 = self.rule, other.rule
            rule = lambda p: r1(p) + r2(p)  # noqa: E731
        return replace(self, values=self.values + other.values, rule=rule)

    def __sub__(self, other):
        return self + (-1.0) * other

    def __mul__(self, c: float):
        rule = None
        if self.rule is not None:
            r = self.rule
            rule = lambda p: c * r(p)  # noqa: E731
        return replace(self, values=c * self.values, rule=rule)

    __rmul__ = __mul__

    def __neg__(self):
        return (-1.0) * self

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    # ---------------- 格子外読み出し ----------------
    def sample(self, points: np.ndarray) -> np.ndarray:
        """
        点列で値を読む。rule があれば閉形式、無ければ双一次補間。
        台の外（|x| > R）は 0。
        """
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        r, _ = self.grid.domain.polar(pts)
        inside = r <= self.grid.support_radius(self.support) * (1.0 + 1e-12)
        if self.rule is not None:
            vals = np.asarray(self.rule(pts), dtype=float).reshape(len(pts), self.ncomp)
            return vals * inside[:, None]
        idx, w = bilinear_weights(self.grid, pts, self.support)
        flat = self.values.reshape(-1, self.ncomp)
        return np.einsum("mc,mcq->mq", w, flat[idx])


@dataclass
class ScalarField(_Field):
    ncomp = 1


@dataclass
class OneFormField(_Field):
    ncomp = 2


@dataclass
class SymTensor2Field(_Field):
    """上三角 (11, 12, 22) を保持。contravariant=True なら f^ij。"""
    contravariant: bool = False
    ncomp = 3

    def full(self) -> np.ndarray:
        """(N, N, 2, 2) の完全テンソル。"""
        v = self.values
        out = np.empty(v.shape[:2] + (2, 2))
        out[..., 0, 0] = v[..., 0]
        out[..., 0, 1] = out[..., 1, 0] = v[..., 1]
        out[..., 1, 1] = v[..., 2]
        return out

    def component(self, i: int, j: int) -> np.ndarray:
        return self.values[..., COMP.index(tuple(sorted((i, j))))]

    @classmethod
    def from_full(cls, grid: Grid, full: np.ndarray, support: str = "inner", **kw):
        vals = np.stack([full[..., 0, 0], 0.5 * (full[..., 0, 1] + full[..., 1, 0]), full[..., 1, 1]], axis=-1)
        return cls(grid, vals, support, **kw)


def compact_to_full(v: np.ndarray) -> np.ndarray:
    out = np.empty(v.shape[:-1] + (2, 2))
    out[..., 0, 0] = v[..., 0]
    out[..., 0, 1] = out[..., 1, 0] = v[..., 1]
    out[..., 1, 1] = v[..., 2]
    return out


def contract(f_compact: np.ndarray, u: np.ndarray, w: Optional[np.ndarray] = None) -> np.ndarray:
    """f_ij u^i w^j（w 省略時は u）。"""
    w = u if w is None else w
    return (f_compact[..., 0] * u[..., 0] * w[..., 0]
            + f_compact[..., 1] * (u[..., 0] * w[..., 1] + u[..., 1] * w[..., 0])
            + f_compact[..., 2] * u[..., 1] * w[..., 1])


# ================================================
# 双一次補間（台の外側は最近傍の台節点で埋める）
# ================================================

@lru_cache(maxsize=16)
def _nearest_support_index(grid: Grid, support: str) -> np.ndarray:
    m = grid.support_mask(support)
    _, (ii, jj) = ndimage.distance_transform_edt(~m, return_indices=True)
    return (ii * grid.N + jj).reshape(-1)


def bilinear_weights(grid: Grid, points: np.ndarray, support: str = "inner") -> Tuple[np.ndarray, np.ndarray]:
    """
    (M, 4) の節点インデックスと重み。台の外の隅は最近傍の台節点に置き換え、
    |x| > R の点は重み 0。
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    fx = (pts[:, 0] - grid.xs[0]) / grid.dx
    fy = (pts[:, 1] - grid.ys[0]) / grid.dx
    i0 = np.clip(np.floor(fx).astype(int), 0, grid.N - 2)
    j0 = np.clip(np.floor(fy).astype(int), 0, grid.N - 2)
    tx = np.clip(fx - i0, 0.0, 1.0)
    ty = np.clip(fy - j0, 0.0, 1.0)
    idx = np.stack([i0 * grid.N + j0, (i0 + 1) * grid.N + j0,
                    i0 * grid.N + j0 + 1, (i0 + 1) * grid.N + j0 + 1], axis=1)
    w = np.stack([(1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty], axis=1)
    idx = _nearest_support_index(grid, support)[idx]
    r, _ = grid.domain.polar(pts)
    inside = r <= grid.support_radius(support) * (1.0 + 1e-12)
    return idx, w * inside[:, None]


# ================================================
# 差分作用素
# ================================================

@lru_cache(maxsize=16)
def difference_matrices(grid: Grid, support: str = "inner") -> Tuple[sp.csr_matrix, sp.csr_matrix]:
    """
    台の節点上の ∂_x, ∂_y。内部は中心差分、台の縁では片側 2 次（足りなければ 1 次）。
    台の外の行は 0。
    """
    N, h = grid.N, grid.dx
    m = grid.support_mask(support)
    pid = np.arange(N * N).reshape(N, N)
    mats = []
    for axis in (0, 1):
        stride = N if axis == 0 else 1
        p1, m1 = _shift(m, 1, axis), _shift(m, -1, axis)
        p2, m2 = _shift(m, 2, axis), _shift(m, -2, axis)
        cen = m & p1 & m1
        fwd2 = m & ~cen & p1 & p2
        bwd2 = m & ~cen & ~fwd2 & m1 & m2
        fwd1 = m & ~cen & ~fwd2 & ~bwd2 & p1
        bwd1 = m & ~cen & ~fwd2 & ~bwd2 & ~fwd1 & m1
        rows, cols, vals = [], [], []

        def put(sel, offsets, coefs):
            p = pid[sel]
            for o, c in zip(offsets, coefs):
                rows.append(p)
                cols.append(p + o * stride)
                vals.append(np.full(p.shape, c / h))

        put(cen, (1, -1), (0.5, -0.5))
        put(fwd2, (0, 1, 2), (-1.5, 2.0, -0.5))
        put(bwd2, (0, -1, -2), (1.5, -2.0, 0.5))
        put(fwd1, (0, 1), (-1.0, 1.0))
        put(bwd1, (0, -1), (1.0, -1.0))
        D = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(N * N, N * N)).tocsr()
        mats.append(D)
    return mats[0], mats[1]


@lru_cache(maxsize=32)
def metric_on_grid(spec: MetricSpec, grid: Grid):
    """節点での (g, g⁻¹, √det g, Γ)。"""
    pts = grid.points.reshape(-1, 2)
    g, dg, _ = spec.evaluate(pts, 1)
    return g, inv2(g), np.sqrt(det2(g)), christoffel_from_metric(g, dg)


def _diag(v: np.ndarray) -> sp.dia_matrix:
    return sp.diags(np.asarray(v, dtype=float))


@lru_cache(maxsize=32)
def sym_diff_matrix(spec: MetricSpec, grid: Grid, support: str = "inner") -> sp.csr_matrix:
    """(3N² × 2N²) の対称微分 [dv]_ij = ½(∂_i v_j + ∂_j v_i) − Γ^k_ij v_k。"""
    Dx, Dy = difference_matrices(grid, support)
    _, _, _, gam = metric_on_grid(spec, grid)
    m = grid.support_mask(support).reshape(-1).astype(float)
    G = lambda k, i, j: _diag(gam[:, k, i, j])  # noqa: E731
    blocks = [
        [Dx - G(0, 0, 0), -G(1, 0, 0)],
        [0.5 * Dy - G(0, 0, 1), 0.5 * Dx - G(1, 0, 1)],
        [-G(0, 1, 1), Dy - G(1, 1, 1)],
    ]
    D = sp.bmat(blocks, format="csr")
    return (_diag(np.tile(m, 3)) @ D).tocsr()


@lru_cache(maxsize=32)
def divergence_matrix(spec: MetricSpec, grid: Grid, support: str = "inner") -> sp.csr_matrix:
    """(2N² × 3N²) の強形式共変発散 [δf]_i = g^{jk}∇_k f_ij。"""
    Dx, Dy = difference_matrices(grid, support)
    D = (Dx, Dy)
    _, ginv, _, gam = metric_on_grid(spec, grid)
    m = grid.support_mask(support).reshape(-1).astype(float)
    # 代数項: −g^{jk}Γ^a_{ki} f_aj − g^{jk}Γ^b_{kj} f_ib
    alg = np.zeros((len(m), 2, 2, 2))          # [p, i, a, b]
    alg -= np.einsum("pbk,paki->piab", ginv, gam)
    trace = np.einsum("pjk,pbkj->pb", ginv, gam)
    for i in range(2):
        alg[:, i, i, :] -= trace
    rows = []
    for i in range(2):
        row = []
        for c, (a, b) in enumerate(COMP):
            pairs = {(a, b), (b, a)}
            coef = sum(alg[:, i, s, t] for s, t in pairs)
            op = _diag(coef)
            for s, t in pairs:
                if s == i:
                    for k in range(2):
                        op = op + _diag(ginv[:, t, k]) @ D[k]
            row.append(op)
        rows.append(row)
    out = sp.bmat(rows, format="csr")
    return (_diag(np.tile(m, 2)) @ out).tocsr()


def node_weights(spec: MetricSpec, grid: Grid, support: str = "inner") -> np.ndarray:
    """台形則の節点重み √det g · dx²（格子の縁は ½、角は ¼。台の外は 0）。"""
    _, _, sq, _ = metric_on_grid(spec, grid)
    edge = np.ones(grid.N)
    edge[[0, -1]] = 0.5
    trap = np.outer(edge, edge).reshape(-1)
    return sq * trap * grid.dx ** 2 * grid.support_mask(support).reshape(-1)


def tensor_mass_blocks(ginv: np.ndarray) -> np.ndarray:
    """C[p, a, b] = Eᵀ(g⁻¹⊗g⁻¹)E（上三角成分どうしの縮約係数）。"""
    fi = np.array([f[0] for f in _FULL])
    fj = np.array([f[1] for f in _FULL])
    K = ginv[:, fi[:, None], fi[None, :]] * ginv[:, fj[:, None], fj[None, :]]
    return np.einsum("fa,pfh,hb->pab", _E, K, _E)


@lru_cache(maxsize=32)
def mass_tensor(spec: MetricSpec, grid: Grid, support: str = "inner") -> sp.csr_matrix:
    _, ginv, _, _ = metric_on_grid(spec, grid)
    w = node_weights(spec, grid, support)
    C = tensor_mass_blocks(ginv) * w[:, None, None]
    return sp.bmat([[_diag(C[:, a, b]) for b in range(3)] for a in range(3)], format="csr")


@lru_cache(maxsize=32)
def mass_form(spec: MetricSpec, grid: Grid, support: str = "inner") -> sp.csr_matrix:
    _, ginv, _, _ = metric_on_grid(spec, grid)
    w = node_weights(spec, grid, support)
    return sp.bmat([[_diag(ginv[:, a, b] * w) for b in range(2)] for a in range(2)], format="csr")


# ================================================
# 公開演算
# ================================================

def sym_diff(spec: MetricSpec, v: OneFormField) -> SymTensor2Field:
    D = sym_diff_matrix(spec, v.grid, v.support)
    return SymTensor2Field.from_vector(v.grid, D @ v.vector(), v.support)


def divergence(spec: MetricSpec, f: SymTensor2Field) -> OneFormField:
    if f.contravariant:
        f = lower_indices(spec, f)
    A = divergence_matrix(spec, f.grid, f.support)
    return OneFormField.from_vector(f.grid, A @ f.vector(), f.support)


def l2_inner(spec: MetricSpec, f: _Field, h: _Field) -> float:
    """∫ ⟨f, h⟩_g √det g dx の台形則（重みは node_weights）。"""
    f._check(h)
    if isinstance(f, SymTensor2Field):
        f = lower_indices(spec, f) if f.contravariant else f
        h = lower_indices(spec, h) if h.contravariant else h
        M = mass_tensor(spec, f.grid, f.support)
        return float(f.vector() @ (M @ h.vector()))
    if isinstance(f, OneFormField):
        M = mass_form(spec, f.grid, f.support)
        return float(f.vector() @ (M @ h.vector()))
    w = node_weights(spec, f.grid, f.support)
    return float(np.sum(w * f.values[..., 0].reshape(-1) * h.values[..., 0].reshape(-1)))


def l2_norm(spec: MetricSpec, f: _Field) -> float:
    return float(np.sqrt(max(l2_inner(spec, f, f), 0.0)))


def _congruence(f: SymTensor2Field, A: np.ndarray, contravariant: bool) -> SymTensor2Field:
    full = f.full().reshape(-1, 2, 2)
    out = np.einsum("pik,pkl,pjl->pij", A, full, A)
    return SymTensor2Field.from_full(f.grid, out.reshape(f.grid.N, f.grid.N, 2, 2),
                                     f.support, contravariant=contravariant)


def raise_indices(spec: MetricSpec, f: SymTensor2Field) -> SymTensor2Field:
    """f^ij = g^{ik} g^{jl} f_kl。"""
    if f.contravariant:
        return f
    _, ginv, _, _ = metric_on_grid(spec, f.grid)
    return _congruence(f, ginv, True)


def lower_indices(spec: MetricSpec, f: SymTensor2Field) -> SymTensor2Field:
    if not f.contravariant:
        return f
    g, _, _, _ = metric_on_grid(spec, f.grid)
    return _congruence(f, g, False)


def h1_norm(F: _Field) -> float:
    """
    成分ごとの有限差分 H¹ ノルム（計量に依存しない代用ノルム）。
    対称テンソルの非対角成分は 2 回数える。
    """
    Dx, Dy = difference_matrices(F.grid, F.support)
    mult = np.array([1.0, 2.0, 1.0]) if isinstance(F, SymTensor2Field) else np.ones(F.ncomp)
    w = F.grid.dx ** 2
    total = 0.0
    for c in range(F.ncomp):
        u = F.values[..., c].reshape(-1)
        total += mult[c] * w * (u @ u + (Dx @ u) @ (Dx @ u) + (Dy @ u) @ (Dy @ u))
    return float(np.sqrt(total))
