# -*- coding: utf-8 -*-
"""
src/fields/random_fields.py

固定シードで再現できる帯域制限の閉形式場（低次三角多項式 × コンパクトバンプ）。
値と偏微分が解析的に得られるので、記号的な dv を格子と独立に作れる。
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from src.errors import InputError
from src.fields.tensorfield import Grid, OneFormField, SymTensor2Field
from src.geometry.metric import MetricSpec, bump_derivatives, christoffel_from_metric

_DEFAULT_MODES = 2
_DEFAULT_RADIUS = 0.8


@dataclass
class TrigBump:
    """
    value_c(x) = scale · ψ(x) · Σ_b coeffs[c, b] · cos(k_b·x − phase_b)

    ψ は中心 center・半径 radius のコンパクト台バンプ。
    """
    coeffs: np.ndarray          # (ncomp, nb)
    wavenumbers: np.ndarray     # (nb, 2)
    phases: np.ndarray          # (nb,)
    center: Tuple[float, float] = (0.0, 0.0)
    radius: float = _DEFAULT_RADIUS

    @property
    def ncomp(self) -> int:
        return self.coeffs.shape[0]

    @classmethod
    def random(
        cls,
        rng: np.random.Generator,
        ncomp: int,
        modes: int = _DEFAULT_MODES,
        center: Sequence[float] = (0.0, 0.0),
        radius: float = _DEFAULT_RADIUS,
    ) -> "TrigBump":
        ks = [(kx, ky) for kx in range(0, modes + 1) for ky in range(-modes, modes + 1)
              if kx > 0 or ky >= 0]
        waves, phases = [], []
        for kx, ky in ks:
            for ph in ((0.0,) if kx == 0 and ky == 0 else (0.0, 0.5 * np.pi)):
                waves.append((kx, ky))
                phases.append(ph)
        waves = np.asarray(waves, dtype=float) * (0.5 * np.pi / radius)
        decay = 1.0 / (1.0 + np.sum((waves * radius / np.pi) ** 2, axis=1))
        coeffs = rng.standard_normal((ncomp, len(waves))) * decay[None, :]
        return cls(coeffs, waves, np.asarray(phases), tuple(float(c) for c in center), float(radius))

    def _basis(self, x: np.ndarray):
        arg = x @ self.wavenumbers.T - self.phases
        return np.cos(arg), -np.sin(arg)[..., None] * self.wavenumbers

    def value(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1, 2)
        psi, _, _ = bump_derivatives(x, self.center, self.radius)
        b, _ = self._basis(x)
        return psi[:, None] * (b @ self.coeffs.T)

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        """J[m, c, l] = ∂_l value_c。"""
        x = np.asarray(x, dtype=float).reshape(-1, 2)
        psi, dpsi, _ = bump_derivatives(x, self.center, self.radius)
        b, db = self._basis(x)
        S = b @ self.coeffs.T                            # (M, ncomp)
        dS = np.einsum("mbl,cb->mcl", db, self.coeffs)   # (M, ncomp, 2)
        return dpsi[:, None, :] * S[:, :, None] + psi[:, None, None] * dS

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.value(x)


def sym_diff_rule(spec: MetricSpec, form: TrigBump):
    """閉形式 1-形式 v に対する [dv]_ij = ½(∂_i v_j + ∂_j v_i) − Γ^k_ij v_k の rule。"""
    if form.ncomp != 2:
        raise InputError("sym_diff_rule needs a 1-form")

    def rule(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1, 2)
        v = form.value(x)
        J = form.jacobian(x)                     # J[m, j, i] = ∂_i v_j
        g, dg, _ = spec.evaluate(x, 1)
        gam = christoffel_from_metric(g, dg)
        sym = 0.5 * (J + np.swapaxes(J, 1, 2))
        full = sym - np.einsum("mkij,mk->mij", gam, v)
        return np.stack([full[:, 0, 0], full[:, 0, 1], full[:, 1, 1]], axis=1)

    return rule


def random_tensor_field(
    grid: Grid,
    rng: np.random.Generator,
    modes: int = _DEFAULT_MODES,
    center: Sequence[float] = (0.0, 0.0),
    radius: float = _DEFAULT_RADIUS,
    support: str = "inner",
) -> SymTensor2Field:
    """rule 付きのランダムな滑らかな対称テンソル場。"""
    tb = TrigBump.random(rng, 3, modes, center, radius)
    return SymTensor2Field.from_rule(grid, tb, support)


def random_one_form(
    rng: np.random.Generator,
    modes: int = _DEFAULT_MODES,
    center: Sequence[float] = (0.0, 0.0),
    radius: float = _DEFAULT_RADIUS,
) -> TrigBump:
    return TrigBump.random(rng, 2, modes, center, radius)


def one_form_field(grid: Grid, form: TrigBump, support: str = "inner") -> OneFormField:
    return OneFormField.from_rule(grid, form, support)


def potential_field(spec: MetricSpec, grid: Grid, form: TrigBump, support: str = "inner") -> SymTensor2Field:
    """f = dv（v は台が Ω 内のバンプ 1-形式）。"""
    return SymTensor2Field.from_rule(grid, sym_diff_rule(spec, form), support)
