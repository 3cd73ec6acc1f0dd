# -*- coding: utf-8 -*-
"""
src/geometry/simplicity.py

計量の単純性（境界の強凸性 + 共役点なし）をサンプリングで判定する。
証明ではなく確率的な診断。閾値の判断は呼び出し側に任せ、生のマージンを返す。
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Dict

import numpy as np

from src.errors import IntegrationError
from src.geometry.geodesic import jacobi_batch
from src.geometry.metric import MetricSpec, christoffel_from_metric, inv2

logger = logging.getLogger(__name__)

_DEFAULT_RAYS = 16
_DEFAULT_FAN = 16
_DEFAULT_STEP = 1e-2
_CONVEXITY_SAMPLES = 256


@dataclass
class SimplicityReport:
    convexity_margin: float
    conjugate_point: bool
    min_jacobi: float
    boundary_samples: int
    rays: int
    trapped: bool = False
    diagnostic: str = ""

    @property
    def simple(self) -> bool:
        return self.convexity_margin > 0 and not self.conjugate_point and not self.trapped

    def to_dict(self) -> Dict[str, object]:
        d = asdict(self)
        d["simple"] = self.simple
        return d


def boundary_curvature(spec: MetricSpec, angles: np.ndarray) -> np.ndarray:
    """
    ∂Ω の測地的曲率（内向き法線に関する第二基本形式 / |ż|²_g）。

    κ = −(z̈ + Γ(ż, ż))·n / (|ż|²_g |n|_{g*})、n は外向き余法線。
    ユークリッド単位円で 1。
    """
    dom = spec.domain
    a = np.asarray(angles, dtype=float)
    R = dom.radius
    z = dom.boundary_point(a)
    zd = R * np.stack([-np.sin(a), np.cos(a)], axis=-1)
    zdd = -R * np.stack([np.cos(a), np.sin(a)], axis=-1)
    n = np.stack([np.cos(a), np.sin(a)], axis=-1)
    g, dg, _ = spec.evaluate(z, 1)
    gam = christoffel_from_metric(g, dg)
    acc = zdd + np.einsum("mkij,mi,mj->mk", gam, zd, zd)
    speed2 = np.einsum("mi,mij,mj->m", zd, g, zd)
    nstar = np.sqrt(np.einsum("mi,mij,mj->m", n, inv2(g), n))
    return -np.einsum("mk,mk->m", acc, n) / (speed2 * nstar)


def check_simplicity(
    spec: MetricSpec,
    ray_count: int = _DEFAULT_RAYS,
    step: float = _DEFAULT_STEP,
    fan_count: int = _DEFAULT_FAN,
) -> SimplicityReport:
    """
    境界サンプル ray_count 点から内向きの扇 fan_count 本を出し、
    Jacobi 方程式を積分して行列式の符号変化（共役点）を探す。
    """
    conv_angles = 2.0 * np.pi * np.arange(_CONVEXITY_SAMPLES) / _CONVEXITY_SAMPLES
    margin = float(np.min(boundary_curvature(spec, conv_angles)))

    beta = 2.0 * np.pi * np.arange(ray_count) / ray_count
    psi = -0.5 * np.pi + np.pi * (np.arange(fan_count) + 0.5) / fan_count
    B, P = np.meshgrid(beta, psi, indexing="ij")
    starts = spec.domain.boundary_point(B.ravel())
    angles = (B + np.pi + P).ravel()
    n_rays = len(angles)

    try:
        rt, dets, valid, _ = jacobi_batch(spec, starts, angles, step=step)
    except IntegrationError as exc:
        logger.warning("simplicity check: trapped geodesic on %s (%s)", spec.name, exc)
        return SimplicityReport(margin, False, float("nan"), ray_count, n_rays, True,
                                f"geodesic failed to exit: {exc}")

    late = valid & (rt > 2.0 * step)
    ratio = np.where(late, dets / np.where(rt > 0, rt, 1.0), np.inf)
    min_ratio = float(np.min(ratio)) if late.any() else float("nan")
    conjugate = bool(np.any(dets[late] <= 0.0))
    diag = ""
    if margin <= 0:
        diag = "boundary not strictly convex"
    elif conjugate:
        diag = "Jacobi field zero detected"
    logger.info("simplicity %s: margin=%.4f conjugate=%s min_jacobi=%.4f",
                spec.name, margin, conjugate, min_ratio)
    return SimplicityReport(margin, conjugate, min_ratio, ray_count, n_rays, False, diag)
