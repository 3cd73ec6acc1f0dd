# -*- coding: utf-8 -*-
"""
tests/test_inversion.py

src/rigidity/inversion.py の再構成・L 字曲線・安定性比・Hölder 型フィット。
"""
from __future__ import annotations

import numpy as np
import pytest

from src.errors import InputError
from src.fields.random_fields import random_tensor_field
from src.fields.tensorfield import Grid, SymTensor2Field
from src.geometry.metric import BumpSet
from src.rigidity.inversion import (
    convergence_staircase,
    holder_fit,
    reconstruct_solenoidal,
    select_regularization,
    stability_ratio_sweep,
)
from src.transform.decomp import solenoidal_projector
from src.transform.xray import normal_composed


def _grid_field(grid, seed):
    f = random_tensor_field(grid, np.random.default_rng(seed))
    return f.with_values(f.values)


# ================================================
# グループ1: 再構成
# ================================================

def test_zero_data(conf, grid16):
    rep = reconstruct_solenoidal(conf, SymTensor2Field.zeros(grid16), z_count=16, w_count=16)
    assert rep.f_hat.max_abs() == 0.0
    assert rep.iterations == 0
    assert rep.converged
    assert rep.rel_error is None


def test_reconstruction_error(conf, grid32):
    f = _grid_field(grid32, 21)
    data = normal_composed(conf, f, 32, 32)
    rep = reconstruct_solenoidal(conf, data, truth=f)
    assert rep.rel_error <= 0.10
    assert rep.discrepancy <= 1.0
    assert len(rep.history) <= rep.iterations
    d = rep.to_dict()
    assert d["grid_N"] == 32
    assert d["rel_error"] == pytest.approx(rep.rel_error)


def test_reconstruction_is_solenoidal(conf, grid32):
    f = _grid_field(grid32, 22)
    rep = reconstruct_solenoidal(conf, normal_composed(conf, f, 32, 32), maxiter=50)
    x = rep.f_hat.vector()
    S = solenoidal_projector(conf, grid32)
    assert np.max(np.abs(S(x) - x)) <= 1e-8 * np.max(np.abs(x))


def test_reconstruction_rejects_bad_input(conf, grid16):
    with pytest.raises(InputError):
        reconstruct_solenoidal(conf, SymTensor2Field.zeros(grid16, support="outer"))
    with pytest.raises(InputError):
        reconstruct_solenoidal(conf, SymTensor2Field.zeros(grid16), reg=-1.0)


def test_lcurve_picks_interior_value(conf, grid16):
    f = _grid_field(grid16, 23)
    data = normal_composed(conf, f, 16, 16)
    regs = [1e-5, 1e-4, 1e-3, 1e-2]
    reg, df = select_regularization(conf, data, regs, maxiter=40, z_count=16, w_count=16)
    # 端点は選ばれない
    assert reg in regs[1:-1]
    assert list(df.columns) == ["reg", "discrepancy", "solution_norm", "curvature"]
    assert list(df["reg"]) == regs


def test_lcurve_needs_three_values(conf, grid16):
    with pytest.raises(InputError):
        select_regularization(conf, SymTensor2Field.zeros(grid16), [1e-4, 1e-3])


@pytest.mark.slow
def test_convergence_staircase(conf):
    df = convergence_staircase(conf, sizes=(32, 48, 64), seed=3)
    assert list(df["N"]) == [32, 48, 64]
    assert df["rel_error"].iloc[0] <= 0.10
    assert np.all(np.diff(df["rel_error"].to_numpy()) < 0)


# ================================================
# グループ2: 安定性比
# ================================================

def test_stability_sweep(conf):
    sweep = stability_ratio_sweep(conf, trials=3, seed=4, grid=Grid(16, conf.domain),
                                  z_count=16, w_count=16)
    summary = sweep.summary()
    assert len(summary) == 2
    assert np.all(np.isfinite(sweep.table["ratio"]))
    assert np.all(sweep.table["ratio"] > 0)
    for s in summary.values():
        assert s["trials"] == 3
        assert s["max_over_median"] >= 1.0
    assert sweep.perturbation_factor() >= 1.0


def test_stability_sweep_is_deterministic(conf):
    kw = dict(trials=2, seed=5, eps=0.0, grid=Grid(16, conf.domain), z_count=16, w_count=16)
    a = stability_ratio_sweep(conf, **kw).table
    b = stability_ratio_sweep(conf, **kw).table
    assert a.equals(b)
    assert np.isnan(stability_ratio_sweep(conf, **kw).perturbation_factor())


@pytest.mark.slow
def test_stability_sweep_full(conf):
    sweep = stability_ratio_sweep(conf, trials=50, seed=0)
    for s in sweep.summary().values():
        assert s["max_over_median"] <= 10.0
    assert sweep.perturbation_factor() <= 2.0


def test_stability_sweep_needs_trials(conf):
    with pytest.raises(InputError):
        stability_ratio_sweep(conf, trials=0)


# ================================================
# グループ3: Hölder 型フィット
# ================================================

def test_holder_fit(flat):
    fit = holder_fit(flat, amplitudes=(0.0, 0.02, 0.04, 0.08), m=8)
    assert fit.delta_monotone
    zero = fit.table[fit.table["amplitude"] == 0.0]
    assert float(zero["delta"].iloc[0]) == 0.0
    assert fit.exponent >= 0.5


def test_holder_rejects_boundary_bump(flat):
    with pytest.raises(InputError):
        holder_fit(flat, bumps=BumpSet(((0.1, 0.3, 0.8, 0.0, 0.0, 1.0),)), m=8)
