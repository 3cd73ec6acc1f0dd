# -*- coding: utf-8 -*-
"""
src/experiments/runner.py

設定ファイル駆動の実験ランナー。

    python -m src.experiments.runner <subcommand> --config configs/euclidean32.yaml [--out DIR]
                                     [--seed N] [--route composed|kernel] [--quiet]

出力先は --out > 環境変数 TENSOR_TOMO_OUT > output.dir > "outputs" の順で決まり、
その下の <scenario>/<subcommand>/ に CSV / JSON / tt2f と summary.txt、
config.resolved.yaml を書く。ファイルは一時ファイルに書いてから os.replace する。

終了コード: 0 成功、1 設定エラー、2 計算モジュールのエラー。

Public API
----------
SUBCOMMANDS
main(argv=None) -> int
run(subcommand, config_path, out=None, seed=None, route="composed") -> Path
"""
from __future__ import annotations

import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from src.errors import ConfigError, InputError, TomoError
from src.experiments.config import ExperimentConfig, load_config
from src.fields.random_fields import potential_field, random_one_form, random_tensor_field
from src.fields.serialize import field_frame, read_field, to_bytes
from src.fields.tensorfield import Grid, SymTensor2Field, l2_norm
from src.geometry.geodesic import distance_table
from src.geometry.metric import MetricSpec
from src.geometry.simplicity import check_simplicity
from src.rigidity.boundary import (
    conformal_jet_oracle,
    default_eps_grid,
    epsilon_scans,
    jet_recover,
    linearize_distance,
    remainder_scaling,
)
from src.rigidity.inversion import (
    convergence_staircase,
    holder_fit,
    reconstruct_solenoidal,
    select_regularization,
    stability_ratio_sweep,
)
from src.transform.decomp import (
    decompose,
    gauge_normalize_boundary,
    gauge_normalize_global,
    weak_divergence_residual,
)
from src.transform.xray import build_inflow_grid, normal_composed, normal_operator, xray_forward

logger = logging.getLogger(__name__)

# ================================================
# 定数
# ================================================

_ENV_OUT = "TENSOR_TOMO_OUT"
_DEFAULT_OUT = "outputs"
_ROUTES = ("composed", "kernel")
_HOLDER_CAVEAT = (
    "exploratory fit: the stability exponent and constants of the estimate "
    "are not reproducible at desk scale"
)


# ================================================
# 成果物の書き出し（一時ファイル → rename）
# ================================================

def _atomic_write(path: Path, data: bytes) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)
    return path


class _Artifacts:
    """1 回の実行で書くファイル群と summary.txt の行。"""

    def __init__(self, out_dir: Path) -> None:
        self.out_dir = out_dir
        self.written: List[Path] = []
        self.summary: Dict[str, Any] = {}

    def bytes(self, name: str, data: bytes) -> Path:
        p = _atomic_write(self.out_dir / name, data)
        self.written.append(p)
        return p

    def text(self, name: str, text: str) -> Path:
        return self.bytes(name, text.encode("utf-8"))

    def csv(self, name: str, df: pd.DataFrame, header: Optional[Dict[str, Any]] = None) -> Path:
        lines = "".join(f"# {k}: {header[k]}\n" for k in sorted(header)) if header else ""
        return self.text(name, lines + df.to_csv(index=False, lineterminator="\n"))

    def json(self, name: str, payload: Dict[str, Any]) -> Path:
        return self.text(name, json.dumps(_plain(payload), ensure_ascii=False, indent=2, sort_keys=True) + "\n")

    def field(self, name: str, f) -> Path:
        return self.bytes(name, to_bytes(f))


def _plain(obj: Any) -> Any:
    """numpy スカラー・配列を JSON に載る型へ。"""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        obj = float(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return None if np.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def _summary_text(cfg: ExperimentConfig, subcommand: str, art: _Artifacts) -> str:
    lines = [
        f"scenario: {cfg.scenario}",
        f"subcommand: {subcommand}",
        f"seed: {cfg.seed}",
        "",
    ]
    for k in sorted(art.summary):
        v = art.summary[k]
        lines.append(f"{k}: {v:.6g}" if isinstance(v, float) else f"{k}: {v}")
    lines.append("")
    lines.append("artifacts:")
    for p in sorted(art.written, key=lambda q: q.name):
        lines.append(f"  {p.name}")
    return "\n".join(lines) + "\n"


# ================================================
# 入力の組み立て
# ================================================

def _steps(cfg: ExperimentConfig):
    return float(cfg.get("geodesic.step", 1e-3)), float(cfg.get("geodesic.transform_step", 1e-2))


def _counts(cfg: ExperimentConfig):
    return int(cfg.get("inflow.z_count", 32)), int(cfg.get("inflow.w_count", 32))


def _load_field(cfg: ExperimentConfig, spec: MetricSpec, grid: Grid) -> SymTensor2Field:
    """field.path のファイル、なければ field.generator で生成した場。"""
    path = cfg.get("field.path")
    gen = cfg.generator()
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"field file not found: {p}", key="field.path",
                              line=cfg.lines.get("field.path"))
        f = read_field(p)
        if not isinstance(f, SymTensor2Field):
            raise InputError(f"{p} does not hold a symmetric 2-tensor field")
        if f.grid.domain != spec.domain:
            raise InputError(f"{p} was sampled on a different disk than metric '{spec.name}'")
        return f
    if gen is None:
        cfg.require("field.path")
    modes = int(cfg.get("field.modes", 2))
    radius = float(cfg.get("field.radius", 0.8))
    rng = cfg.rng()
    if gen == "random_tensor":
        return random_tensor_field(grid, rng, modes=modes, radius=radius)
    if gen == "potential":
        return potential_field(spec, grid, random_one_form(rng, modes=modes, radius=radius))
    return SymTensor2Field.zeros(grid)


# ================================================
# サブコマンド
# ================================================

def _cmd_simplicity(cfg: ExperimentConfig, art: _Artifacts, route: str) -> None:
    spec = cfg.metric()
    _, tstep = _steps(cfg)
    rep = check_simplicity(spec, ray_count=int(cfg.get("geodesic.rays", 16)), step=tstep,
                           fan_count=int(cfg.get("geodesic.fan_count", 16)))
    payload = rep.to_dict()
    payload["metric"] = spec.describe()
    art.json("simplicity.json", payload)
    art.summary.update(simple=rep.simple, convexity_margin=rep.convexity_margin,
                       min_jacobi=rep.min_jacobi, conjugate_point=rep.conjugate_point)


def _cmd_distance_table(cfg: ExperimentConfig, art: _Artifacts, route: str) -> None:
    spec = cfg.metric()
    step, _ = _steps(cfg)
    table = distance_table(spec, int(cfg.get("geodesic.table_size", 16)), step=step)
    rho2, cov = table.to_frames()
    art.csv("rho2.csv", rho2)
    art.csv("covectors.csv", cov)
    art.summary.update(pairs=int(len(cov)), max_rho=float(np.max(table.rho)),
                       symmetry_defect=table.symmetry_defect())


def _cmd_sinogram(cfg: ExperimentConfig, art: _Artifacts, route: str) -> None:
    spec = cfg.metric()
    f = _load_field(cfg, spec, cfg.grid(spec))
    z, w = _counts(cfg)
    _, tstep = _steps(cfg)
    sino = xray_forward(spec, f, build_inflow_grid(spec, z, w), step=tstep)
    art.field("field.tt2f", f)
    art.csv("sinogram.csv", sino.to_frame())
    art.summary.update(max_abs=sino.max_abs(), l2_mu=sino.norm(), rays=z * w)


def _cmd_normal_op(cfg: ExperimentConfig, art: _Artifacts, route: str) -> None:
    if route not in _ROUTES:
        raise InputError(f"unknown normal-operator route '{route}'")
    spec = cfg.metric()
    f = _load_field(cfg, spec, cfg.grid(spec))
    z, w = _counts(cfg)
    _, tstep = _steps(cfg)
    if route == "composed":
        Nf = normal_operator(spec, f, "composed", z_count=z, w_count=w, step=tstep)
    else:
        Nf = normal_operator(spec, f, "kernel", step=tstep)
    art.field(f"normal_{route}.tt2f", Nf)
    art.csv(f"normal_{route}.csv", field_frame(Nf))
    art.summary.update(route=route, f_l2=l2_norm(spec, f), Nf_l2=l2_norm(spec, Nf), Nf_max=Nf.max_abs())


def _cmd_decompose(cfg: ExperimentConfig, art: _Artifacts, route: str) -> None:
    spec = cfg.metric()
    f = _load_field(cfg, spec, cfg.grid(spec))
    dec = decompose(spec, f, rtol=float(cfg.get("decomp.rtol", 1e-8)),
                    maxiter=int(cfg.get("decomp.maxiter", 20000)))
    payload = {
        "residual": dec.residual,
        "iterations": dec.iterations,
        "weak_divergence_residual": weak_divergence_residual(spec, dec.f_s),
        "f_l2": l2_norm(spec, f),
        "f_s_l2": l2_norm(spec, dec.f_s),
        "potential_l2": l2_norm(spec, dec.potential(spec)),
    }
    art.field("f_s.tt2f", dec.f_s)
    art.field("v.tt2f", dec.v)
    art.csv("cg_history.csv", pd.DataFrame({"iteration": np.arange(1, len(dec.history) + 1),
                                            "residual": dec.history}))
    art.json("decomposition.json", payload)
    art.summary.update(payload)


def _cmd_gauge(cfg: ExperimentConfig, art: _Artifacts, route: str) -> None:
    spec = cfg.metric()
    f = _load_field(cfg, spec, cfg.grid(spec))
    gb = gauge_normalize_boundary(spec, f)
    gg = gauge_normalize_global(spec, f)
    # 格子値どうしで比べるため閉形式 rule は外す
    z, w = _counts(cfg)
    _, tstep = _steps(cfg)
    inflow = build_inflow_grid(spec, z, w)
    s0 = xray_forward(spec, f.with_values(f.values), inflow, step=tstep)
    s1 = xray_forward(spec, gb.f_tilde, inflow, step=tstep)
    scale = max(s0.max_abs(), 1e-300)
    payload = {
        "boundary_collar_residual": gb.collar_residual,
        "boundary_sinogram_defect": (s1 - s0).max_abs() / scale,
        "global_max_fin": gg.max_fin,
        "global_band_nodes": int(np.count_nonzero(gg.band)),
    }
    art.field("f_tilde.tt2f", gb.f_tilde)
    art.field("f_sharp.tt2f", gg.f_sharp)
    art.field("v_sharp.tt2f", gg.v_sharp)
    art.json("gauge.json", payload)
    art.summary.update(payload)


def _cmd_jet_recover(cfg: ExperimentConfig, art: _Artifacts, route: str) -> None:
    g0, g1 = cfg.metric_pair()
    angles = cfg.floats("boundary.angles")
    directions = [float(v) for v in cfg.get("boundary.directions", [1.0])]
    eps = default_eps_grid(float(cfg.get("boundary.eps0", 0.32)), int(cfg.get("boundary.levels", 5)))
    _, tstep = _steps(cfg)
    scans = epsilon_scans(g0, g1, angles, directions, eps, step=tstep,
                          path_check=bool(cfg.get("boundary.path_check", False)))
    jet = jet_recover(scans, order=int(cfg.get("boundary.order", 1)),
                      convexity_floor=float(cfg.get("boundary.convexity_floor", 0.05)))

    frames = []
    for s in scans:
        df = s.to_frame()
        df.insert(0, "p", s.p)
        df.insert(0, "boundary_angle", s.x_angle)
        frames.append(df)
    art.csv("scans.csv", pd.concat(frames, ignore_index=True))

    df = jet.to_frame()
    payload: Dict[str, Any] = {"order": jet.order, "exponents": [s.leading_exponent() for s in scans]}
    if g0.is_euclidean and g1.family == "conformal" and g1.domain == g0.domain:
        oracle = conformal_jet_oracle(g1, jet.angles)
        K = min(jet.order + 1, oracle.shape[0])
        ref = np.full(jet.coeffs.shape, np.nan)
        ref[:K] = oracle[:K]
        df["oracle"] = ref.ravel()
        for k in range(K):
            denom = float(np.max(np.abs(oracle[k])))
            err = float(np.max(np.abs(jet.coeffs[k] - oracle[k]))) / denom if denom > 0 else float("nan")
            payload[f"rel_error_k{k}"] = err
            art.summary[f"rel_error_k{k}"] = err
    art.csv("jet.csv", df, header=jet.metadata())
    art.json("jet.json", payload)
    art.summary.update(order=jet.order, angles=len(jet.angles), scans=len(scans))


def _cmd_linearize(cfg: ExperimentConfig, art: _Artifacts, route: str) -> None:
    spec = cfg.metric()
    bumps = cfg.bumps("boundary.bumps")
    z, w = _counts(cfg)
    _, tstep = _steps(cfg)
    inflow = build_inflow_grid(spec, z, w)
    table = linearize_distance(spec, bumps, inflow, step=tstep)
    scaling, slope = remainder_scaling(spec, bumps, inflow,
                                       [float(e) for e in cfg.get("boundary.eps_scaling", (0.01, 0.02, 0.04, 0.08))],
                                       step=tstep)
    payload = {
        "max_residual": table.max_residual(),
        "bound_ratio": table.bound_ratio(),
        "f_c1": table.f_c1,
        "remainder_slope": slope,
    }
    art.csv("linearization.csv", table.frame)
    art.csv("remainder_scaling.csv", scaling)
    art.json("linearization.json", payload)
    art.summary.update(payload)


def _cmd_invert(cfg: ExperimentConfig, art: _Artifacts, route: str) -> None:
    spec = cfg.metric()
    grid = cfg.grid(spec)
    truth = _load_field(cfg, spec, grid)
    z, w = _counts(cfg)
    _, tstep = _steps(cfg)
    # 格子値の順変換で作ったデータ（再構成と同じ離散作用素）
    data = normal_composed(spec, truth.with_values(truth.values), z, w, tstep)
    kw = dict(maxiter=int(cfg.get("inversion.maxiter", 500)), truth=truth,
              z_count=z, w_count=w, step=tstep, tol=float(cfg.get("inversion.tol", 1e-6)))
    reg = cfg.get("inversion.reg", 1e-4)
    if isinstance(reg, str):
        if reg != "auto":
            raise ConfigError(f"inversion.reg must be a number or 'auto', got '{reg}'",
                              key="inversion.reg", line=cfg.lines.get("inversion.reg"))
        reg, lcurve = select_regularization(spec, data, **kw)
        art.csv("lcurve.csv", lcurve)
    rep = reconstruct_solenoidal(spec, data, reg=float(reg), **kw)
    art.field("f_hat.tt2f", rep.f_hat)
    art.csv("history.csv", pd.DataFrame({"iteration": np.arange(1, len(rep.history) + 1),
                                         "discrepancy": rep.history}))
    payload = rep.to_dict()
    sizes = cfg.get("inversion.sizes")
    if sizes:
        stair = convergence_staircase(spec, [int(n) for n in sizes], seed=cfg.seed, reg=float(reg),
                                      maxiter=kw["maxiter"], step=tstep)
        art.csv("staircase.csv", stair)
        errs = stair["rel_error"].to_numpy(dtype=float)
        payload["staircase_decreasing"] = bool(np.all(np.diff(errs) < 0))
    art.json("report.json", payload)
    art.summary.update(rel_error=rep.rel_error, iterations=rep.iterations, reg=float(reg),
                       converged=rep.converged, stagnated=rep.stagnated)


def _cmd_stability(cfg: ExperimentConfig, art: _Artifacts, route: str) -> None:
    spec = cfg.metric()
    z, w = _counts(cfg)
    _, tstep = _steps(cfg)
    kw: Dict[str, Any] = {}
    if cfg.get("inversion.bumps") is not None:
        kw["bumps"] = cfg.bumps("inversion.bumps")
    sweep = stability_ratio_sweep(
        spec,
        trials=int(cfg.get("inversion.trials", 50)),
        seed=cfg.seed,
        eps=float(cfg.get("inversion.perturbation", 0.02)),
        grid=cfg.grid(spec),
        z_count=z, w_count=w, step=tstep, **kw,
    )
    payload = {"metrics": sweep.summary(), "perturbation_factor": sweep.perturbation_factor()}
    art.csv("stability.csv", sweep.table)
    art.json("stability.json", payload)
    base = next(iter(payload["metrics"].values()))
    art.summary.update(max_over_median=base["max_over_median"],
                       perturbation_factor=payload["perturbation_factor"])


def _cmd_holder(cfg: ExperimentConfig, art: _Artifacts, route: str) -> None:
    spec = cfg.metric()
    step, _ = _steps(cfg)
    kw: Dict[str, Any] = {}
    if cfg.get("holder.bumps") is not None:
        kw["bumps"] = cfg.bumps("holder.bumps")
    if cfg.get("holder.amplitudes") is not None:
        kw["amplitudes"] = cfg.floats("holder.amplitudes")
    fit = holder_fit(spec, m=int(cfg.get("holder.table_size", 16)), step=step, **kw)
    payload = {"exponent": fit.exponent, "delta_monotone": fit.delta_monotone, "caveat": _HOLDER_CAVEAT}
    art.csv("holder.csv", fit.table)
    art.json("holder.json", payload)
    art.summary.update(exponent=fit.exponent, delta_monotone=fit.delta_monotone)


SUBCOMMANDS: Dict[str, Callable[[ExperimentConfig, _Artifacts, str], None]] = {
    "simplicity-check": _cmd_simplicity,
    "distance-table": _cmd_distance_table,
    "sinogram": _cmd_sinogram,
    "normal-op": _cmd_normal_op,
    "decompose": _cmd_decompose,
    "gauge-normalize": _cmd_gauge,
    "jet-recover": _cmd_jet_recover,
    "linearize": _cmd_linearize,
    "invert": _cmd_invert,
    "stability-sweep": _cmd_stability,
    "holder-fit": _cmd_holder,
}


# ================================================
# 実行
# ================================================

def _output_dir(cfg: ExperimentConfig, subcommand: str, out: Optional["str | Path"]) -> Path:
    base = out or os.environ.get(_ENV_OUT) or cfg.get("output.dir") or _DEFAULT_OUT
    return Path(base) / cfg.scenario / subcommand


def run(
    subcommand: str,
    config_path: "str | Path",
    out: Optional["str | Path"] = None,
    seed: Optional[int] = None,
    route: str = "composed",
    defaults_path: Optional["str | Path"] = "configs/defaults.yaml",
) -> Path:
    """サブコマンドを 1 つ実行し、成果物ディレクトリを返す。"""
    if subcommand not in SUBCOMMANDS:
        raise InputError(f"unknown subcommand '{subcommand}'")
    cfg = load_config(config_path, defaults_path=defaults_path, seed=seed)
    art = _Artifacts(_output_dir(cfg, subcommand, out))
    logger.info("[%s] %s: start (seed=%d)", cfg.scenario, subcommand, cfg.seed)
    try:
        SUBCOMMANDS[subcommand](cfg, art, route)
    except TomoError as e:
        e.scenario = cfg.scenario
        raise
    art.text("config.resolved.yaml", cfg.dump())
    art.text("summary.txt", _summary_text(cfg, subcommand, art))
    logger.info("[%s] %s: %d files in %s", cfg.scenario, subcommand, len(art.written), art.out_dir)
    return art.out_dir


def _configure_logging(quiet: bool) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(logging.WARNING if quiet else logging.INFO)


def _build_parser():
    import argparse

    p = argparse.ArgumentParser(
        prog="python -m src.experiments.runner",
        description="Run a tensor-tomography experiment scenario from a YAML config.",
    )
    p.add_argument("subcommand", choices=sorted(SUBCOMMANDS))
    p.add_argument("--config", required=True, help="シナリオ YAML のパス")
    p.add_argument("--out", default=None, help=f"出力ディレクトリ（{_ENV_OUT} より優先）")
    p.add_argument("--seed", type=int, default=None, help="乱数シード（設定の seed を上書き）")
    p.add_argument("--route", choices=_ROUTES, default="composed", help="normal-op の計算経路")
    p.add_argument("--quiet", action="store_true", help="WARNING 以上のログのみ表示")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    _configure_logging(args.quiet)
    try:
        out_dir = run(args.subcommand, args.config, args.out, args.seed, args.route)
    except ConfigError as e:
        print(f"[config] ConfigError: {e}", file=sys.stderr)
        return 1
    except TomoError as e:
        scenario = getattr(e, "scenario", Path(args.config).stem)
        print(f"[{scenario}] {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    print(f"評価結果を {out_dir} に保存しました。")
    return 0


if __name__ == "__main__":
    sys.exit(main())
