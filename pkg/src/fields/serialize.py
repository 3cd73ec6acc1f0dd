# -*- coding: utf-8 -*-
"""
src/fields/serialize.py

場の入出力。

TT2F バイナリ（リトルエンディアン）
    magic   b"TT2F"
    header  <u4 version, u4 kind, u4 N, u4 support, u4 contravariant>
            <f8 cx, f8 cy, f8 radius, f8 outer_radius>
    body    <f8 × N·N·ncomp>（values[i, j, c] の行優先）

kind: 0 = scalar, 1 = 1-form, 2 = symmetric 2-tensor
CSV: node, i, j, x, y, 成分列
"""
from __future__ import annotations

import struct
from pathlib import Path
from typing import Dict, Type

import numpy as np
import pandas as pd

from src.errors import InputError
from src.fields.tensorfield import Grid, OneFormField, ScalarField, SymTensor2Field, _Field
from src.geometry.metric import DiskDomain

MAGIC = b"TT2F"
_VERSION = 1
_HEADER = struct.Struct("<5I4d")

_KINDS: Dict[int, Type[_Field]] = {0: ScalarField, 1: OneFormField, 2: SymTensor2Field}
_COLUMNS = {0: ["f"], 1: ["v_1", "v_2"], 2: ["f_11", "f_12", "f_22"]}
_SUPPORTS = ("inner", "outer")


def _kind_of(field: _Field) -> int:
    for k, cls in _KINDS.items():
        if type(field) is cls:
            return k
    raise InputError(f"unsupported field type {type(field).__name__}")


def to_bytes(field: _Field) -> bytes:
    kind = _kind_of(field)
    dom = field.grid.domain
    contra = int(getattr(field, "contravariant", False))
    head = _HEADER.pack(_VERSION, kind, field.grid.N, _SUPPORTS.index(field.support), contra,
                        dom.center[0], dom.center[1], dom.radius, dom.outer_radius)
    return MAGIC + head + np.ascontiguousarray(field.values, dtype="<f8").tobytes()


def from_bytes(data: bytes) -> _Field:
    if data[:4] != MAGIC:
        raise InputError("not a TT2F file (bad magic bytes)")
    version, kind, N, support, contra, cx, cy, R, R1 = _HEADER.unpack_from(data, 4)
    if version != _VERSION or kind not in _KINDS:
        raise InputError(f"unsupported TT2F header (version={version}, kind={kind})")
    cls = _KINDS[kind]
    body = np.frombuffer(data, dtype="<f8", offset=4 + _HEADER.size)
    if body.size != N * N * cls.ncomp:
        raise InputError("TT2F body size does not match header")
    grid = Grid(N, DiskDomain((cx, cy), R, R1))
    kw = {"contravariant": bool(contra)} if cls is SymTensor2Field else {}
    return cls(grid, body.reshape(N, N, cls.ncomp).copy(), _SUPPORTS[support], **kw)


def write_field(field: _Field, path: "str | Path") -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_bytes(to_bytes(field))
    return p


def read_field(path: "str | Path") -> _Field:
    p = Path(path)
    if p.suffix.lower() == ".csv":
        return read_field_csv(p)
    return from_bytes(p.read_bytes())


def field_frame(field: _Field) -> pd.DataFrame:
    g = field.grid
    ii, jj = np.meshgrid(np.arange(g.N), np.arange(g.N), indexing="ij")
    df = pd.DataFrame({
        "node": np.arange(g.N * g.N),
        "i": ii.ravel(),
        "j": jj.ravel(),
        "x": g.points[..., 0].ravel(),
        "y": g.points[..., 1].ravel(),
    })
    for c, name in enumerate(_COLUMNS[_kind_of(field)]):
        df[name] = field.values[..., c].ravel()
    return df


def write_field_csv(field: _Field, path: "str | Path") -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    field_frame(field).to_csv(p, index=False, encoding="utf-8", lineterminator="\n")
    return p


def read_field_csv(path: "str | Path", domain: DiskDomain = DiskDomain(), support: str = "inner") -> _Field:
    df = pd.read_csv(path, encoding="utf-8")
    N = int(round(np.sqrt(len(df))))
    if N * N != len(df):
        raise InputError("field CSV does not hold a square grid")
    for kind in (2, 1, 0):
        cols = _COLUMNS[kind]
        if all(c in df.columns for c in cols):
            cls = _KINDS[kind]
            vals = df.sort_values("node")[cols].to_numpy().reshape(N, N, len(cols))
            return cls(Grid(N, domain), vals, support)
    raise InputError("field CSV has no recognised component columns")
