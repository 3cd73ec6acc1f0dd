# -*- coding: utf-8 -*-
"""
tests/conftest.py

共通の計量・格子と hypothesis のプロファイル。
"""
from __future__ import annotations

import hypothesis
import numpy as np
import pytest

from src.fields.tensorfield import Grid
from src.geometry.metric import conformal, euclidean

np.seterr(all="warn")

hypothesis.settings.register_profile("fast", max_examples=25, deadline=None)
hypothesis.settings.load_profile("fast")

# φ = 0.05·exp(−4|x|²)（単純な共形計量）
CONFORMAL_SMALL = ((0.05, 4.0, 0.0, 0.0),)
# φ = 0.2·exp(−|x − c|²), c = (0.3, 0.1)
CONFORMAL_PAIR = ((0.2, 1.0, 0.3, 0.1),)


@pytest.fixture(scope="session")
def flat():
    return euclidean()


@pytest.fixture(scope="session")
def conf():
    return conformal(CONFORMAL_SMALL, tag="conformal_small")


@pytest.fixture(scope="session")
def conf_pair():
    return conformal(CONFORMAL_PAIR, tag="conformal_pair")


@pytest.fixture(scope="session")
def grid16(flat):
    return Grid(16, flat.domain)


@pytest.fixture(scope="session")
def grid32(flat):
    return Grid(32, flat.domain)
