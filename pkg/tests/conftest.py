from __future__ import annotations

import numpy as np
import pytest

from misspec_lab.core.rng import stream
from misspec_lab.core.types import FeatureMatrix


def unit_rows(rng: np.random.Generator, k: int, d: int) -> FeatureMatrix:
    X = rng.standard_normal((k, d))
    return FeatureMatrix(entries=X / np.linalg.norm(X, axis=1, keepdims=True))


@pytest.fixture
def rng() -> np.random.Generator:
    return stream(1234, 0)


@pytest.fixture
def phi_small(rng) -> FeatureMatrix:
    return unit_rows(rng, 40, 4)


@pytest.fixture(autouse=True)
def _isolated_out_root(tmp_path, monkeypatch):
    monkeypatch.setenv("MISSPEC_LAB_OUT", str(tmp_path / "runs"))


@pytest.fixture
def make_phi():
    return unit_rows
