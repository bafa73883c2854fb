from __future__ import annotations

import re
from pathlib import Path

import numpy as np
import pandas as pd

from misspec_lab.core.errors import PreconditionError
from misspec_lab.core.types import FeatureMatrix

_HEADER = re.compile(r"^\s*d\s*=\s*(\d+)\s+k\s*=\s*(\d+)\s*$")


def write_feature_csv(path: str | Path, phi: FeatureMatrix, mu: np.ndarray | None = None) -> None:
    """Header ``d=<d> k=<k>``, then one row per action: d features and an optional mu column."""
    frame = pd.DataFrame(phi.entries)
    if mu is not None:
        mu = np.asarray(mu, dtype=float)
        if mu.shape != (phi.k,):
            raise PreconditionError(f"mu must have length {phi.k}")
        frame[phi.d] = mu
    with open(path, "w", newline="") as f:
        f.write(f"d={phi.d} k={phi.k}\n")
        frame.to_csv(f, header=False, index=False, float_format="%.17g")


def read_feature_csv(
    path: str | Path, validate: bool = True
) -> tuple[FeatureMatrix, np.ndarray | None]:
    """
    Inverse of write_feature_csv. With ``validate=False`` the rows skip the
    spanning check, which near-orthogonal instances with k < d would fail.
    """
    path = Path(path)
    with open(path) as f:
        header = f.readline()
    m = _HEADER.match(header)
    if m is None:
        raise PreconditionError(f"{path}: first line must read 'd=<d> k=<k>', got {header.strip()!r}")
    d, k = int(m.group(1)), int(m.group(2))
    try:
        frame = pd.read_csv(path, skiprows=1, header=None, dtype=float, float_precision="round_trip")
    except pd.errors.EmptyDataError:
        frame = pd.DataFrame()
    data = frame.to_numpy()
    if data.shape[0] != k or data.shape[1] not in (d, d + 1):
        raise PreconditionError(
            f"{path}: expected {k} rows of {d} or {d + 1} columns, got shape {data.shape}"
        )
    mu = data[:, d].copy() if data.shape[1] == d + 1 else None
    X = np.ascontiguousarray(data[:, :d])
    phi = FeatureMatrix(entries=X) if validate else FeatureMatrix.unchecked(X)
    return phi, mu
