from __future__ import annotations

import logging

import numpy as np

from misspec_lab.core.errors import PreconditionError

logger = logging.getLogger(__name__)


class QueryEnvironment:
    """
    Noiseless oracle over a hidden reward vector μ.

    ``probe(i)`` returns μ_i exactly. Only the first probe of an index counts
    toward ``query_count``; every call is still appended to ``query_log``.
    One learner owns an environment at a time.
    """

    def __init__(self, mu: np.ndarray, max_queries: int | None = None):
        self._mu = np.asarray(mu, dtype=float).copy()
        if self._mu.ndim != 1 or self._mu.size == 0:
            raise PreconditionError("mu must be a non-empty vector")
        self.max_queries = max_queries
        self.query_log: list[tuple[int, float]] = []
        self._queried: set[int] = set()

    @property
    def k(self) -> int:
        return int(self._mu.size)

    @property
    def query_count(self) -> int:
        return len(self._queried)

    @property
    def queried(self) -> frozenset[int]:
        return frozenset(self._queried)

    def probe(self, i: int) -> float:
        i = int(i)
        if not 0 <= i < self.k:
            raise PreconditionError(f"probe index {i} out of range [0, {self.k})")
        if i not in self._queried:
            if self.max_queries is not None and self.query_count >= self.max_queries:
                raise PreconditionError(f"query budget of {self.max_queries} exhausted")
            self._queried.add(i)
        value = float(self._mu[i])
        self.query_log.append((i, value))
        return value

    def reveal(self) -> np.ndarray:
        """The hidden vector, for scoring after the game. Not a query."""
        return self._mu.copy()
