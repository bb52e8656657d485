"""Shared domain types: experts, expert rosters, trajectories and errors.

Arms are 1-indexed wherever they cross a public interface (expert tables,
``Trajectory.arms``, function arguments named ``arm``) and 0-indexed inside
array computations.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator, Mapping, Optional, Sequence

import numpy as np

PROB_TOL = 1e-12


class Exp4Error(Exception):
    """Base class for errors raised by this package."""


class DimensionError(Exp4Error, ValueError):
    def __init__(self, what: str, expected: int, actual: int):
        self.expected = expected
        self.actual = actual
        super().__init__(f"{what}: expected dimension {expected}, got {actual}")


class AssumptionViolation(Exp4Error, ValueError):
    """Outcome outside ``[0, M]`` or another modelling assumption broken."""

    def __init__(self, message: str, period: Optional[int] = None):
        self.period = period
        super().__init__(message if period is None else f"period {period}: {message}")


class MissingCounterfactuals(Exp4Error, ValueError):
    pass


def as_covariates(x, J: Optional[int] = None) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if J is not None and x.shape[0] != J:
        raise DimensionError("covariate vector", J, x.shape[0])
    if not np.all(np.isfinite(x)):
        raise ValueError("covariates must be finite")
    return x


def augment(X) -> np.ndarray:
    """Rows ``(1, x')`` for a covariate matrix (or a single vector)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.hstack([np.ones((X.shape[0], 1)), X])


def point_mass(arm: int, K: int) -> np.ndarray:
    if not 1 <= arm <= K:
        raise ValueError(f"arm {arm} outside 1..{K}")
    out = np.zeros(K)
    out[arm - 1] = 1.0
    return out


# ---------------------------------------------------------------- experts


class Expert:
    """A time-invariant map from covariates to a distribution over arms."""

    deterministic = False

    def recommend(self, x: np.ndarray, K: int) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class LesRule(Expert):
    """Linear eligibility score rule: treat (arm 2) iff ``(1, x') beta >= 0``."""

    coefficients: np.ndarray
    deterministic = True

    def __post_init__(self):
        beta = np.array(self.coefficients, dtype=float).reshape(-1)
        if beta.size < 2 or not np.all(np.isfinite(beta)):
            raise ValueError("LES coefficients must be a finite vector of length J+1 >= 2")
        beta.setflags(write=False)
        object.__setattr__(self, "coefficients", beta)

    @property
    def J(self) -> int:
        return self.coefficients.size - 1

    def arm(self, x) -> int:
        x = as_covariates(x, self.J)
        return 2 if self.coefficients[0] + x @ self.coefficients[1:] >= 0 else 1

    def recommend(self, x, K=2):
        if K != 2:
            raise DimensionError("LES rules are defined for two arms", 2, K)
        return point_mass(self.arm(x), 2)

    def __eq__(self, other):
        return isinstance(other, LesRule) and np.array_equal(self.coefficients, other.coefficients)

    def __hash__(self):
        return hash(self.coefficients.tobytes())


@dataclass(frozen=True)
class UniformRandom(Expert):
    def recommend(self, x, K):
        return np.full(K, 1.0 / K)


@dataclass(frozen=True)
class TableExpert(Expert):
    """Lookup table from a covariate key (tuple of values) to a 1-indexed arm."""

    table: Mapping[tuple, int]
    default: Optional[int] = None
    deterministic = True

    def arm(self, x) -> int:
        key = tuple(float(v) for v in np.asarray(x, dtype=float).reshape(-1))
        arm = self.table.get(key, self.default)
        if arm is None:
            raise KeyError(f"no table entry for covariates {key}")
        return arm

    def recommend(self, x, K):
        return point_mass(self.arm(x), K)


@dataclass(frozen=True)
class CustomExpert(Expert):
    fn: Callable[[np.ndarray, int], Sequence[float]]
    name: str = "custom"
    deterministic: bool = False

    def recommend(self, x, K):
        return np.asarray(self.fn(x, K), dtype=float)


def validate_recommendation(probs, K: int) -> np.ndarray:
    probs = np.asarray(probs, dtype=float)
    if probs.shape != (K,):
        raise DimensionError("recommendation", K, probs.size)
    if np.any(probs < 0) or abs(probs.sum() - 1.0) > PROB_TOL:
        raise ValueError(f"recommendation {probs} is not a probability vector")
    return probs


def recommend(expert: Expert, x, K: int) -> np.ndarray:
    """Validated recommendation of ``expert`` for covariates ``x``."""
    x = as_covariates(x)
    return validate_recommendation(expert.recommend(x, K), K)


@dataclass(frozen=True)
class FiniteClass:
    experts: tuple

    def __post_init__(self):
        if len(self.experts) < 1:
            raise ValueError("a finite expert class needs at least one expert")

    @property
    def N(self) -> int:
        return len(self.experts)


@dataclass(frozen=True)
class LesClass:
    J: int

    def __post_init__(self):
        if self.J < 1:
            raise ValueError("LES class needs J >= 1")

    @property
    def vc_dimension(self) -> int:
        return self.J + 1


class ExpertRoster:
    """A fixed, ordered list of experts evaluated together.

    LES rules are stacked into one coefficient matrix so that a roster of tens
    of thousands of coarsened rules is evaluated with a single product.
    """

    def __init__(self, experts: Sequence[Expert], K: int):
        self.experts = list(experts)
        if not self.experts:
            raise ValueError("empty expert roster")
        self.K = K
        les = [i for i, e in enumerate(self.experts) if isinstance(e, LesRule)]
        self._les_idx = np.array(les, dtype=int)
        if les:
            if K != 2:
                raise DimensionError("LES rules are defined for two arms", 2, K)
            dims = {self.experts[i].coefficients.size for i in les}
            if len(dims) != 1:
                raise ValueError("LES experts with different covariate dimensions")
            self._les_coef = np.vstack([self.experts[i].coefficients for i in les])
        self._uniform_idx = np.array(
            [i for i, e in enumerate(self.experts) if isinstance(e, UniformRandom)], dtype=int
        )
        handled = set(les) | set(self._uniform_idx.tolist())
        self._other_idx = [i for i in range(len(self.experts)) if i not in handled]

    def __len__(self):
        return len(self.experts)

    @property
    def has_uniform(self) -> bool:
        return self._uniform_idx.size > 0

    def matrix(self, x) -> np.ndarray:
        """Recommendations for one covariate vector, shape ``(N, K)``."""
        x = as_covariates(x)
        out = np.empty((len(self.experts), self.K))
        if self._les_idx.size:
            if self._les_coef.shape[1] != x.size + 1:
                raise DimensionError("covariate vector", self._les_coef.shape[1] - 1, x.size)
            treated = self._les_coef[:, 0] + self._les_coef[:, 1:] @ x >= 0
            out[self._les_idx, 1] = treated
            out[self._les_idx, 0] = ~treated
        if self._uniform_idx.size:
            out[self._uniform_idx] = 1.0 / self.K
        for i in self._other_idx:
            out[i] = validate_recommendation(self.experts[i].recommend(x, self.K), self.K)
        return out

    def matrices(self, X) -> np.ndarray:
        """Recommendations for a covariate matrix, shape ``(T, N, K)``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.empty((X.shape[0], len(self.experts), self.K))
        if self._les_idx.size:
            if self._les_coef.shape[1] != X.shape[1] + 1:
                raise DimensionError("covariate vector", self._les_coef.shape[1] - 1, X.shape[1])
            treated = self._les_coef[:, 0] + X @ self._les_coef[:, 1:].T >= 0
            out[:, self._les_idx, 1] = treated
            out[:, self._les_idx, 0] = ~treated
        if self._uniform_idx.size:
            out[:, self._uniform_idx] = 1.0 / self.K
        for i in self._other_idx:
            for t, x in enumerate(X):
                out[t, i] = validate_recommendation(self.experts[i].recommend(x, self.K), self.K)
        return out

    def welfare(self, X, Y) -> np.ndarray:
        """Empirical welfare ``sum_t f(x_t)' y_t`` of every expert."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        total = np.zeros(len(self.experts))
        if self._les_idx.size:
            treated = self._les_coef[:, 0] + X @ self._les_coef[:, 1:].T >= 0  # (T, N_les)
            total[self._les_idx] = Y[:, 0].sum() + (Y[:, 1] - Y[:, 0]) @ treated
        if self._uniform_idx.size:
            total[self._uniform_idx] = Y.sum() / self.K
        for i in self._other_idx:
            total[i] = sum(
                validate_recommendation(self.experts[i].recommend(x, self.K), self.K) @ y
                for x, y in zip(X, Y)
            )
        return total


# ------------------------------------------------------------- trajectory


def _readonly(a, dtype=float):
    if a is None:
        return None
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PeriodRecord:
    t: int
    x: np.ndarray
    p: np.ndarray
    arm: int
    realized: float
    counterfactuals: Optional[np.ndarray]


@dataclass(frozen=True)
class Trajectory:
    """Per-period record of one run; arms are stored 1-indexed.

    ``counterfactuals`` holds all potential outcomes and is only present for
    simulated environments.  ``seed`` is the arm-sampling stream seed, from
    which the arm sequence can be replayed given ``p``.
    """

    x: np.ndarray
    p: np.ndarray
    arms: np.ndarray
    realized: np.ndarray
    counterfactuals: Optional[np.ndarray] = None
    phase_boundary: Optional[int] = None
    seed: Optional[int] = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "x", _readonly(np.atleast_2d(self.x)))
        object.__setattr__(self, "p", _readonly(np.atleast_2d(self.p)))
        object.__setattr__(self, "arms", _readonly(self.arms, dtype=np.int64))
        object.__setattr__(self, "realized", _readonly(self.realized))
        object.__setattr__(self, "counterfactuals", _readonly(self.counterfactuals))
        T, K = self.p.shape
        if self.x.shape[0] != T or self.arms.shape != (T,) or self.realized.shape != (T,):
            raise ValueError("trajectory arrays have inconsistent lengths")
        if T and (self.arms.min() < 1 or self.arms.max() > K):
            raise ValueError("arms must lie in 1..K")
        if T and (self.p.min() < 0 or np.abs(self.p.sum(axis=1) - 1).max() > 1e-9):
            raise ValueError("policy rows must be non-negative and sum to 1")
        if self.counterfactuals is not None:
            if self.counterfactuals.shape != (T, K):
                raise DimensionError("counterfactual outcomes", K, self.counterfactuals.shape[-1])
            if not np.array_equal(self.counterfactuals[np.arange(T), self.arms - 1], self.realized):
                raise ValueError("realized outcomes disagree with counterfactuals")
        if self.phase_boundary is not None and not 0 <= self.phase_boundary <= T:
            raise ValueError("phase boundary outside the trajectory")

    @property
    def T(self) -> int:
        return self.p.shape[0]

    @property
    def K(self) -> int:
        return self.p.shape[1]

    @property
    def J(self) -> int:
        return self.x.shape[1]

    @property
    def has_counterfactuals(self) -> bool:
        return self.counterfactuals is not None

    def periods(self) -> Iterator[PeriodRecord]:
        cf = self.counterfactuals
        for i in range(self.T):
            yield PeriodRecord(
                t=i + 1,
                x=self.x[i],
                p=self.p[i],
                arm=int(self.arms[i]),
                realized=float(self.realized[i]),
                counterfactuals=None if cf is None else cf[i],
            )

    def slice(self, start: int, stop: int) -> "Trajectory":
        """Periods ``start+1 .. stop`` (0-based half-open slice)."""
        cf = None if self.counterfactuals is None else self.counterfactuals[start:stop]
        return Trajectory(
            self.x[start:stop],
            self.p[start:stop],
            self.arms[start:stop],
            self.realized[start:stop],
            cf,
            None,
            None,
            dict(self.meta),
        )
