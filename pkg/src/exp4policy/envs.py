"""Environments: the log-normal synthetic design and CSV-backed tables.

Every environment is materialised as a :class:`TabularEnvironment`: a fixed
sequence of covariates and full potential-outcome vectors in arrival order.
Algorithms only ever read the outcome of the arm they pulled.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import AssumptionViolation, DimensionError, Expert, ExpertRoster

STREAMS = {"covariates": 0, "noise": 1, "policy": 2}


def derive_seed(base_seed: int, replication: int, stream: str) -> int:
    """Integer seed for one named stream of one replication."""
    ss = np.random.SeedSequence([int(base_seed), int(replication), STREAMS[stream]])
    hi, lo = ss.generate_state(2, dtype=np.uint32)
    return (int(hi) << 32) | int(lo)


@dataclass(frozen=True)
class TabularEnvironment:
    X: np.ndarray
    Y: np.ndarray
    M: Optional[float] = None
    shift: float = 0.0
    simulator: bool = True

    def __post_init__(self):
        X = np.atleast_2d(np.array(self.X, dtype=float))
        Y = np.atleast_2d(np.array(self.Y, dtype=float))
        if X.shape[0] != Y.shape[0]:
            raise ValueError("covariate and outcome tables differ in length")
        if not np.all(np.isfinite(X)) or not np.all(np.isfinite(Y)):
            raise ValueError("environment tables must be finite")
        neg = np.flatnonzero((Y < 0).any(axis=1))
        if neg.size:
            raise AssumptionViolation("negative potential outcome", period=int(neg[0]) + 1)
        if self.M is not None:
            if not self.M > 0:
                raise ValueError("outcome cap M must be positive")
            over = np.flatnonzero((Y > self.M).any(axis=1))
            if over.size:
                raise AssumptionViolation(f"potential outcome exceeds M={self.M}", period=int(over[0]) + 1)
        X.setflags(write=False)
        Y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def T(self) -> int:
        return self.X.shape[0]

    @property
    def J(self) -> int:
        return self.X.shape[1]

    @property
    def K(self) -> int:
        return self.Y.shape[1]

    def with_cap(self, M: float) -> "TabularEnvironment":
        return TabularEnvironment(self.X, self.Y, M, self.shift, self.simulator)

    def head(self, n: int) -> "TabularEnvironment":
        return TabularEnvironment(self.X[:n], self.Y[:n], self.M, self.shift, self.simulator)


# --------------------------------------------------------- log-normal design


@dataclass(frozen=True)
class LogNormalDesign:
    """Two uniform covariates and log-normal potential outcomes.

    ``covariate_seed`` fixes the covariate sequence across replications; with
    ``None`` each replication draws fresh covariates.
    """

    sigma: float
    n_periods: int
    covariate_seed: Optional[int] = None
    normalization_cap: Optional[float] = None

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if self.n_periods < 1:
            raise ValueError("n_periods must be positive")

    J = 2
    K = 2

    def covariate_rng(self, base_seed: int, replication: int) -> np.random.Generator:
        if self.covariate_seed is not None:
            return np.random.default_rng(derive_seed(self.covariate_seed, 0, "covariates"))
        return np.random.default_rng(derive_seed(base_seed, replication, "covariates"))

    def noise_rng(self, base_seed: int, replication: int) -> np.random.Generator:
        return np.random.default_rng(derive_seed(base_seed, replication, "noise"))

    def generate(self, base_seed: int, replication: int, M: Optional[float] = None) -> TabularEnvironment:
        X, Y = draw_lognormal(
            self, self.covariate_rng(base_seed, replication), self.noise_rng(base_seed, replication), self.n_periods
        )
        return TabularEnvironment(X, Y, M if M is not None else self.normalization_cap)

    @staticmethod
    def conditional_means(X) -> np.ndarray:
        """``E[y | x]`` per arm: control 1, treated ``exp(x1 - x2)``, for any sigma."""
        X = np.atleast_2d(X)
        return np.column_stack([np.ones(X.shape[0]), np.exp(X[:, 0] - X[:, 1])])

    def mean_welfare(self, expert: Expert, n_mc: int = 10**6, seed: int = 0):
        """Monte Carlo ``E_P[f(x)' y]`` and its standard error.

        The shocks are integrated out exactly via :meth:`conditional_means`,
        so only the covariates are sampled.
        """
        X = np.random.default_rng(seed).random((n_mc, 2))
        vals = ExpertRoster([expert], self.K).matrices(X)[:, 0, :]
        w = (vals * self.conditional_means(X)).sum(axis=1)
        return float(w.mean()), float(w.std(ddof=1) / math.sqrt(n_mc))

    @staticmethod
    def first_best_welfare() -> float:
        """Closed form of ``E[max(exp(x1 - x2), 1)]`` for uniform covariates."""
        return math.e - 1.5


def draw_lognormal(design: LogNormalDesign, cov_rng: np.random.Generator, noise_rng: np.random.Generator, size=None):
    """Covariates and potential outcomes ``(y_control, y_treated)``.

    Returns a single ``(x, y)`` pair when ``size`` is None, otherwise arrays of
    shape ``(size, 2)``.
    """
    n = 1 if size is None else int(size)
    s = design.sigma
    x = cov_rng.random((n, 2))
    u = noise_rng.normal(0.0, s, (n, 2)) if s > 0 else np.zeros((n, 2))
    y_treated = np.exp(x[:, 0] - x[:, 1] + u[:, 0] - s * s / 2)
    y_control = np.exp(u[:, 1] - s * s / 2)
    y = np.column_stack([y_control, y_treated])
    if size is None:
        return x[0], y[0]
    return x, y


def oracle_cap(environments: Iterable[TabularEnvironment]) -> float:
    """Largest potential outcome across all given environments."""
    return max(float(env.Y.max()) for env in environments)


def difficulty(sigma: float, n_mc: int = 10**6, seed: int = 0):
    """Probability that the sign of the individual effect disagrees with ``x1 - x2``.

    Returns ``(estimate, standard_error)``.  Signs are compared on the log
    scale, where ``y1 - y0`` and ``log y1 - log y0`` share a sign.
    """
    if n_mc < 10**5:
        raise ValueError("difficulty needs at least 1e5 Monte Carlo draws")
    rng = np.random.default_rng(seed)
    x = rng.random((n_mc, 2))
    u = rng.normal(0.0, sigma, (n_mc, 2)) if sigma > 0 else np.zeros((n_mc, 2))
    index = x[:, 0] - x[:, 1]
    effect = index + u[:, 0] - u[:, 1]
    miss = np.sign(effect) != np.sign(index)
    p = float(miss.mean())
    return p, math.sqrt(p * (1 - p) / n_mc)


# ------------------------------------------------------------------ CSV


def load_tabular(
    path,
    shift: float = 0.0,
    M: Optional[float] = None,
    J: Optional[int] = None,
    K: Optional[int] = None,
    simulator: bool = True,
) -> TabularEnvironment:
    """Read a ``x1..xJ, y1..yK`` CSV in file order, shifting every outcome.

    With ``M=None`` the cap is set to the largest shifted outcome.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        xcols = _numbered(header, "x")
        ycols = _numbered(header, "y")
        if J is not None and len(xcols) != J:
            raise DimensionError(f"{path}: covariate columns", J, len(xcols))
        if K is not None and len(ycols) != K:
            raise DimensionError(f"{path}: outcome columns", K, len(ycols))
        if not xcols or len(ycols) < 2:
            raise ValueError(f"{path}: need columns x1..xJ and y1..yK with K >= 2")
        X, Y = [], []
        for rownum, row in enumerate(reader, start=1):
            if not row:
                continue
            try:
                X.append([float(row[i]) for i in xcols])
                Y.append([float(row[i]) + shift for i in ycols])
            except (ValueError, IndexError) as exc:
                raise ValueError(f"{path}: row {rownum}: non-numeric or missing cell ({exc})") from None
            if min(Y[-1]) < 0:
                raise AssumptionViolation(f"{path}: row {rownum}: outcome below zero after shift {shift}")
            if M is not None and max(Y[-1]) > M:
                raise AssumptionViolation(f"{path}: row {rownum}: outcome exceeds M={M}")
    if not X:
        raise ValueError(f"{path}: no data rows")
    Y = np.array(Y)
    cap = float(Y.max()) if M is None else M
    return TabularEnvironment(np.array(X), Y, cap, shift, simulator)


def _numbered(header: Sequence[str], prefix: str):
    cols = {}
    for i, h in enumerate(header):
        if h.startswith(prefix) and h[len(prefix):].isdigit():
            cols[int(h[len(prefix):])] = i
    if sorted(cols) != list(range(1, len(cols) + 1)):
        raise ValueError(f"columns {prefix}1..{prefix}n must be contiguous, found {sorted(cols)}")
    return [cols[k] for k in sorted(cols)]
