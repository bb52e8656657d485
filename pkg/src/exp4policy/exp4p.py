"""Exponential weighting over a finite roster of experts (F-EXP4.P)."""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .core import AssumptionViolation, DimensionError, Expert, ExpertRoster, Exp4Error, Trajectory
from .envs import TabularEnvironment

logger = logging.getLogger(__name__)


class HorizonTooShort(Exp4Error, ValueError):
    def __init__(self, horizon: int, minimum: float):
        self.horizon = horizon
        self.minimum = minimum
        super().__init__(f"horizon {horizon} is below the minimal admissible horizon {math.ceil(minimum)}")


@dataclass(frozen=True)
class TuningParams:
    beta: float
    gamma: float
    eta: float
    omega: float
    M: float
    N: int
    K: int
    horizon: int
    delta: float

    def __post_init__(self):
        if not 0 <= self.beta <= 1 / self.M * (1 + 1e-12):
            raise ValueError(f"beta={self.beta} outside [0, 1/M]")
        if not 0 <= self.gamma <= 1:
            raise ValueError(f"gamma={self.gamma} outside [0, 1]")
        if self.eta < 0:
            raise ValueError("eta must be nonnegative")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")

    def scaled(self, beta: float = 1.0, gamma: float = 1.0, eta: float = 1.0) -> "TuningParams":
        """Multiply the recommended regularisers, e.g. for sensitivity sweeps."""
        for name, m in (("beta", beta), ("gamma", gamma), ("eta", eta)):
            if not m > 0:
                raise ValueError(f"{name} multiplier must be positive")
        return replace(self, beta=self.beta * beta, gamma=self.gamma * gamma, eta=self.eta * eta)


def minimal_horizon(N: int, K: int, delta: float) -> float:
    omega2 = math.log(N / delta) / K
    return max(omega2, 4 * K * math.log(N))


def compute_tuning(N: int, K: int, horizon: int, M: float, delta: float) -> TuningParams:
    """Recommended ``(beta, gamma, eta)`` for ``N`` experts over ``horizon`` periods."""
    if N < 2 or K < 2:
        raise ValueError("tuning needs N >= 2 experts and K >= 2 arms")
    if not M > 0:
        raise ValueError("M must be positive")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    need = minimal_horizon(N, K, delta)
    if horizon < need:
        raise HorizonTooShort(horizon, need)
    omega = math.sqrt(math.log(N / delta) / K)
    root = omega / math.sqrt(horizon)
    ratio = math.sqrt(math.log(N) / math.log(N / delta))
    return TuningParams(
        beta=root / M,
        gamma=root * ratio * K,
        eta=root * ratio / (2 * M),
        omega=omega,
        M=M,
        N=N,
        K=K,
        horizon=horizon,
        delta=delta,
    )


@dataclass(frozen=True)
class ExpertWeights:
    """Max-normalised log scores ``eta * S_i`` and the induced expert distribution."""

    log_scores: np.ndarray
    q: np.ndarray

    @classmethod
    def uniform(cls, N: int) -> "ExpertWeights":
        return cls(np.zeros(N), np.full(N, 1.0 / N))

    @property
    def N(self) -> int:
        return self.q.size


def _softmax_shifted(log_scores):
    shifted = log_scores - log_scores.max()
    w = np.exp(shifted)
    return shifted, w / w.sum()


def policy_weights(q, recs, gamma: float) -> np.ndarray:
    """Arm probabilities ``(1 - gamma) * sum_i q_i f^i(x) + gamma / K``."""
    q = q.q if isinstance(q, ExpertWeights) else np.asarray(q, dtype=float)
    recs = np.asarray(recs, dtype=float)
    if recs.ndim != 2 or recs.shape[0] != q.size:
        raise DimensionError("expert recommendations", q.size, recs.shape[0] if recs.ndim else 0)
    K = recs.shape[1]
    return (1.0 - gamma) * (q @ recs) + gamma / K


def estimate_outcomes(realized: float, arm: int, p, beta: float, M: float) -> np.ndarray:
    """Regularised IPW estimates ``(beta M^2 + y 1{arm = k}) / p_k`` (``arm`` 1-indexed)."""
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0):
        raise AssumptionViolation(f"assignment probabilities must be positive, got {p}; check gamma > 0")
    num = np.full(p.size, beta * M * M)
    num[arm - 1] += realized
    return num / p


def update_weights(w: ExpertWeights, scores, eta: float) -> ExpertWeights:
    scores = np.asarray(scores, dtype=float)
    if scores.shape != w.log_scores.shape:
        raise DimensionError("expert scores", w.log_scores.size, scores.size)
    bad = np.flatnonzero(~np.isfinite(scores))
    if bad.size:
        raise ValueError(f"non-finite score for expert {int(bad[0])}")
    log_scores, q = _softmax_shifted(w.log_scores + eta * scores)
    return ExpertWeights(log_scores, q)


def sample_arm(p, u: float) -> int:
    """Inverse-CDF draw of a 0-indexed arm from one uniform number."""
    k = int(np.searchsorted(np.cumsum(p), u, side="right"))
    return min(k, len(p) - 1)


def replay_arms(p_rows, seed: int) -> np.ndarray:
    """Re-derive the 1-indexed arm sequence from stored probabilities and the policy seed."""
    rng = np.random.default_rng(seed)
    return np.array([sample_arm(p, rng.random()) + 1 for p in np.atleast_2d(p_rows)], dtype=np.int64)


def check_outcome(y: float, M: Optional[float], period: int):
    if y < 0 or (M is not None and y > M):
        raise AssumptionViolation(f"outcome {y} outside [0, M={M}]", period=period)


Observer = Callable[[int, ExpertWeights], None]


def run_phase(
    env: TabularEnvironment,
    roster: ExpertRoster,
    params: TuningParams,
    rng: np.random.Generator,
    start: int,
    stop: int,
    observer: Optional[Observer] = None,
):
    """Periods ``start .. stop-1`` (0-based) of F-EXP4.P from uniform expert weights.

    Returns ``(p, arms0, realized)`` arrays.  ``observer(t, weights)`` is called
    with the 1-indexed period and the weights in force when ``p_t`` was formed.
    """
    n = stop - start
    K = roster.K
    P = np.empty((n, K))
    arms = np.empty(n, dtype=np.int64)
    realized = np.empty(n)
    w = ExpertWeights.uniform(len(roster))
    beta, gamma, eta, M = params.beta, params.gamma, params.eta, params.M
    for i, t in enumerate(range(start, stop)):
        if observer is not None:
            observer(t + 1, w)
        recs = roster.matrix(env.X[t])
        p = policy_weights(w, recs, gamma)
        k = sample_arm(p, rng.random())
        y = float(env.Y[t, k])
        check_outcome(y, M, t + 1)
        y_tilde = estimate_outcomes(y, k + 1, p, beta, M)
        w = update_weights(w, recs @ y_tilde, eta)
        P[i], arms[i], realized[i] = p, k, y
    return P, arms, realized


def run_f_exp4p(
    env: TabularEnvironment,
    experts: Sequence[Expert],
    params: TuningParams,
    seed: int,
    observer: Optional[Observer] = None,
) -> Trajectory:
    """Run F-EXP4.P for ``params.horizon`` periods; deterministic given ``seed``."""
    if len(experts) != params.N:
        raise DimensionError("expert roster", params.N, len(experts))
    if env.T < params.horizon:
        raise Exp4Error(f"environment supplies {env.T} periods, run needs {params.horizon}")
    if env.K != params.K:
        raise DimensionError("arm count", params.K, env.K)
    roster = ExpertRoster(experts, params.K)
    if not roster.has_uniform:
        warnings.warn(
            "expert class has no UniformRandom member; the regret guarantee assumes one", stacklevel=2
        )
    rng = np.random.default_rng(seed)
    P, arms, realized = run_phase(env, roster, params, rng, 0, params.horizon, observer)
    T = params.horizon
    return Trajectory(
        x=env.X[:T],
        p=P,
        arms=arms + 1,
        realized=realized,
        counterfactuals=env.Y[:T] if env.simulator else None,
        seed=seed,
        meta={"algorithm": "F-EXP4.P", "N": params.N, "beta": params.beta, "gamma": params.gamma, "eta": params.eta},
    )
