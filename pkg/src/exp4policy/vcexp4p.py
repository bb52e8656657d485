"""Two-phase exponential weighting over an infinite LES class (VC-EXP4.P).

Periods ``1..ceil(tau)`` assign arms uniformly at random.  Their covariates
coarsen the LES class to one rule per cell of the induced hyperplane
arrangement, and F-EXP4.P then runs on those rules plus a uniform expert for
the remaining ``T - ceil(tau)`` periods.  Outcomes observed while coarsening
play no part in the run phase.
"""
from __future__ import annotations

import enum
import logging
import math
import warnings
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .arrangement import CellCatalog, coarsen_les, enumerate_cells, harding
from .core import DimensionError, Exp4Error, ExpertRoster, Trajectory
from .envs import TabularEnvironment
from .exp4p import Observer, check_outcome, compute_tuning, run_phase, sample_arm

logger = logging.getLogger(__name__)


class LogArg(enum.Enum):
    """Constant inside the confidence term of the coarsening length."""

    TWO_OVER_DELTA = 2
    THREE_OVER_DELTA = 3

    @classmethod
    def parse(cls, value) -> "LogArg":
        if isinstance(value, cls):
            return value
        names = {"twooverdelta": cls.TWO_OVER_DELTA, "threeoverdelta": cls.THREE_OVER_DELTA, "2": cls.TWO_OVER_DELTA, "3": cls.THREE_OVER_DELTA}
        key = str(value).replace("_", "").replace("-", "").lower()
        if key not in names:
            raise ValueError(f"unknown log_arg {value!r}; use TwoOverDelta or ThreeOverDelta")
        return names[key]


@dataclass(frozen=True)
class Vc:
    """Generic class of VC dimension ``D``."""

    D: int

    def __post_init__(self):
        if self.D < 1:
            raise ValueError("VC dimension must be at least 1")


@dataclass(frozen=True)
class Les:
    """LES rules on ``J`` covariates, counted exactly by the Harding number."""

    J: int

    def __post_init__(self):
        if self.J < 1:
            raise ValueError("LES class needs J >= 1")


Complexity = Union[Vc, Les]


class HorizonTooShortForClass(Exp4Error, ValueError):
    pass


@dataclass(frozen=True)
class PhasePlan:
    tau_raw: float
    tau_ceil: int
    run_length: int
    T: int
    delta: float
    log_arg: LogArg
    complexity: Complexity

    def __post_init__(self):
        if not 0 < self.tau_ceil < self.T or self.run_length < 1:
            raise HorizonTooShortForClass(f"coarsening length {self.tau_ceil} leaves no run phase within T={self.T}")


def _log_size(T: int, complexity: Complexity) -> float:
    if isinstance(complexity, Les):
        return math.log(harding(T, complexity.J))
    D = complexity.D
    return D * math.log(T * math.e / D)


def compute_tau(T: int, complexity: Complexity, delta: float = 0.05, log_arg=LogArg.TWO_OVER_DELTA) -> PhasePlan:
    """Length of the coarsening phase for horizon ``T``."""
    log_arg = LogArg.parse(log_arg)
    if T < 2:
        raise ValueError("horizon T must be at least 2")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if not isinstance(complexity, (Vc, Les)):
        raise TypeError("complexity must be Vc(D) or Les(J)")
    c = log_arg.value / delta
    tau = math.sqrt(T * (2 * _log_size(T, complexity) + math.log(c)))
    if tau >= T:
        raise HorizonTooShortForClass(
            f"horizon T={T} is too short for {complexity}: coarsening would need {tau:.1f} >= T periods"
        )
    tau_ceil = math.ceil(tau)
    if tau_ceil >= T:
        raise HorizonTooShortForClass(f"horizon T={T} leaves no run phase after {tau_ceil} coarsening periods")
    # largest possible coarsened class, by the same counting bound as tau
    log_n = _log_size(max(tau_ceil, 2), complexity)
    if max(8 * log_n, 2 * log_n + math.log(2 / delta)) > T:
        warnings.warn(f"{complexity} may be too rich for T={T}; tuning assumptions can fail", stacklevel=2)
    return PhasePlan(tau, tau_ceil, T - tau_ceil, T, delta, log_arg, complexity)


def run_vc_exp4p(
    env: TabularEnvironment,
    J: int,
    T: int,
    delta: float = 0.05,
    seed: int = 0,
    overrides: Optional[dict] = None,
    log_arg=LogArg.TWO_OVER_DELTA,
    catalog: Optional[CellCatalog] = None,
    M: Optional[float] = None,
    m_inflation: Optional[float] = None,
    observer: Optional[Observer] = None,
) -> Trajectory:
    """Run VC-EXP4.P on the LES class for ``T`` periods.

    The outcome cap comes from ``M``, else from ``env.M``.  With
    ``m_inflation`` set instead, the cap is the largest outcome seen while
    coarsening times that factor.  ``catalog`` skips re-enumeration when the
    coarsening covariates are known to be shared.  ``overrides`` multiplies the
    recommended ``beta``, ``gamma`` and ``eta``.

    The coarsened roster is returned in ``meta["experts"]``.
    """
    if env.T < T:
        raise Exp4Error(f"environment supplies {env.T} periods, run needs {T}")
    if env.K != 2:
        raise DimensionError("arm count (LES class)", 2, env.K)
    if env.J != J:
        raise DimensionError("covariate dimension", J, env.J)
    plan = compute_tau(T, Les(J), delta, log_arg)
    tc = plan.tau_ceil
    rng = np.random.default_rng(seed)

    uniform = np.full(env.K, 1.0 / env.K)
    arms = np.empty(T, dtype=np.int64)
    realized = np.empty(T)
    P = np.empty((T, env.K))
    for t in range(tc):
        k = sample_arm(uniform, rng.random())
        y = float(env.Y[t, k])
        if M is not None or m_inflation is None:
            check_outcome(y, M if M is not None else env.M, t + 1)
        P[t], arms[t], realized[t] = uniform, k, y

    if catalog is None:
        catalog = enumerate_cells(env.X[:tc], J)
    elif not np.array_equal(catalog.hyperplanes[catalog.dedup_map], np.column_stack([np.ones(tc), env.X[:tc]])):
        raise ValueError("supplied catalog was built from different coarsening covariates")
    experts = coarsen_les(env.X[:tc], J, catalog=catalog)
    if len(experts) - 1 < 2:
        raise Exp4Error(f"degenerate coarsening: only {len(experts) - 1} cell(s)")

    if M is not None:
        cap, mode = float(M), "given"
    elif m_inflation is not None:
        if not m_inflation > 0:
            raise ValueError("m_inflation must be positive")
        cap, mode = float(realized[:tc].max()) * m_inflation, "plug-in"
        if not cap > 0:
            raise Exp4Error("plug-in outcome cap is zero; all coarsening outcomes were zero")
    elif env.M is not None:
        cap, mode = float(env.M), "environment"
    else:
        raise ValueError("no outcome cap: pass M, m_inflation, or an environment with M")

    params = compute_tuning(len(experts), env.K, plan.run_length, cap, delta)
    if overrides:
        params = params.scaled(**overrides)
    roster = ExpertRoster(experts, env.K)
    P[tc:], run_arms, realized[tc:] = run_phase(env, roster, params, rng, tc, T, observer)
    arms[tc:] = run_arms
    logger.info("VC-EXP4.P: tau=%d, %d cells, gamma=%.4g", tc, len(catalog), params.gamma)
    return Trajectory(
        x=env.X[:T],
        p=P,
        arms=arms + 1,
        realized=realized,
        counterfactuals=env.Y[:T] if env.simulator else None,
        phase_boundary=tc,
        seed=seed,
        meta={
            "algorithm": "VC-EXP4.P",
            "tau": plan.tau_raw,
            "tau_ceil": tc,
            "n_cells": len(catalog),
            "N": params.N,
            "M": cap,
            "M_mode": mode,
            "beta": params.beta,
            "gamma": params.gamma,
            "eta": params.eta,
            "experts": tuple(experts),
            "params": params,
        },
    )
