"""Benchmark policies and welfare, regret and classification metrics."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .arrangement import CellCatalog, coarsen_les, enumerate_cells
from .core import (
    DimensionError,
    Expert,
    ExpertRoster,
    LesRule,
    MissingCounterfactuals,
    Trajectory,
    point_mass,
    recommend,
)
from .envs import TabularEnvironment
from .exp4p import check_outcome, sample_arm
from .vcexp4p import Les, LogArg, compute_tau


def _require_counterfactuals(traj: Trajectory):
    if not traj.has_counterfactuals:
        raise MissingCounterfactuals(
            "trajectory has no counterfactual outcomes; use realized welfare (traj.realized.sum()) instead"
        )


def welfares(traj: Trajectory, experts: Sequence[Expert]) -> np.ndarray:
    """Empirical welfare of every expert on the trajectory's periods."""
    _require_counterfactuals(traj)
    return ExpertRoster(experts, traj.K).welfare(traj.x, traj.counterfactuals)


def empirical_welfare(traj: Trajectory, expert: Expert) -> float:
    """``sum_t f(x_t)' y_t`` over the full potential-outcome vectors."""
    return float(welfares(traj, [expert])[0])


def empirical_regret(traj: Trajectory, experts: Sequence[Expert]) -> float:
    """Best in-class empirical welfare minus the realized total."""
    if len(experts) == 0:
        raise ValueError("empirical regret needs at least one expert")
    return float(welfares(traj, experts).max() - traj.realized.sum())


MeanWelfare = Callable[[Expert], Union[float, Tuple[float, float]]]


def regret_vs_population(traj: Trajectory, experts: Sequence[Expert], mean_welfare: MeanWelfare):
    """``T * max_f E[f(x)' y]`` minus the realized total, with its standard error.

    ``mean_welfare(expert)`` returns the per-period population welfare, either
    as a number or as ``(value, standard_error)``.
    """
    if len(experts) == 0:
        raise ValueError("regret needs at least one expert")
    vals = []
    for e in experts:
        v = mean_welfare(e)
        vals.append(tuple(v) if isinstance(v, (tuple, list)) else (float(v), 0.0))
    best, se = max(vals, key=lambda vs: vs[0])
    T = traj.T
    return T * best - float(traj.realized.sum()), T * se


def correct_classification_series(traj: Trajectory, reference: Expert) -> np.ndarray:
    """Probability that ``p_t`` selects the reference expert's arm, per period."""
    if not reference.deterministic:
        raise ValueError("reference expert must be deterministic")
    arms = ExpertRoster([reference], traj.K).matrices(traj.x)[:, 0, :].argmax(axis=1)
    return traj.p[np.arange(traj.T), arms]


# ----------------------------------------------------------- fixed policies


@dataclass(frozen=True)
class ConstantArm(Expert):
    """Always recommends the same 1-indexed arm."""

    arm_index: int
    deterministic = True

    def arm(self, x) -> int:
        return self.arm_index

    def recommend(self, x, K):
        return point_mass(self.arm_index, K)


FIXED_KINDS = ("TreatAll", "TreatNone", "OracleLogNormal", "Custom")


def fixed_policy(kind: str, expert: Optional[Expert] = None, K: int = 2) -> Expert:
    """Deterministic benchmark experts; arm 1 is control and arm ``K`` treated."""
    if kind == "TreatAll":
        return ConstantArm(K)
    if kind == "TreatNone":
        return ConstantArm(1)
    if kind == "OracleLogNormal":
        return LesRule(np.array([0.0, 1.0, -1.0]))
    if kind == "Custom":
        if expert is None or not expert.deterministic:
            raise ValueError("Custom fixed policy needs a deterministic expert")
        return expert
    raise ValueError(f"unknown fixed policy {kind!r}; choose from {FIXED_KINDS}")


def run_fixed(env: TabularEnvironment, expert: Expert, T: int) -> Trajectory:
    """Trajectory of a deterministic expert followed for ``T`` periods."""
    if not expert.deterministic:
        raise ValueError("run_fixed needs a deterministic expert")
    P = ExpertRoster([expert], env.K).matrices(env.X[:T])[:, 0, :]
    arms = P.argmax(axis=1)
    realized = env.Y[np.arange(T), arms]
    for t, y in enumerate(realized):
        check_outcome(float(y), env.M, t + 1)
    return Trajectory(
        x=env.X[:T],
        p=P,
        arms=arms + 1,
        realized=realized,
        counterfactuals=env.Y[:T] if env.simulator else None,
        meta={"algorithm": "fixed"},
    )


# ----------------------------------------------------------------- tau-EWM


def tau_ewm_scores(coarse_traj: Trajectory, candidates: Sequence[Expert], counterfactual: bool = False) -> np.ndarray:
    """Empirical welfare of each candidate on the coarsening periods.

    By default the inverse-propensity form ``sum_t y_t(k_t) f_{k_t}(x_t) / p_t(k_t)``,
    which uses only realized outcomes.  ``counterfactual=True`` uses the full
    potential outcomes instead (simulator only).
    """
    if len(candidates) == 0:
        raise ValueError("tau-EWM needs at least one candidate")
    if counterfactual:
        return welfares(coarse_traj, candidates)
    T = coarse_traj.T
    k = coarse_traj.arms - 1
    w = coarse_traj.realized / coarse_traj.p[np.arange(T), k]
    roster = ExpertRoster(candidates, coarse_traj.K)
    return np.einsum("tn,t->n", roster.matrices(coarse_traj.x)[np.arange(T), :, k], w)


def tau_ewm(coarse_traj: Trajectory, candidates: Sequence[Expert], counterfactual: bool = False) -> Expert:
    """Candidate with the largest empirical welfare; ties go to the lowest index."""
    scores = tau_ewm_scores(coarse_traj, candidates, counterfactual)
    return candidates[int(np.argmax(scores))]


def run_tau_ewm(
    env: TabularEnvironment,
    J: int,
    T: int,
    delta: float = 0.05,
    seed: int = 0,
    log_arg=LogArg.TWO_OVER_DELTA,
    catalog: Optional[CellCatalog] = None,
    counterfactual: bool = False,
) -> Trajectory:
    """Uniform assignment for ``ceil(tau)`` periods, then commit to the tau-EWM rule.

    The uniform draws consume the policy stream exactly as VC-EXP4.P does, so
    both estimators share their coarsening phase under the same seed.
    """
    if env.K != 2:
        raise DimensionError("arm count (LES class)", 2, env.K)
    tc = compute_tau(T, Les(J), delta, log_arg).tau_ceil
    rng = np.random.default_rng(seed)
    uniform = np.full(env.K, 1.0 / env.K)
    arms = np.array([sample_arm(uniform, rng.random()) for _ in range(tc)], dtype=np.int64)
    realized = env.Y[np.arange(tc), arms]
    for t, y in enumerate(realized):
        check_outcome(float(y), env.M, t + 1)
    coarse = Trajectory(
        x=env.X[:tc],
        p=np.tile(uniform, (tc, 1)),
        arms=arms + 1,
        realized=realized,
        counterfactuals=env.Y[:tc] if env.simulator else None,
    )
    if catalog is None:
        catalog = enumerate_cells(env.X[:tc], J)
    candidates = catalog.experts()
    rule = tau_ewm(coarse, candidates, counterfactual)
    rest = run_fixed(env.head(T), rule, T)
    return Trajectory(
        x=env.X[:T],
        p=np.vstack([coarse.p, rest.p[tc:]]),
        arms=np.concatenate([coarse.arms, rest.arms[tc:]]),
        realized=np.concatenate([realized, rest.realized[tc:]]),
        counterfactuals=env.Y[:T] if env.simulator else None,
        phase_boundary=tc,
        seed=seed,
        meta={"algorithm": "tau-EWM", "tau_ceil": tc, "rule": rule.coefficients.tolist(), "experts": tuple(candidates)},
    )


# ------------------------------------------------------------------ report


@dataclass
class WelfareReport:
    estimator: str
    replication: int
    T: int
    K: int
    empirical_welfare: float
    empirical_regret: Optional[float] = None
    average_welfare: Optional[float] = None
    regret: Optional[float] = None
    regret_se: Optional[float] = None
    per_phase: Dict[str, Dict[str, float]] = field(default_factory=dict)
    correct_classification: Optional[List[float]] = None
    meta: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True, allow_nan=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "WelfareReport":
        return cls(**json.loads(text))


def make_report(
    traj: Trajectory,
    estimator: str,
    replication: int = 0,
    experts: Optional[Sequence[Expert]] = None,
    population_best: Optional[Tuple[float, float]] = None,
    reference: Optional[Expert] = None,
) -> WelfareReport:
    """Collect the welfare metrics of one trajectory.

    ``empirical_welfare`` is the realized total.  ``experts`` is the comparison
    class for the empirical regret; ``population_best`` is ``(value, se)`` of
    the best per-period population welfare; ``reference`` gives the
    classification series.  Phase splits use ``traj.phase_boundary``.
    """
    realized = traj.realized
    rep = WelfareReport(estimator, replication, traj.T, traj.K, float(realized.sum()))
    phases = {"all": (0, traj.T)}
    if traj.phase_boundary is not None:
        phases = {"coarsening": (0, traj.phase_boundary), "run": (traj.phase_boundary, traj.T)}

    if experts is not None and traj.has_counterfactuals:
        roster = ExpertRoster(experts, traj.K)
        # per-phase welfare vectors add up to the full-horizon ones
        total = 0.0
        for name, (a, b) in phases.items():
            w = roster.welfare(traj.x[a:b], traj.counterfactuals[a:b])
            total = total + w
            rep.per_phase.setdefault(name, {})["empirical_regret"] = float(w.max() - realized[a:b].sum())
        rep.empirical_regret = float(np.max(total) - realized.sum())
    if population_best is not None:
        value, se = population_best
        rep.average_welfare = float(value)
        rep.regret = float(traj.T * value - realized.sum())
        rep.regret_se = float(traj.T * se)
    for name, (a, b) in phases.items():
        rep.per_phase.setdefault(name, {})["empirical_welfare"] = float(realized[a:b].sum())
        if population_best is not None:
            rep.per_phase[name]["regret"] = float((b - a) * population_best[0] - realized[a:b].sum())
    if reference is not None:
        rep.correct_classification = [float(v) for v in correct_classification_series(traj, reference)]
    rep.meta = {k: v for k, v in traj.meta.items() if isinstance(v, (int, float, str, bool)) and not (isinstance(v, float) and not math.isfinite(v))}
    if traj.seed is not None:
        rep.meta["seed"] = int(traj.seed)
    return rep
