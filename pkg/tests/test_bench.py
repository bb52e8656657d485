import math

import numpy as np
import pytest

from exp4policy.bench import (
    ConstantArm,
    WelfareReport,
    correct_classification_series,
    empirical_regret,
    empirical_welfare,
    fixed_policy,
    make_report,
    regret_vs_population,
    run_fixed,
    run_tau_ewm,
    tau_ewm,
    tau_ewm_scores,
    welfares,
)
from exp4policy.core import LesRule, MissingCounterfactuals, TableExpert, Trajectory, UniformRandom
from exp4policy.envs import LogNormalDesign, TabularEnvironment
from exp4policy.exp4p import compute_tuning, run_f_exp4p
from exp4policy.arrangement import enumerate_cells
from exp4policy.vcexp4p import Les, compute_tau, run_vc_exp4p


def _traj(Y, arms, p=None, x=None, boundary=None):
    Y = np.asarray(Y, float)
    T = len(Y)
    arms = np.asarray(arms)
    return Trajectory(
        x=np.arange(T, dtype=float)[:, None] if x is None else x,
        p=np.full((T, 2), 0.5) if p is None else p,
        arms=arms,
        realized=Y[np.arange(T), arms - 1],
        counterfactuals=Y,
        phase_boundary=boundary,
    )


def _by_period(arms):
    return TableExpert({(float(t),): a for t, a in enumerate(arms)})


def test_welfare_examples():
    tr = _traj([[1, 3], [2, 0]], [1, 1])
    assert empirical_welfare(tr, ConstantArm(1)) == 3.0
    assert empirical_welfare(tr, UniformRandom()) == 3.0
    assert empirical_welfare(tr, _by_period([2, 1])) == 5.0


def test_regret_examples():
    Y = np.array([[1.0, 0.0], [0.2, 0.9], [0.5, 0.4], [0.0, 0.3]])
    arms = [1, 2, 2, 1]
    tr = _traj(Y, arms)
    experts = [ConstantArm(1), ConstantArm(2), _by_period([1, 2, 1, 2])]
    hand = [1.0 + 0.2 + 0.5 + 0.0, 0.0 + 0.9 + 0.4 + 0.3, 1.0 + 0.9 + 0.5 + 0.3]
    realized = 1.0 + 0.9 + 0.4 + 0.0
    assert empirical_regret(tr, experts) == pytest.approx(max(hand) - realized)
    assert empirical_regret(tr, [ConstantArm(1)]) == pytest.approx(hand[0] - realized)
    assert empirical_regret(tr, [_by_period(arms)]) == 0.0


def test_missing_counterfactuals():
    tr = Trajectory(np.zeros((1, 1)), np.full((1, 2), 0.5), np.array([1]), np.array([1.0]))
    with pytest.raises(MissingCounterfactuals, match="realized"):
        empirical_welfare(tr, ConstantArm(1))
    with pytest.raises(ValueError):
        empirical_regret(_traj([[1, 2]], [1]), [])


def test_classification_examples():
    tr = _traj([[1, 0]], [1], p=np.array([[0.7, 0.3]]))
    assert correct_classification_series(tr, ConstantArm(1)).tolist() == [0.7]
    greedy = _traj([[1, 0], [0, 1]], [1, 2], p=np.array([[1.0, 0.0], [0.0, 1.0]]))
    assert correct_classification_series(greedy, _by_period([1, 2])).tolist() == [1.0, 1.0]
    with pytest.raises(ValueError):
        correct_classification_series(tr, UniformRandom())


def test_classification_matches_agreement_frequency():
    T, t, reps = 60, 45, 1000
    env = LogNormalDesign(0.3, T, covariate_seed=5).generate(11, 0, M=20.0)
    experts = [UniformRandom(), ConstantArm(1), ConstantArm(2), LesRule([0.0, 1.0, -1.0])]
    params = compute_tuning(4, 2, T, 20.0, 0.05)
    oracle = fixed_policy("OracleLogNormal")
    ref = oracle.arm(env.X[t - 1])
    probs, hits = np.empty(reps), np.empty(reps)
    for rep in range(reps):
        tr = run_f_exp4p(env, experts, params, seed=rep)
        probs[rep] = correct_classification_series(tr, oracle)[t - 1]
        hits[rep] = tr.arms[t - 1] == ref
    q = probs.mean()
    assert abs(hits.mean() - q) <= 3 * math.sqrt(q * (1 - q) / reps)


def test_fixed_policy_examples():
    assert fixed_policy("TreatAll").arm([0.1, 0.9]) == 2
    assert fixed_policy("TreatNone").arm([0.9, 0.1]) == 1
    oracle = fixed_policy("OracleLogNormal")
    assert oracle.arm([0.2, 0.9]) == 1 and oracle.arm([0.5, 0.5]) == 2
    custom = LesRule([0.1, -1.0, 0.0])
    assert fixed_policy("Custom", custom) is custom
    with pytest.raises(ValueError):
        fixed_policy("Custom")
    with pytest.raises(ValueError):
        fixed_policy("TreatSome")


def test_tau_ewm_examples():
    tr = _traj([[4, 0], [0, 2]], [1, 2], x=np.array([[0.0], [1.0]]))
    g1 = TableExpert({(0.0,): 1, (1.0,): 1})
    g2 = TableExpert({(0.0,): 2, (1.0,): 2})
    assert np.allclose(tau_ewm_scores(tr, [g1, g2]), [8.0, 4.0])
    assert tau_ewm(tr, [g1, g2]) is g1
    assert tau_ewm(tr, [g2]) is g2
    assert tau_ewm(tr, [g2, g2, g1, g1]) is g1  # ties go to the first
    with pytest.raises(ValueError):
        tau_ewm(tr, [])


def test_tau_ewm_prefers_fully_agreeing_candidate():
    rng = np.random.default_rng(3)
    Y = rng.random((12, 2)) + 0.1
    arms = rng.integers(1, 3, 12)
    tr = _traj(Y, arms)
    full = _by_period(arms)
    partial = [_by_period(np.where(rng.random(12) < 0.5, arms, 3 - arms)) for _ in range(20)]
    scores = tau_ewm_scores(tr, [full] + partial)
    assert scores[0] == scores.max()


def test_ipw_score_is_unbiased():
    rng = np.random.default_rng(8)
    T, reps = 30, 10**5
    Y = rng.random((T, 2))
    X = rng.random((T, 2))
    expert = LesRule([0.0, 1.0, -1.0])
    arms_f = np.array([expert.arm(x) for x in X]) - 1
    target = Y[np.arange(T), arms_f].sum()
    draws = rng.integers(0, 2, (reps, T))
    scores = (2 * Y[np.arange(T), draws] * (draws == arms_f)).sum(axis=1)
    assert abs(scores.mean() - target) <= 3 * scores.std(ddof=1) / math.sqrt(reps)
    # the library score on one simulated phase equals the hand formula
    tr = _traj(Y, draws[0] + 1, x=X)
    assert tau_ewm_scores(tr, [expert])[0] == pytest.approx(scores[0])
    assert welfares(tr, [expert])[0] == pytest.approx(target)


@pytest.fixture(scope="module")
def small_env():
    env = LogNormalDesign(0.2, 300, covariate_seed=4).generate(1, 1, M=10.0)
    tc = compute_tau(300, Les(2)).tau_ceil
    return env, enumerate_cells(env.X[:tc], 2)


def test_tau_ewm_run_shares_coarsening_with_vc(small_env):
    env, catalog = small_env
    vc = run_vc_exp4p(env, 2, 300, seed=7, catalog=catalog)
    ewm = run_tau_ewm(env, 2, 300, seed=7, catalog=catalog)
    tc = vc.phase_boundary
    assert ewm.phase_boundary == tc
    assert np.array_equal(vc.arms[:tc], ewm.arms[:tc])
    rest = ewm.p[tc:]
    assert np.all((rest == 0) | (rest == 1))


def test_population_regret_examples():
    design = LogNormalDesign(0.5, 2000)
    env = design.generate(3, 1)
    none = run_fixed(env, fixed_policy("TreatNone"), 2000)
    mean_none = lambda e: design.mean_welfare(e, 10**5)
    regret, se = regret_vs_population(none, [fixed_policy("TreatNone")], mean_none)
    assert regret == pytest.approx(2000 * 1.0 - none.realized.sum())
    assert se == 0.0  # conditional means of the control arm are exactly 1


def test_oracle_policy_has_zero_population_regret():
    T = 200_000
    design = LogNormalDesign(0.0, T)
    env = design.generate(5, 1)
    oracle = fixed_policy("OracleLogNormal")
    tr = run_fixed(env, oracle, T)
    regret, se = regret_vs_population(tr, [oracle], lambda e: design.mean_welfare(e, 10**6, seed=1))
    sample_se = math.sqrt(T) * tr.realized.std(ddof=1)
    assert abs(regret) <= 3 * math.hypot(se, sample_se)
    assert abs(regret / T) < 5e-3


def test_identical_arms_regret_is_policy_free():
    rng = np.random.default_rng(2)
    y = rng.random(50)
    Y = np.column_stack([y, y])
    env = TabularEnvironment(rng.random((50, 1)), Y, M=1.0)
    a = run_fixed(env, ConstantArm(1), 50)
    b = run_fixed(env, ConstantArm(2), 50)
    pop = lambda e: 0.5
    assert regret_vs_population(a, [ConstantArm(1)], pop)[0] == regret_vs_population(b, [ConstantArm(2)], pop)[0]
    assert regret_vs_population(a, [ConstantArm(1)], pop)[0] == pytest.approx(25.0 - y.sum())


def test_report_phase_additivity_and_round_trip(small_env):
    env, catalog = small_env
    tr = run_vc_exp4p(env, 2, 300, seed=3, catalog=catalog)
    experts = list(tr.meta["experts"])
    rep = make_report(tr, "VcExp4p", 1, experts, (math.e - 1.5, 0.0), fixed_policy("OracleLogNormal"))
    phases = rep.per_phase
    assert set(phases) == {"coarsening", "run"}
    total = phases["coarsening"]["empirical_welfare"] + phases["run"]["empirical_welfare"]
    assert abs(total - rep.empirical_welfare) <= 1e-9
    reg = phases["coarsening"]["regret"] + phases["run"]["regret"]
    assert abs(reg - rep.regret) <= 1e-9
    assert rep.empirical_regret == pytest.approx(empirical_regret(tr, experts), abs=1e-9)
    assert np.all(rep.empirical_regret >= welfares(tr, experts) - tr.realized.sum() - 1e-9)
    assert len(rep.correct_classification) == 300
    back = WelfareReport.from_json(rep.to_json())
    assert back == rep
