import math
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vrident.metrics import (DelayObservation, MetricError, RankRecord, accuracy, bootstrap_slope,
                             fit_delay_model, logit, multiclass_auc, n_class_accuracy,
                             rank_records, sigmoid)


def brute_force_auc(S, y):
    """Mean over ordered present-class pairs of P(class-i unit outscores class-j unit on column i)."""
    classes = sorted(set(y.tolist()))
    vals = []
    for i in classes:
        for j in classes:
            if i == j:
                continue
            a, b = S[y == i, i], S[y == j, i]
            wins = sum((x > z) + 0.5 * (x == z) for x in a for z in b)
            vals.append(wins / (len(a) * len(b)))
    return float(np.mean(vals))


def brute_force_n_class(records, n, draws, rng):
    hits = 0
    for r in records:
        others = [k for k in range(1, r.n_candidates + 1) if k != r.rank]
        for _ in range(draws):
            picks = rng.choice(len(others), size=n - 1, replace=False)
            hits += all(others[p] > r.rank for p in picks)
    return hits / (len(records) * draws)


def test_auc_perfect_separation():
    S = np.array([[0.9, 0.1], [0.8, 0.2], [0.2, 0.8], [0.1, 0.9]])
    assert multiclass_auc(S, [0, 0, 1, 1]) == 1.0


def test_auc_all_ties_is_half():
    assert multiclass_auc(np.zeros((6, 3)), [0, 0, 1, 1, 2, 2]) == 0.5


def test_auc_matches_brute_force_three_classes(rng):
    S = rng.normal(size=(12, 3))
    y = np.repeat(np.arange(3), 4)
    assert abs(multiclass_auc(S, y) - brute_force_auc(S, y)) < 1e-12


@settings(max_examples=80, deadline=None)
@given(seed=st.integers(0, 10**6), c=st.integers(2, 6), n=st.integers(4, 20),
       discrete=st.booleans())
def test_auc_brute_force_property(seed, c, n, discrete):
    r = np.random.default_rng(seed)
    y = np.concatenate([np.arange(c), r.integers(0, c, size=n)])
    S = r.integers(0, 3, size=(len(y), c)).astype(float) if discrete else r.normal(size=(len(y), c))
    assert abs(multiclass_auc(S, y) - brute_force_auc(S, y)) < 1e-12


def test_auc_ignores_absent_columns(rng):
    S = rng.normal(size=(10, 5))
    y = np.array([0, 2] * 5)
    assert abs(multiclass_auc(S, y) - brute_force_auc(S, y)) < 1e-12


def test_auc_needs_two_classes():
    with pytest.raises(MetricError):
        multiclass_auc(np.zeros((3, 2)), [0, 0, 0])


def test_n_class_equals_top1_when_n_is_c():
    recs = [RankRecord(0, r, 5) for r in (1, 2, 1, 5)]
    assert n_class_accuracy(recs, 5) == 0.5


def test_n_class_single_record():
    assert n_class_accuracy([RankRecord(0, 3, 4)], 2) == pytest.approx(1 / 3)


def test_n_class_hand_value():
    recs = [RankRecord(0, r, 4) for r in (1, 1, 3)]
    assert n_class_accuracy(recs, 2) == pytest.approx(7 / 9)


def test_n_class_enumeration_oracle(rng):
    for _ in range(20):
        C = int(rng.integers(3, 9))
        N = int(rng.integers(2, C + 1))
        r = int(rng.integers(1, C + 1))
        others = [k for k in range(1, C + 1) if k != r]
        subsets = list(combinations(others, N - 1))
        exact = sum(all(k > r for k in s) for s in subsets) / len(subsets)
        assert n_class_accuracy([RankRecord(0, r, C)], N) == pytest.approx(exact, abs=1e-15)


def test_n_class_monte_carlo(rng):
    recs = [RankRecord(0, int(r), 10) for r in rng.integers(1, 11, size=5)]
    mc = brute_force_n_class(recs, 3, 4000, rng)
    assert abs(n_class_accuracy(recs, 3) - mc) < 0.02


def test_n_class_bounds():
    with pytest.raises(MetricError):
        n_class_accuracy([RankRecord(0, 1, 4)], 5)
    with pytest.raises(MetricError):
        n_class_accuracy([RankRecord(0, 1, 4)], 1)


def test_rank_extremes():
    row = np.arange(183, dtype=float)
    assert rank_records(row[None, :], [182])[0].rank == 1
    assert rank_records(row[None, :], [0])[0].rank == 183


def test_rank_top_tie_is_fair():
    S = np.array([[1.0, 1.0, 0.0]])
    ranks = np.array([rank_records(S, [0], seed=s)[0].rank for s in range(10_000)])
    assert set(ranks) == {1, 2}
    assert abs((ranks == 1).mean() - 0.5) < 0.02
    assert rank_records(S, [0])[0].tie_size == 2


def test_accuracy_values():
    S = np.eye(4)
    assert accuracy(S, [0, 1, 2, 3]) == 1.0
    const = np.tile([1.0, 0, 0, 0], (8, 1))
    assert accuracy(const, [0, 1, 2, 3] * 2) == 0.25


def obs_from(fn, weeks=range(1, 9)):
    return [DelayObservation(i, j, float(sigmoid(fn(i, j)))) for i in weeks for j in weeks
            if i != j]


def test_delay_constant_auc():
    fit = fit_delay_model([DelayObservation(o.train_week, o.test_week, 0.8)
                           for o in obs_from(lambda i, j: 0)])
    assert abs(fit.slope) < 1e-12
    assert fit.pooled_intercept == pytest.approx(math.log(4), abs=1e-12)


def test_delay_exact_recovery():
    fit = fit_delay_model(obs_from(lambda i, j: 2.0 - 0.1 * abs(i - j)))
    assert fit.slope == pytest.approx(-0.1, abs=1e-10)
    assert fit.pooled_intercept == pytest.approx(2.0, abs=1e-10)
    assert all(abs(v - 2.0) < 1e-10 for v in fit.intercepts.values())
    assert fit.predict(0) == pytest.approx(float(sigmoid(2.0)))


def test_delay_week_intercepts():
    fit = fit_delay_model(obs_from(lambda i, j: 1.0 + 0.1 * i - 0.2 * abs(i - j)))
    assert fit.slope == pytest.approx(-0.2, abs=1e-10)
    assert fit.intercepts[3] == pytest.approx(1.3, abs=1e-10)
    assert fit.pooled_intercept == pytest.approx(1.45, abs=1e-10)


def test_delay_model_errors():
    with pytest.raises(MetricError):
        fit_delay_model([DelayObservation(1, 2, 1.0), DelayObservation(1, 3, 0.5)])
    with pytest.raises(MetricError):
        fit_delay_model([DelayObservation(1, 2, 0.7), DelayObservation(2, 3, 0.6)])


def test_bootstrap_brackets_true_slope(rng):
    obs = obs_from(lambda i, j: 2.0 - 0.1 * abs(i - j) + 0.05 * rng.normal())
    lo, hi = bootstrap_slope(obs, n_boot=500, seed=1)
    assert lo < -0.1 < hi and hi < 0
    assert bootstrap_slope(obs, n_boot=100, seed=2) == bootstrap_slope(obs, n_boot=100, seed=2)


def test_logit_sigmoid_inverse():
    p = np.array([0.1, 0.5, 0.87])
    np.testing.assert_allclose(sigmoid(logit(p)), p)
