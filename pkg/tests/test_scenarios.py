import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.metrics import silhouette_score as sk_silhouette

from oracles import kmeans_1d_two_clusters
from vppsched.scenarios import ScenarioSet, build_scenarios, choose_scenario_count, silhouette_score


def test_identical_trajectories_single_scenario():
    X = np.tile([3.0, 4.0, 5.0], (3, 1))
    s = build_scenarios(X, 1)
    assert np.array_equal(s.trajectories[0], X[0]) and s.weights[0] == 1.0


def test_two_separable_clusters():
    X = np.array([[0.0, 0.0], [0.0, 0.0], [10.0, 10.0], [10.0, 10.0]])
    s = build_scenarios(X, 2)
    lo, hi, share = kmeans_1d_two_clusters(X[:, 0])
    order = np.argsort(s.trajectories[:, 0])
    assert np.allclose(s.trajectories[order], [[lo, lo], [hi, hi]])
    assert np.allclose(s.weights[order], [share, 1 - share])


def test_more_scenarios_than_candidates():
    with pytest.raises(ValueError):
        build_scenarios(np.zeros((3, 4)) + np.arange(3)[:, None], 5)


def test_weights_validated():
    with pytest.raises(ValueError):
        ScenarioSet(np.zeros((2, 3)), np.array([0.6, 0.6]))
    with pytest.raises(ValueError):
        ScenarioSet(np.zeros((2, 3)), np.array([1.0, 0.0]))


def test_scenario_csv_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    s = build_scenarios(rng.uniform(0, 33, (20, 48)), 3)
    s.to_csv(tmp_path / "s.csv")
    back = ScenarioSet.from_csv(tmp_path / "s.csv")
    assert np.array_equal(back.trajectories, s.trajectories) and np.array_equal(back.weights, s.weights)


def test_silhouette_four_points():
    X = np.array([[0.0], [0.0], [10.0], [10.0]])
    assert silhouette_score(X, [0, 0, 1, 1]) == pytest.approx(1.0)


def test_silhouette_identical_points_zero():
    assert silhouette_score(np.zeros((4, 2)), [0, 0, 1, 1]) == 0.0


def test_silhouette_one_cluster_rejected():
    with pytest.raises(ValueError):
        silhouette_score(np.arange(4.0)[:, None], [0, 0, 0, 0])


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(5, 30), k=st.integers(2, 4), d=st.integers(1, 5))
def test_silhouette_matches_sklearn(seed, n, k, d):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    labels = np.concatenate([np.arange(k), rng.integers(0, k, n - k)])
    assert silhouette_score(X, labels) == pytest.approx(sk_silhouette(X, labels), abs=1e-9)


def _bands(count, per=12, T=24, seed=0):
    rng = np.random.default_rng(seed)
    return np.vstack([rng.normal(8 * b + 2, 0.3, (per, T)) for b in range(count)])


def test_three_bands_choose_three():
    assert choose_scenario_count(_bands(3), range(2, 7)) == 3


def test_two_bands_choose_two():
    X = _bands(2)
    scores = {m: silhouette_score(X, build_scenarios(X, m).assignment) for m in (2, 3, 4)}
    assert choose_scenario_count(X, [2, 3, 4]) == max(scores, key=scores.get) == 2


def test_range_of_one_rejected():
    with pytest.raises(ValueError):
        choose_scenario_count(_bands(2), [1])


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 1000), m=st.integers(1, 4), lam=st.floats(0.1, 10))
def test_weights_and_scaling_equivariance(seed, m, lam):
    X = np.random.default_rng(seed).uniform(0, 3, (15, 6))
    a = build_scenarios(X, m)
    b = build_scenarios(lam * X, m)
    assert a.weights.sum() == pytest.approx(1.0, abs=1e-9)
    assert np.all(a.trajectories >= 0)
    ia, ib = np.lexsort(a.trajectories.T), np.lexsort(b.trajectories.T)
    assert np.allclose(b.trajectories[ib], lam * a.trajectories[ia], rtol=1e-7, atol=1e-9)


def test_choice_deterministic():
    X = np.random.default_rng(5).uniform(0, 30, (25, 12))
    assert choose_scenario_count(X, range(2, 6), seed=3) == choose_scenario_count(X, range(2, 6), seed=3)


def test_capacity_clip():
    X = np.array([[40.0, 1.0], [40.0, 1.0], [0.0, 0.0]])
    s = build_scenarios(X, 2, wind_capacity=33.0)
    assert s.trajectories.max() <= 33.0
