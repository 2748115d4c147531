import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tacoma.forest import (
    Dataset,
    Forest,
    ForestParams,
    accuracy,
    default_mtry,
    gini,
    grow_tree,
    importance_ranking,
    margin,
    margins,
    mtry_from_name,
    nn1_error,
    oob_error,
    predict_class,
    predict_votes,
    train_forest,
)


def gaussians(rng, n, sep=6.0, p=2):
    y = rng.integers(0, 2, size=n)
    X = rng.normal(size=(n, p))
    X[:, 0] += sep * y
    return Dataset(X, y, 2)


def weighted_decrease(tree, n):
    """Sum over splits of (m/n) * (gini(parent) - weighted child gini), from node histograms."""
    total = 0.0
    for node in np.flatnonzero(tree.feature >= 0):
        h = tree.hist[node]
        m = h.sum()
        kids = [tree.hist[tree.left[node]], tree.hist[tree.right[node]]]
        child = sum(k.sum() / m * gini(k / k.sum()) for k in kids)
        total += m / n * (gini(h / m) - child)
    return total


@pytest.mark.parametrize(
    "p, value", [((0.5, 0.5), 0.5), ((1, 0, 0, 0), 0.0), ((0.659, 0.029, 0.070, 0.242), 0.501414)]
)
def test_gini_values(p, value):
    assert gini(p) == pytest.approx(value, abs=1e-9)


def test_gini_rejects_non_distribution():
    with pytest.raises(ValueError):
        gini([0.5, 0.6])


@given(st.lists(st.floats(0, 1), min_size=1, max_size=8).filter(lambda v: sum(v) > 0))
def test_gini_bounds(v):
    p = np.array(v) / sum(v)
    assert -1e-12 <= gini(p) <= 1 - 1 / len(p) + 1e-12


@pytest.mark.parametrize(
    "tally, m", [((120, 50, 20, 10), 70), ((60, 60, 30), 0), ((200, 0, 0, 0), 200)]
)
def test_margin_examples(tally, m):
    assert margin(tally) == m


def test_mtry_defaults():
    assert default_mtry(1) == 1
    assert default_mtry(100) == 10
    assert default_mtry(935) == 31
    assert mtry_from_name("0.5sqrt", 100) == 5
    assert mtry_from_name("2sqrt", 100) == 20
    with pytest.raises(ValueError):
        mtry_from_name("3sqrt", 100)


def test_pure_node_is_a_leaf():
    data = Dataset(np.arange(6.0)[:, None], np.zeros(6), 2)
    tree, imp = grow_tree(data, np.arange(6), 1, 0)
    assert tree.n_nodes == 1 and tree.feature[0] == -1
    assert not imp.any()


def test_one_dimensional_split():
    data = Dataset(np.array([[0.0], [1.0]]), np.array([0, 1]), 2)
    tree, _ = grow_tree(data, np.array([0, 1]), 1, 0)
    assert tree.feature.tolist() == [0, -1, -1]
    assert tree.threshold[0] == 0.5
    assert tree.leaf_class[tree.left[0]] == 0 and tree.leaf_class[tree.right[0]] == 1


def test_constant_features_give_mixed_leaf():
    data = Dataset(np.ones((4, 3)), np.array([0, 1, 0, 1]), 2)
    tree, imp = grow_tree(data, np.arange(4), 3, 0)
    assert tree.n_nodes == 1 and tree.hist[0].tolist() == [2, 2]
    assert not imp.any()


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_single_tree_fits_its_bag(seed):
    rng = np.random.default_rng(seed)
    data = Dataset(rng.normal(size=(30, 4)), rng.integers(0, 3, 30), 3)
    bag = rng.integers(0, 30, 30)
    tree, imp = grow_tree(data, bag, 2, seed)
    f = Forest.from_trees(
        [tree], params=ForestParams(1), mtry=2, n_features=4, class_count=3, in_bag_counts=None, importances=imp
    )
    np.testing.assert_array_equal(f.predict(data.features[bag]), data.labels[bag])
    assert sum(imp) == pytest.approx(weighted_decrease(tree, len(bag)), rel=1e-9, abs=1e-12)


def test_importance_accounting_over_forest():
    rng = np.random.default_rng(3)
    data = Dataset(rng.normal(size=(60, 5)), rng.integers(0, 3, 60), 3)
    f = train_forest(data, ForestParams(7, seed=1))
    expected = sum(weighted_decrease(t, data.n) for t in f.trees)
    assert f.importances.sum() == pytest.approx(expected, rel=1e-9)


def test_determinism_across_workers():
    data = gaussians(np.random.default_rng(0), 80, sep=1.0, p=6)
    a = train_forest(data, ForestParams(23, seed=5))
    b = train_forest(data, ForestParams(23, seed=5), n_jobs=4)
    assert a.to_json() == b.to_json()
    assert train_forest(data, ForestParams(23, seed=6)).to_json() != a.to_json()


def test_votes_conserve_trees():
    rng = np.random.default_rng(1)
    data = gaussians(rng, 50, sep=1.0)
    f = train_forest(data, ForestParams(17, seed=0))
    X = rng.normal(size=(40, 2))
    v = f.votes(X)
    assert (v.sum(axis=1) == 17).all()
    m = margins(v)
    assert (m >= 0).all() and (m <= 17).all()
    assert ((m == 17) == (v.max(axis=1) == 17)).all()
    assert predict_votes(f, X[0]).tolist() == v[0].tolist()
    assert predict_class(f, X[0]) == int(np.argmax(v[0]))


def test_single_tree_votes_are_indicators():
    data = gaussians(np.random.default_rng(2), 40)
    v = train_forest(data, ForestParams(1, seed=0)).votes(data.features)
    assert set(np.unique(v)) <= {0, 1}
    assert (v.sum(axis=1) == 1).all()


def test_prediction_ties_go_to_smaller_class():
    hist = np.array([[1, 1]])
    f = Forest(
        np.array([-1], np.int32), np.zeros(1), np.array([-1], np.int32), np.array([-1], np.int32),
        hist.astype(np.int32), np.zeros(1, np.int64), ForestParams(1), 1, 1, 2, None, np.zeros(1),
    )
    assert f.predict(np.zeros((1, 1))).tolist() == [0]


def test_training_points_get_their_label():
    data = gaussians(np.random.default_rng(3), 60, sep=1.5)
    f = train_forest(data, ForestParams(101, seed=2))
    assert accuracy(f, data) == 1.0


def test_separable_gaussians():
    rng = np.random.default_rng(4)
    f = train_forest(gaussians(rng, 200), ForestParams(200, seed=0))
    assert accuracy(f, gaussians(rng, 1000)) >= 0.95


def test_oob_single_tree_covers_excluded_rows():
    data = gaussians(np.random.default_rng(5), 400, sep=1.0)
    f = train_forest(data, ForestParams(1, seed=3))
    res = oob_error(f, data)
    assert res.evaluated == int((f.in_bag_counts[0] == 0).sum())
    assert res.evaluated + res.skipped == data.n
    assert 0.30 < res.evaluated / data.n < 0.44


def test_oob_on_noise():
    rng = np.random.default_rng(6)
    C = 4
    data = Dataset(rng.normal(size=(400, 5)), rng.integers(0, C, 400), C)
    assert abs(oob_error(train_forest(data, ForestParams(200, seed=0)), data).error - (1 - 1 / C)) <= 0.05


def test_oob_requires_bootstrap_records():
    data = gaussians(np.random.default_rng(7), 20)
    f = Forest.from_dict(train_forest(data, ForestParams(3)).to_dict(include_bootstrap=False))
    with pytest.raises(ValueError):
        oob_error(f, data)


def test_planted_feature_ranks_first():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(200, 8))
    y = (X[:, 0] > 0).astype(int)
    f = train_forest(Dataset(X, y, 2), ForestParams(100, seed=0))
    assert importance_ranking(f)[0][0] == 0


def test_constant_features_have_no_importance():
    f = train_forest(Dataset(np.ones((20, 3)), np.arange(20) % 2, 2), ForestParams(10))
    assert not f.importances.any()
    assert [i for i, _ in importance_ranking(f)] == [0, 1, 2]


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(0, 4))
def test_ranking_invariant_to_monotone_transform(seed, col):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(60, 5))
    y = (X[:, 1] + 0.5 * rng.normal(size=60) > 0).astype(int)
    params = ForestParams(15, seed=seed)
    base = train_forest(Dataset(X, y, 2), params)
    Xt = X.copy()
    Xt[:, col] = np.exp(Xt[:, col])
    other = train_forest(Dataset(Xt, y, 2), params)
    assert importance_ranking(base) == importance_ranking(other)


def test_json_roundtrip():
    data = gaussians(np.random.default_rng(9), 50, sep=1.0, p=3)
    f = train_forest(data, ForestParams(9, seed=4))
    g = Forest.from_json(f.to_json())
    assert g.to_json() == f.to_json()
    np.testing.assert_array_equal(g.votes(data.features), f.votes(data.features))
    with pytest.raises(ValueError):
        Forest.from_dict({"format": "other"})


def test_input_checks():
    data = gaussians(np.random.default_rng(10), 20)
    f = train_forest(data, ForestParams(3))
    with pytest.raises(ValueError):
        f.votes(np.zeros((1, 3)))
    with pytest.raises(ValueError):
        train_forest(data, ForestParams(0))
    with pytest.raises(ValueError):
        train_forest(data, ForestParams(3, mtry=5))
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 2)), [0, 2], 2)


def test_nn1():
    rng = np.random.default_rng(11)
    train = gaussians(rng, 100, sep=20.0)
    assert nn1_error(train, train) == 0.0
    assert nn1_error(train, gaussians(rng, 200, sep=20.0)) == 0.0
    noise = Dataset(rng.normal(size=(400, 3)), rng.integers(0, 2, 400), 2)
    test = Dataset(rng.normal(size=(2000, 3)), rng.integers(0, 2, 2000), 2)
    assert abs(nn1_error(noise, test) - 0.5) <= 0.05


def test_nn1_ties_go_to_first_row():
    train = Dataset(np.array([[1.0], [-1.0]]), np.array([1, 0]), 2)
    assert nn1_error(train, Dataset(np.array([[0.0]]), np.array([1]), 2)) == 0.0
