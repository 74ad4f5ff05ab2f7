import json

import numpy as np
import pytest

from fuzzydistill.baselines import RegressionTree, tree_fit, tree_predict
from fuzzydistill.dataset import Dataset
from fuzzydistill.errors import InvalidInputError, ModelFormatError
from fuzzydistill.metrics import mse


def best_stump(x, y):
    """Exhaustive scan over midpoints of sorted unique values, one dimension."""
    xs = np.unique(x)
    best = None
    for lo, hi in zip(xs, xs[1:]):
        thr = (lo + hi) / 2
        left, right = y[x <= thr], y[x > thr]
        sse = ((left - left.mean(0)) ** 2).sum() + ((right - right.mean(0)) ** 2).sum()
        if best is None or sse < best[0]:
            best = (sse, thr)
    return best


def internal_nodes(node):
    if node.is_leaf:
        return []
    return [node] + internal_nodes(node.left) + internal_nodes(node.right)


def test_constant_target_single_leaf(rng):
    ds = Dataset(rng.normal(size=(30, 2)), np.tile([0.3, -0.2], (30, 1)))
    tree = tree_fit(ds, max_leaves=8)
    assert tree.n_leaves == 1
    np.testing.assert_array_equal(tree_predict(tree, [5.0, 5.0]), [0.3, -0.2])


def test_four_point_split():
    ds = Dataset([[0.0], [1.0], [2.0], [3.0]], [[0.0], [0.0], [1.0], [1.0]])
    tree = tree_fit(ds, max_leaves=2, min_samples_leaf=1)
    sse, thr = best_stump(ds.states[:, 0], ds.actions)
    assert tree.root.threshold == thr
    assert 1.0 < tree.root.threshold < 2.0
    assert tree_predict(tree, [0.5])[0] == 0.0 and tree_predict(tree, [2.5])[0] == 1.0


def test_plateaus_fit_exactly(rng):
    x = rng.uniform(0, 4, size=(400, 2))
    levels = np.array([[-1.0], [0.5], [2.0], [3.0]])
    y = levels[np.floor(x[:, 0]).astype(int)]
    tree = tree_fit(Dataset(x, y), max_leaves=4)
    assert tree.n_leaves == 4
    assert mse(tree, Dataset(x, y)) == 0.0


def test_root_split_matches_exhaustive_scan(rng):
    x = rng.normal(size=(120, 3))
    y = np.column_stack([np.sign(x[:, 1]) + 0.1 * rng.normal(size=120), x[:, 2] ** 2])
    tree = tree_fit(Dataset(x, y), max_leaves=2, min_samples_leaf=1)
    scans = [best_stump(x[:, k], y) for k in range(3)]
    k = int(np.argmin([s[0] for s in scans]))
    assert tree.root.dim == k
    assert tree.root.threshold == scans[k][1]


def test_threshold_ties_route_left():
    ds = Dataset([[0.0], [1.0], [2.0], [3.0]], [[0.0], [0.0], [1.0], [1.0]])
    tree = tree_fit(ds, max_leaves=2, min_samples_leaf=1)
    thr = tree.root.threshold
    assert tree_predict(tree, [thr])[0] == 0.0
    assert tree_predict(tree, [np.nextafter(thr, np.inf)])[0] == 1.0


def test_training_mse_non_increasing_in_leaves(rng):
    x = rng.normal(size=(300, 3))
    y = np.column_stack([np.sin(2 * x[:, 0]), x[:, 1] * x[:, 2]])
    ds = Dataset(x, y)
    errs = [mse(tree_fit(ds, max_leaves=k), ds) for k in range(2, 30)]
    assert all(b <= a + 1e-15 for a, b in zip(errs, errs[1:]))


def test_every_split_reduces_impurity(rng):
    x = rng.normal(size=(200, 2))
    y = np.column_stack([x[:, 0] > 0.3, np.cos(x[:, 1])]).astype(float)
    ds = Dataset(x, y)
    tree = tree_fit(ds, max_leaves=12, min_samples_leaf=3)
    assert tree.n_leaves <= 12
    for node in internal_nodes(tree.root):
        # recover the node's members by routing every sample
        members = np.array([_reaches(tree.root, node, s) for s in x])
        ym = y[members]
        go_left = x[members, node.dim] <= node.threshold
        parent = ((ym - ym.mean(0)) ** 2).sum()
        kids = sum(((ym[g] - ym[g].mean(0)) ** 2).sum() for g in (go_left, ~go_left))
        assert kids < parent
        assert go_left.sum() >= 3 and (~go_left).sum() >= 3


def _reaches(root, target, s):
    node = root
    while True:
        if node is target:
            return True
        if node.is_leaf:
            return False
        node = node.left if s[node.dim] <= node.threshold else node.right


def test_predictions_are_leaf_means(rng):
    x = rng.normal(size=(150, 2))
    y = rng.normal(size=(150, 2))
    tree = tree_fit(Dataset(x, y), max_leaves=6)
    leaf_of = [id(tree.leaf_for(s)) for s in x]
    for leaf in tree.leaves:
        members = np.array([lid == id(leaf) for lid in leaf_of])
        assert members.sum() == leaf.n_samples
        np.testing.assert_allclose(leaf.value, y[members].mean(0), rtol=1e-12)
    assert sum(leaf.n_samples for leaf in tree.leaves) == 150


def test_piecewise_constant(rng):
    x = rng.normal(size=(100, 2))
    tree = tree_fit(Dataset(x, x[:, :1] * 2), max_leaves=5)
    base = tree.predict(x)
    # nudging by far less than any gap to a threshold keeps the cell
    np.testing.assert_array_equal(tree.predict(x + 1e-13), base)


def test_batch_predict_matches_single(rng):
    x = rng.normal(size=(80, 3))
    tree = tree_fit(Dataset(x, rng.normal(size=(80, 2))), max_leaves=9)
    batch = tree.predict(x)
    for k in range(80):
        np.testing.assert_array_equal(batch[k], tree_predict(tree, x[k]))


def test_json_round_trip(rng):
    x = rng.normal(size=(80, 3))
    tree = tree_fit(Dataset(x, rng.normal(size=(80, 2))), max_leaves=7)
    back = RegressionTree.from_dict(json.loads(tree.to_json()))
    assert back.n_leaves == tree.n_leaves
    np.testing.assert_array_equal(back.predict(x), tree.predict(x))
    assert tree.to_dict()["nodes"][0]["leaf"] is False


def test_errors(rng):
    ds = Dataset(rng.normal(size=(10, 2)), rng.normal(size=(10, 1)))
    with pytest.raises(InvalidInputError):
        tree_fit(ds, max_leaves=1)
    tree = tree_fit(ds, max_leaves=2, min_samples_leaf=1)
    with pytest.raises(InvalidInputError):
        tree_predict(tree, [1.0])
    with pytest.raises(ModelFormatError):
        RegressionTree.from_dict({"d": 1, "m": 1, "nodes": [{"leaf": False}]})


def test_adjacent_float_threshold():
    a = 1.0
    b = np.nextafter(a, 2.0)
    ds = Dataset([[a], [b]], [[0.0], [1.0]])
    tree = tree_fit(ds, max_leaves=2, min_samples_leaf=1)
    assert tree_predict(tree, [a])[0] == 0.0
    assert tree_predict(tree, [b])[0] == 1.0
