"""CART-style regression tree grown best-first under a leaf budget.

Impurity is the summed squared error over all action dimensions. The leaf
whose best split removes the most impurity is split next, until the budget
is used up or no split helps. Thresholds are midpoints between consecutive
distinct values and samples go left when ``s[k] <= threshold``.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset
from .errors import InvalidInputError, ModelFormatError


@dataclass(eq=False)
class Node:
    value: np.ndarray  # member-target mean, kept on internal nodes too
    n_samples: int
    dim: int = -1
    threshold: float = 0.0
    left: "Node | None" = None
    right: "Node | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass
class RegressionTree:
    root: Node
    d: int
    m: int
    leaves: list = field(default_factory=list)

    @property
    def n_leaves(self) -> int:
        return len(self.leaves)

    def leaf_for(self, s) -> Node:
        s = np.asarray(s, dtype=float)
        if s.shape != (self.d,):
            raise InvalidInputError(f"state has shape {s.shape}, expected ({self.d},)")
        node = self.root
        while not node.is_leaf:
            node = node.left if s[node.dim] <= node.threshold else node.right
        return node

    def predict(self, states) -> np.ndarray:
        states = np.asarray(states, dtype=float)
        if states.ndim != 2 or states.shape[1] != self.d:
            raise InvalidInputError(f"states have shape {states.shape}, expected (n, {self.d})")
        out = np.empty((states.shape[0], self.m))
        self._route(self.root, states, np.arange(states.shape[0]), out)
        return out

    def _route(self, node, states, idx, out):
        if node.is_leaf:
            out[idx] = node.value
            return
        go_left = states[idx, node.dim] <= node.threshold
        self._route(node.left, states, idx[go_left], out)
        self._route(node.right, states, idx[~go_left], out)

    def __call__(self, s) -> np.ndarray:
        return tree_predict(self, s)

    def to_dict(self) -> dict:
        nodes = []

        def visit(node):
            if node.is_leaf:
                nodes.append({"leaf": True, "value": node.value.tolist(), "n": node.n_samples})
            else:
                nodes.append({"leaf": False, "dim": node.dim, "threshold": node.threshold, "n": node.n_samples,
                              "value": node.value.tolist()})
                visit(node.left)
                visit(node.right)

        visit(self.root)
        return {"d": self.d, "m": self.m, "nodes": nodes}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "RegressionTree":
        try:
            nodes = iter(doc["nodes"])
            leaves = []

            def build():
                spec = next(nodes)
                node = Node(np.array(spec["value"], dtype=float), int(spec.get("n", 0)))
                if not spec["leaf"]:
                    node.dim = int(spec["dim"])
                    node.threshold = float(spec["threshold"])
                    node.left = build()
                    node.right = build()
                else:
                    leaves.append(node)
                return node

            root = build()
            return cls(root, int(doc["d"]), int(doc["m"]), leaves)
        except (KeyError, StopIteration, TypeError, ValueError) as exc:
            raise ModelFormatError(f"nodes: malformed tree document ({exc})") from None


def tree_predict(tree: RegressionTree, s) -> np.ndarray:
    return tree.leaf_for(s).value.copy()


def _leaf_value(y: np.ndarray) -> np.ndarray:
    # exact for dimensions whose targets are all equal (a float mean of
    # repeated values can be off by an ulp)
    value = y.mean(axis=0)
    same = np.ptp(y, axis=0) == 0
    value[same] = y[0, same]
    return value


def _sse(y: np.ndarray) -> float:
    return float(np.sum((y - y.mean(axis=0)) ** 2))


def _best_split(x: np.ndarray, y: np.ndarray, min_leaf: int):
    """Largest impurity reduction over all (dim, midpoint) candidates.

    Returns ``(gain, dim, threshold)``, or None when no admissible split
    exists. Scan order is dimension then threshold ascending and only a
    strictly better gain replaces the incumbent, which fixes tie-breaking.
    """
    n = x.shape[0]
    if n < 2 * min_leaf:
        return None
    yc = y - y.mean(axis=0)
    parent = float(np.sum(yc**2))
    best = None
    for k in range(x.shape[1]):
        order = np.argsort(x[:, k], kind="stable")
        xs = x[order, k]
        ys = yc[order]
        csum = np.cumsum(ys, axis=0)
        csq = np.cumsum(np.sum(ys**2, axis=1))
        n_left = np.arange(1, n)
        # a split after position p needs xs[p] < xs[p+1]
        valid = xs[:-1] < xs[1:]
        valid &= (n_left >= min_leaf) & (n - n_left >= min_leaf)
        if not np.any(valid):
            continue
        total = csum[-1]
        left_sum = csum[:-1]
        right_sum = total - left_sum
        sse_left = csq[:-1] - np.sum(left_sum**2, axis=1) / n_left
        sse_right = (csq[-1] - csq[:-1]) - np.sum(right_sum**2, axis=1) / (n - n_left)
        gain = parent - sse_left - sse_right
        gain[~valid] = -np.inf
        p = int(np.argmax(gain))
        if best is None or gain[p] > best[0]:
            thr = (xs[p] + xs[p + 1]) / 2.0
            if not xs[p] <= thr < xs[p + 1]:  # adjacent floats: midpoint rounds up
                thr = xs[p]
            best = (float(gain[p]), k, float(thr))
    return best


def tree_fit(dataset: Dataset, max_leaves: int = 16, min_samples_leaf: int = 5, seed: int = 0) -> RegressionTree:
    """Grow a regression tree best-first until ``max_leaves`` leaves.

    ``seed`` is accepted for interface symmetry; growth is deterministic.
    """
    if max_leaves < 2:
        raise InvalidInputError("max_leaves must be >= 2")
    if min_samples_leaf < 1:
        raise InvalidInputError("min_samples_leaf must be >= 1")
    x, y = dataset.states, dataset.actions
    if x.shape[0] == 0:
        raise InvalidInputError("cannot fit a tree on an empty dataset")

    # splits must beat rounding noise relative to the root impurity
    min_gain = 1e-12 * max(_sse(y), np.finfo(float).tiny)
    root = Node(_leaf_value(y), x.shape[0])
    leaves = [root]
    heap = []
    counter = 0

    def consider(node, idx):
        nonlocal counter
        yy = y[idx]
        if np.all(np.ptp(yy, axis=0) == 0):
            return
        split = _best_split(x[idx], yy, min_samples_leaf)
        if split is not None and split[0] > min_gain:
            heapq.heappush(heap, (-split[0], counter, node, idx, split))
        counter += 1

    consider(root, np.arange(x.shape[0]))
    while heap and len(leaves) < max_leaves:
        _, _, node, idx, (gain, k, thr) = heapq.heappop(heap)
        go_left = x[idx, k] <= thr
        li, ri = idx[go_left], idx[~go_left]
        node.dim, node.threshold = k, thr
        node.left = Node(_leaf_value(y[li]), li.size)
        node.right = Node(_leaf_value(y[ri]), ri.size)
        pos = leaves.index(node)
        leaves[pos : pos + 1] = [node.left, node.right]
        consider(node.left, li)
        consider(node.right, ri)
    return RegressionTree(root, x.shape[1], y.shape[1], leaves)
