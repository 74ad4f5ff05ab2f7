"""Dynamic time warping between state-action trajectories."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DatasetFormatError, InvalidInputError
from .io import atomic_write_text

BOTH = "both"
STATE = "state"
ACTION = "action"


@dataclass(frozen=True, eq=False)
class Trajectory:
    states: np.ndarray  # (T, d)
    actions: np.ndarray  # (T, m)

    def __post_init__(self):
        s = np.array(self.states, dtype=float)
        a = np.array(self.actions, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        if a.ndim == 1:
            a = a.reshape(s.shape[0], -1)
        if s.ndim != 2 or a.ndim != 2 or s.shape[0] != a.shape[0]:
            raise InvalidInputError("trajectory needs matching (T, d) states and (T, m) actions")
        if s.shape[0] < 1:
            raise InvalidInputError("trajectory must have at least one step")
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(a))):
            raise InvalidInputError("trajectory entries must be finite")
        s.setflags(write=False)
        a.setflags(write=False)
        object.__setattr__(self, "states", s)
        object.__setattr__(self, "actions", a)

    def __len__(self):
        return self.states.shape[0]

    def vectors(self, use: str = BOTH) -> np.ndarray:
        if use == BOTH:
            return np.hstack([self.states, self.actions])
        if use == STATE:
            return self.states
        if use == ACTION:
            return self.actions
        raise InvalidInputError(f"unknown component selection {use!r}")

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return np.array_equal(self.states, other.states) and np.array_equal(self.actions, other.actions)

    __hash__ = None


@dataclass(frozen=True)
class DtwResult:
    distance: float
    path: tuple  # ((i, j), ...) from (0, 0) to (T-1, T'-1)

    @property
    def path_length(self) -> int:
        return len(self.path)

    @property
    def normalized(self) -> float:
        return self.distance / len(self.path)


def local_costs(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Euclidean distance between every row of ``x`` and every row of ``y``.

    Squares are summed dimension by dimension in index order, so the cost
    of a pair does not depend on numpy's reduction strategy.
    """
    diff = x[:, None, :] - y[None, :, :]
    sq = np.zeros(diff.shape[:2])
    for k in range(diff.shape[2]):
        sq += diff[:, :, k] ** 2
    return np.sqrt(sq)


def accumulated_cost(cost: np.ndarray) -> np.ndarray:
    """DTW accumulation over a full cost matrix with steps (1,0), (0,1), (1,1).

    Filled one anti-diagonal at a time; every cell on diagonal i+j only
    depends on the two previous diagonals.
    """
    n, m = cost.shape
    acc = np.full((n + 1, m + 1), np.inf)
    acc[0, 0] = 0.0
    for diag in range(n + m - 1):
        i = np.arange(max(0, diag - m + 1), min(n, diag + 1))
        j = diag - i
        best = np.minimum(np.minimum(acc[i, j + 1], acc[i + 1, j]), acc[i, j])
        acc[i + 1, j + 1] = best + cost[i, j]
    return acc[1:, 1:]


def _backtrack(acc: np.ndarray) -> tuple:
    i, j = acc.shape[0] - 1, acc.shape[1] - 1
    path = [(i, j)]
    while i > 0 or j > 0:
        candidates = []
        if i > 0 and j > 0:
            candidates.append((acc[i - 1, j - 1], i - 1, j - 1))
        if i > 0:
            candidates.append((acc[i - 1, j], i - 1, j))
        if j > 0:
            candidates.append((acc[i, j - 1], i, j - 1))
        # min keeps the first of equal costs, so the diagonal wins ties
        _, i, j = min(candidates, key=lambda c: c[0])
        path.append((i, j))
    return tuple(reversed(path))


def _zscore(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    both = np.vstack([x, y])
    mu = both.mean(axis=0)
    sd = both.std(axis=0)
    sd[sd == 0] = 1.0
    return (x - mu) / sd, (y - mu) / sd


def dtw(a: Trajectory, b: Trajectory, use: str = BOTH, normalize: bool = False) -> DtwResult:
    """Optimal warping cost and path between two trajectories.

    ``use`` picks which part of each step enters the local cost;
    ``normalize`` z-scores every dimension with statistics pooled over
    both trajectories before comparing.
    """
    x, y = a.vectors(use), b.vectors(use)
    if x.shape[1] != y.shape[1] or a.states.shape[1] != b.states.shape[1]:
        raise InvalidInputError(
            f"trajectory dimensions differ: {a.states.shape[1]}+{a.actions.shape[1]} "
            f"vs {b.states.shape[1]}+{b.actions.shape[1]}"
        )
    if a.actions.shape[1] != b.actions.shape[1]:
        raise InvalidInputError("trajectory action dimensions differ")
    if normalize:
        x, y = _zscore(x, y)
    acc = accumulated_cost(local_costs(x, y))
    return DtwResult(float(acc[-1, -1]), _backtrack(acc))


def dtw_distance(a: Trajectory, b: Trajectory, use: str = BOTH, normalize: bool = False) -> float:
    return dtw(a, b, use, normalize).distance


# --- trajectory files -----------------------------------------------------


def trajectory_to_jsonl(traj: Trajectory) -> str:
    rows = [
        json.dumps({"t": t, "state": s.tolist(), "action": a.tolist()})
        for t, (s, a) in enumerate(zip(traj.states, traj.actions))
    ]
    return "\n".join(rows) + "\n"


def parse_trajectory_jsonl(text: str) -> Trajectory:
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
            rows.append((int(row["t"]), [float(v) for v in row["state"]], [float(v) for v in row["action"]]))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise DatasetFormatError(f"line {lineno}: bad trajectory row ({exc})") from None
        if not (np.all(np.isfinite(rows[-1][1])) and np.all(np.isfinite(rows[-1][2]))):
            raise DatasetFormatError(f"line {lineno}: non-finite value")
    if not rows:
        raise DatasetFormatError("empty trajectory file")
    rows.sort(key=lambda r: r[0])
    try:
        return Trajectory(np.array([r[1] for r in rows]), np.array([r[2] for r in rows]))
    except ValueError as exc:
        raise DatasetFormatError(f"inconsistent trajectory rows ({exc})") from None


def read_trajectory(path) -> Trajectory:
    return parse_trajectory_jsonl(Path(path).read_text(encoding="utf-8"))


def write_trajectory(traj: Trajectory, path) -> None:
    atomic_write_text(path, trajectory_to_jsonl(traj))
