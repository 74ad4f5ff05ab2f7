"""State-action datasets and their CSV / JSONL file formats.

CSV header: ``s0..s{d-1},a0..a{m-1}[,episode]``.
JSONL rows: ``{"state": [...], "action": [...], "episode": int}``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DatasetFormatError, InvalidInputError
from .io import atomic_write_text


@dataclass(frozen=True, eq=False)
class Dataset:
    states: np.ndarray
    actions: np.ndarray
    episode_starts: tuple = (0,)

    def __post_init__(self):
        states = np.array(self.states, dtype=float)
        actions = np.array(self.actions, dtype=float)
        if states.ndim != 2 or actions.ndim != 2:
            raise InvalidInputError("states and actions must be 2-D arrays")
        if states.shape[0] != actions.shape[0]:
            raise InvalidInputError(
                f"{states.shape[0]} states but {actions.shape[0]} actions"
            )
        if not (np.all(np.isfinite(states)) and np.all(np.isfinite(actions))):
            raise InvalidInputError("dataset entries must be finite")
        starts = tuple(sorted({int(i) for i in self.episode_starts}))
        if states.shape[0] and (not starts or starts[0] != 0):
            starts = (0,) + starts
        if any(i < 0 or i >= max(states.shape[0], 1) for i in starts):
            raise InvalidInputError("episode start out of range")
        states.setflags(write=False)
        actions.setflags(write=False)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "actions", actions)
        object.__setattr__(self, "episode_starts", starts)

    def __len__(self):
        return self.states.shape[0]

    @property
    def d(self) -> int:
        return self.states.shape[1]

    @property
    def m(self) -> int:
        return self.actions.shape[1]

    def episode_ids(self) -> np.ndarray:
        ids = np.zeros(len(self), dtype=int)
        for start in self.episode_starts[1:]:
            ids[start:] += 1
        return ids

    def subset(self, indices: Sequence[int]) -> "Dataset":
        """Rows at ``indices`` (kept in the given order). Episode info is dropped."""
        idx = np.asarray(indices, dtype=int)
        return Dataset(self.states[idx], self.actions[idx])

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            np.array_equal(self.states, other.states)
            and np.array_equal(self.actions, other.actions)
            and self.episode_starts == other.episode_starts
        )

    __hash__ = None


def _fmt(x: float) -> str:
    return repr(float(x))


def dataset_to_csv(ds: Dataset) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = [f"s{k}" for k in range(ds.d)] + [f"a{j}" for j in range(ds.m)] + ["episode"]
    writer.writerow(header)
    for s, a, ep in zip(ds.states, ds.actions, ds.episode_ids()):
        writer.writerow([_fmt(v) for v in s] + [_fmt(v) for v in a] + [int(ep)])
    return buf.getvalue()


def dataset_to_jsonl(ds: Dataset) -> str:
    lines = []
    for s, a, ep in zip(ds.states, ds.actions, ds.episode_ids()):
        lines.append(json.dumps({"state": s.tolist(), "action": a.tolist(), "episode": int(ep)}))
    return "\n".join(lines) + ("\n" if lines else "")


def _starts_from_ids(ids: list) -> list:
    return [i for i in range(len(ids)) if i == 0 or ids[i] != ids[i - 1]]


def _finite(value, lineno: int, field: str) -> float:
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise DatasetFormatError(f"line {lineno}: {field} is not a number: {value!r}") from None
    if not math.isfinite(x):
        raise DatasetFormatError(f"line {lineno}: {field} is not finite: {value!r}")
    return x


def parse_csv(text: str) -> Dataset:
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise DatasetFormatError("line 1: empty file") from None
    s_cols = [i for i, h in enumerate(header) if h.startswith("s") and h[1:].isdigit()]
    a_cols = [i for i, h in enumerate(header) if h.startswith("a") and h[1:].isdigit()]
    ep_col = header.index("episode") if "episode" in header else None
    if not s_cols or not a_cols:
        raise DatasetFormatError("line 1: header must contain s0.. and a0.. columns")
    if [header[i] for i in s_cols] != [f"s{k}" for k in range(len(s_cols))] or [
        header[i] for i in a_cols
    ] != [f"a{j}" for j in range(len(a_cols))]:
        raise DatasetFormatError("line 1: state/action columns must be numbered contiguously from 0")
    states, actions, episodes = [], [], []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DatasetFormatError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        states.append([_finite(row[i], lineno, header[i]) for i in s_cols])
        actions.append([_finite(row[i], lineno, header[i]) for i in a_cols])
        if ep_col is not None:
            try:
                episodes.append(int(row[ep_col]))
            except ValueError:
                raise DatasetFormatError(f"line {lineno}: episode is not an integer") from None
    if not states:
        raise DatasetFormatError("no data rows")
    starts = _starts_from_ids(episodes) if ep_col is not None else [0]
    return Dataset(np.array(states), np.array(actions), tuple(starts))


def parse_jsonl(text: str) -> Dataset:
    states, actions, episodes = [], [], []
    have_episode = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetFormatError(f"line {lineno}: invalid JSON ({exc.msg})") from None
        if not isinstance(row, dict) or "state" not in row or "action" not in row:
            raise DatasetFormatError(f"line {lineno}: expected an object with state and action")
        if not isinstance(row["state"], list) or not isinstance(row["action"], list):
            raise DatasetFormatError(f"line {lineno}: state and action must be arrays")
        s = [_finite(v, lineno, f"state[{k}]") for k, v in enumerate(row["state"])]
        a = [_finite(v, lineno, f"action[{j}]") for j, v in enumerate(row["action"])]
        if states and (len(s) != len(states[0]) or len(a) != len(actions[0])):
            raise DatasetFormatError(f"line {lineno}: dimension differs from earlier rows")
        states.append(s)
        actions.append(a)
        has = "episode" in row
        if have_episode is None:
            have_episode = has
        if has:
            episodes.append(int(row["episode"]))
    if not states:
        raise DatasetFormatError("no data rows")
    starts = _starts_from_ids(episodes) if have_episode and len(episodes) == len(states) else [0]
    return Dataset(np.array(states), np.array(actions), tuple(starts))


def _is_jsonl(path: Path) -> bool:
    return path.suffix.lower() in (".jsonl", ".ndjson")


def read_dataset(path) -> Dataset:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        return parse_jsonl(text) if _is_jsonl(path) else parse_csv(text)
    except DatasetFormatError as exc:
        raise DatasetFormatError(f"{path}: {exc}") from None


def write_dataset(ds: Dataset, path) -> None:
    path = Path(path)
    atomic_write_text(path, dataset_to_jsonl(ds) if _is_jsonl(path) else dataset_to_csv(ds))
