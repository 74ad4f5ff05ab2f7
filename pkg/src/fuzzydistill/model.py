"""First-order TSK rule base: membership functions, firing strengths and inference.

A trained :class:`FcsModel` stores its rule parameters as read-only numpy
arrays so that inference can be shared between threads without copying.

Shapes used throughout::

    centroids  (N, d)
    spreads    (N, d)
    weights    (N, m, d)
    biases     (N, m)
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .errors import InvalidInputError, ModelFormatError

FORMAT_VERSION = 1

SPREAD_FLOOR = 1e-6
ACTIVATION_EPSILON = 1e-12
DEFAULT_BETA = 1.5

GAUSSIAN = "gaussian"
TRIANGULAR = "triangular"
NEAREST_CENTROID = "nearest_centroid"


@dataclass(frozen=True)
class MembershipFamily:
    tag: str = TRIANGULAR
    beta: float = DEFAULT_BETA

    def __post_init__(self):
        tag = str(self.tag).lower()
        if tag not in (GAUSSIAN, TRIANGULAR):
            raise InvalidInputError(f"unknown membership family {self.tag!r}")
        if not (math.isfinite(self.beta) and self.beta > 0):
            raise InvalidInputError(f"beta must be positive, got {self.beta}")
        object.__setattr__(self, "tag", tag)
        object.__setattr__(self, "beta", float(self.beta))

    @classmethod
    def gaussian(cls) -> "MembershipFamily":
        return cls(GAUSSIAN, DEFAULT_BETA)

    @classmethod
    def triangular(cls, beta: float = DEFAULT_BETA) -> "MembershipFamily":
        return cls(TRIANGULAR, beta)


def membership(family: MembershipFamily, s_k, c, sigma):
    """Degree of membership of ``s_k`` in the fuzzy set centred at ``c``.

    Broadcasts over numpy arrays. Scalars in give a Python float back.
    """
    s_k = np.asarray(s_k, dtype=float)
    c = np.asarray(c, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if not (np.all(np.isfinite(s_k)) and np.all(np.isfinite(c)) and np.all(np.isfinite(sigma))):
        raise InvalidInputError("membership inputs must be finite")
    if np.any(sigma < SPREAD_FLOOR):
        raise InvalidInputError(f"spread below floor {SPREAD_FLOOR}")
    if family.tag == GAUSSIAN:
        mu = np.exp(-((s_k - c) ** 2) / (2.0 * sigma**2))
    else:
        left = c - family.beta * sigma
        right = c + family.beta * sigma
        with np.errstate(invalid="ignore", divide="ignore"):
            rising = (s_k - left) / (c - left)
            falling = (right - s_k) / (right - c)
        mu = np.maximum(0.0, np.minimum(rising, falling))
    if mu.ndim == 0:
        return float(mu)
    return mu


@dataclass(frozen=True)
class FuzzyRule:
    centroid: np.ndarray
    spread: np.ndarray
    weights: np.ndarray
    biases: np.ndarray

    def __post_init__(self):
        for name in ("centroid", "spread", "weights", "biases"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        d = self.centroid.shape[0]
        if self.centroid.ndim != 1 or self.spread.shape != (d,):
            raise InvalidInputError("centroid and spread must be vectors of equal length")
        if self.weights.ndim != 2 or self.weights.shape[1] != d:
            raise InvalidInputError(f"weights must have shape (m, {d})")
        if self.biases.shape != (self.weights.shape[0],):
            raise InvalidInputError("biases must have one entry per action dimension")


def local_consequent(rule: FuzzyRule, s) -> np.ndarray:
    """Action dimension j is dot(weights[j], s) + biases[j].

    Accumulates over state dimensions in the same fixed order as batch
    inference, so a single-rule model reproduces this value exactly.
    """
    s = _as_state(s, rule.centroid.shape[0])
    acc = np.zeros(rule.biases.shape[0])
    for k in range(s.shape[0]):
        acc += rule.weights[:, k] * s[k]
    return acc + rule.biases


def _frozen(arr, shape, name) -> np.ndarray:
    out = np.array(arr, dtype=float)
    if out.shape != shape:
        raise InvalidInputError(f"{name} has shape {out.shape}, expected {shape}")
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class FcsModel:
    """Immutable TSK rule base.

    ``feature_std`` is optional bookkeeping (population std of each state
    dimension in the training data); rule rendering uses it to decide
    which antecedent clauses are worth printing.
    """

    centroids: np.ndarray
    spreads: np.ndarray
    weights: np.ndarray
    biases: np.ndarray
    family: MembershipFamily = field(default_factory=MembershipFamily)
    lam: float = 0.1
    feature_names: tuple = ()
    action_names: tuple = ()
    fallback: str = NEAREST_CENTROID
    feature_std: np.ndarray | None = None

    def __post_init__(self):
        centroids = np.array(self.centroids, dtype=float)
        if centroids.ndim != 2 or centroids.shape[0] < 1:
            raise InvalidInputError("model needs at least one rule")
        n, d = centroids.shape
        weights = np.array(self.weights, dtype=float)
        if weights.ndim != 3 or weights.shape[0] != n or weights.shape[2] != d:
            raise InvalidInputError(f"weights must have shape ({n}, m, {d})")
        m = weights.shape[1]
        object.__setattr__(self, "centroids", _frozen(centroids, (n, d), "centroids"))
        object.__setattr__(self, "spreads", _frozen(self.spreads, (n, d), "spreads"))
        object.__setattr__(self, "weights", _frozen(weights, (n, m, d), "weights"))
        object.__setattr__(self, "biases", _frozen(self.biases, (n, m), "biases"))
        for name in ("centroids", "spreads", "weights", "biases"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise InvalidInputError(f"{name} must be finite")
        if np.any(self.spreads < SPREAD_FLOOR):
            i, k = np.argwhere(self.spreads < SPREAD_FLOOR)[0]
            raise InvalidInputError(f"rule {i} dimension {k}: spread below floor {SPREAD_FLOOR}")
        if self.feature_std is not None:
            object.__setattr__(self, "feature_std", _frozen(self.feature_std, (d,), "feature_std"))
        names = tuple(self.feature_names) or tuple(f"s{k}" for k in range(d))
        actions = tuple(self.action_names) or tuple(f"a{j}" for j in range(m))
        if len(names) != d or len(actions) != m:
            raise InvalidInputError("feature/action name counts do not match dimensions")
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "action_names", actions)
        object.__setattr__(self, "lam", float(self.lam))
        if self.fallback != NEAREST_CENTROID:
            raise InvalidInputError(f"unsupported fallback {self.fallback!r}")

    @property
    def n_rules(self) -> int:
        return self.centroids.shape[0]

    @property
    def d(self) -> int:
        return self.centroids.shape[1]

    @property
    def m(self) -> int:
        return self.weights.shape[1]

    def rule(self, i: int) -> FuzzyRule:
        return FuzzyRule(self.centroids[i], self.spreads[i], self.weights[i], self.biases[i])

    @property
    def rules(self) -> list[FuzzyRule]:
        return [self.rule(i) for i in range(self.n_rules)]

    @classmethod
    def from_rules(cls, rules: Sequence[FuzzyRule], **kwargs) -> "FcsModel":
        return cls(
            centroids=np.stack([r.centroid for r in rules]),
            spreads=np.stack([r.spread for r in rules]),
            weights=np.stack([r.weights for r in rules]),
            biases=np.stack([r.biases for r in rules]),
            **kwargs,
        )

    def permuted(self, order: Sequence[int]) -> "FcsModel":
        order = np.asarray(order)
        return FcsModel(
            self.centroids[order], self.spreads[order], self.weights[order], self.biases[order],
            family=self.family, lam=self.lam, feature_names=self.feature_names,
            action_names=self.action_names, fallback=self.fallback, feature_std=self.feature_std,
        )

    def __eq__(self, other):
        if not isinstance(other, FcsModel):
            return NotImplemented
        std_eq = (self.feature_std is None and other.feature_std is None) or (
            self.feature_std is not None
            and other.feature_std is not None
            and np.array_equal(self.feature_std, other.feature_std)
        )
        return (
            self.family == other.family
            and self.lam == other.lam
            and self.feature_names == other.feature_names
            and self.action_names == other.action_names
            and self.fallback == other.fallback
            and std_eq
            and all(
                np.array_equal(getattr(self, f), getattr(other, f))
                for f in ("centroids", "spreads", "weights", "biases")
            )
        )

    __hash__ = None

    def __call__(self, s) -> np.ndarray:
        return infer(self, s)[0]


def _as_state(s, d: int) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if s.shape != (d,):
        raise InvalidInputError(f"state has shape {s.shape}, expected ({d},)")
    if not np.all(np.isfinite(s)):
        raise InvalidInputError("state must be finite")
    return s


def _as_states(states, d: int) -> np.ndarray:
    states = np.asarray(states, dtype=float)
    if states.ndim == 1:
        states = states[None, :]
    if states.ndim != 2 or states.shape[1] != d:
        raise InvalidInputError(f"states have shape {states.shape}, expected (n, {d})")
    if not np.all(np.isfinite(states)):
        raise InvalidInputError("states must be finite")
    return states


def memberships(model: FcsModel, states) -> np.ndarray:
    """Per-rule, per-dimension memberships, shape (n, N, d)."""
    states = _as_states(states, model.d)
    return membership(model.family, states[:, None, :], model.centroids[None], model.spreads[None])


def activation_matrix(family: MembershipFamily, centroids, spreads, states) -> np.ndarray:
    """Firing strength of each rule (given by centroid/spread rows) at each state, shape (n, N)."""
    states = np.asarray(states, dtype=float)
    mu = membership(family, states[:, None, :], np.asarray(centroids)[None], np.asarray(spreads)[None])
    # fixed left-to-right product so a rule's value never depends on its position
    alpha = mu[:, :, 0].copy()
    for k in range(1, mu.shape[2]):
        alpha *= mu[:, :, k]
    return alpha


def firing_strengths(model: FcsModel, states) -> np.ndarray:
    """Rule activations for a batch of states, shape (n, N)."""
    states = _as_states(states, model.d)
    return activation_matrix(model.family, model.centroids, model.spreads, states)


def firing_strength(model: FcsModel, rule_index: int, s) -> float:
    if not 0 <= rule_index < model.n_rules:
        raise InvalidInputError(f"rule index {rule_index} out of range")
    s = _as_state(s, model.d)
    return float(firing_strengths(model, s)[0, rule_index])


def consequents(model: FcsModel, states) -> np.ndarray:
    """Local linear outputs of every rule, shape (n, N, m)."""
    states = _as_states(states, model.d)
    out = np.broadcast_to(model.biases[None], (states.shape[0], model.n_rules, model.m)).copy()
    acc = np.zeros_like(out)
    for k in range(model.d):
        acc += model.weights[None, :, :, k] * states[:, None, None, k]
    return acc + out


def nearest_centroid(model: FcsModel, states) -> np.ndarray:
    states = _as_states(states, model.d)
    diff = states[:, None, :] - model.centroids[None]
    dist2 = np.zeros(diff.shape[:2])
    for k in range(model.d):
        dist2 += diff[:, :, k] ** 2
    # argmin returns the first minimum, so ties go to the lowest rule index
    return np.argmin(dist2, axis=1)


def aggregate(activations, local_outputs) -> np.ndarray:
    """Activation-weighted average of rule outputs.

    ``activations`` is (n, N), ``local_outputs`` is (n, N, m). Rows whose
    total activation is at or below ACTIVATION_EPSILON come back as NaN.
    Terms are summed in sorted order so the result does not depend on rule
    order, and clamped to the hull of the contributing outputs to absorb
    rounding.
    """
    alpha = np.asarray(activations, dtype=float)
    f = np.asarray(local_outputs, dtype=float)
    num_terms = np.sort(alpha[:, :, None] * f, axis=1)
    den_terms = np.sort(alpha, axis=1)
    num = np.zeros((f.shape[0], f.shape[2]))
    den = np.zeros(f.shape[0])
    for i in range(alpha.shape[1]):
        num += num_terms[:, i, :]
        den += den_terms[:, i]
    active = den > ACTIVATION_EPSILON
    out = np.full(num.shape, np.nan)
    out[active] = num[active] / den[active, None]
    on = (alpha > 0)[:, :, None]
    lo = np.where(on, f, np.inf).min(axis=1)
    hi = np.where(on, f, -np.inf).max(axis=1)
    out[active] = np.clip(out[active], lo[active], hi[active])
    return out


def infer_batch(model: FcsModel, states) -> tuple[np.ndarray, np.ndarray]:
    """Actions (n, m) and raw activations (n, N) for a batch of states."""
    states = _as_states(states, model.d)
    alpha = firing_strengths(model, states)
    f = consequents(model, states)
    actions = aggregate(alpha, f)
    dead = np.isnan(actions[:, 0])
    if np.any(dead):
        idx = nearest_centroid(model, states[dead])
        actions[dead] = f[np.flatnonzero(dead), idx]
    return actions, alpha


def infer(model: FcsModel, s) -> tuple[np.ndarray, np.ndarray]:
    s = _as_state(s, model.d)
    actions, alpha = infer_batch(model, s[None])
    return actions[0], alpha[0]


# --- serialization -------------------------------------------------------


def to_dict(model: FcsModel) -> dict:
    doc = {
        "version": FORMAT_VERSION,
        "family": model.family.tag,
        "beta": model.family.beta,
        "lambda": model.lam,
        "d": model.d,
        "m": model.m,
        "feature_names": list(model.feature_names),
        "action_names": list(model.action_names),
        "fallback": model.fallback,
        "rules": [
            {
                "centroid": model.centroids[i].tolist(),
                "spread": model.spreads[i].tolist(),
                "weights": model.weights[i].tolist(),
                "biases": model.biases[i].tolist(),
            }
            for i in range(model.n_rules)
        ],
    }
    if model.feature_std is not None:
        doc["feature_std"] = model.feature_std.tolist()
    return doc


def serialize(model: FcsModel) -> bytes:
    # json writes floats with repr(), which round-trips exactly
    return (json.dumps(to_dict(model), indent=1, allow_nan=False) + "\n").encode("utf-8")


def _require(doc: dict, key: str, path: str):
    if key not in doc:
        raise ModelFormatError(f"{path}{key}: missing field")
    return doc[key]


def _numbers(value, shape: tuple, path: str) -> np.ndarray:
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ModelFormatError(f"{path}: not a numeric array ({exc})") from None
    if arr.shape != shape:
        raise ModelFormatError(f"{path}: shape {arr.shape}, expected {shape}")
    if not np.all(np.isfinite(arr)):
        raise ModelFormatError(f"{path}: non-finite value")
    return arr


def from_dict(doc: Any) -> FcsModel:
    if not isinstance(doc, dict):
        raise ModelFormatError("<root>: expected a JSON object")
    version = _require(doc, "version", "")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"version: unsupported model version {version!r}")
    d = _require(doc, "d", "")
    m = _require(doc, "m", "")
    if not (isinstance(d, int) and d >= 1 and isinstance(m, int) and m >= 1):
        raise ModelFormatError("d/m: must be positive integers")
    try:
        family = MembershipFamily(_require(doc, "family", ""), float(_require(doc, "beta", "")))
    except (InvalidInputError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"family/beta: {exc}") from None
    lam = _require(doc, "lambda", "")
    if not isinstance(lam, (int, float)) or not math.isfinite(lam) or lam < 0:
        raise ModelFormatError("lambda: must be a non-negative number")
    rules = _require(doc, "rules", "")
    if not isinstance(rules, list) or len(rules) == 0:
        raise ModelFormatError("rules: at least one rule is required")
    cs, ss, ws, bs = [], [], [], []
    for i, rule in enumerate(rules):
        path = f"rules[{i}]."
        if not isinstance(rule, dict):
            raise ModelFormatError(f"rules[{i}]: expected an object")
        cs.append(_numbers(_require(rule, "centroid", path), (d,), path + "centroid"))
        spread = _numbers(_require(rule, "spread", path), (d,), path + "spread")
        bad = np.flatnonzero(spread < SPREAD_FLOOR)
        if bad.size:
            raise ModelFormatError(
                f"{path}spread[{bad[0]}]: rule {i} dimension {bad[0]} has spread "
                f"{spread[bad[0]]!r} below floor {SPREAD_FLOOR}"
            )
        ss.append(spread)
        ws.append(_numbers(_require(rule, "weights", path), (m, d), path + "weights"))
        bs.append(_numbers(_require(rule, "biases", path), (m,), path + "biases"))
    feature_std = None
    if doc.get("feature_std") is not None:
        feature_std = _numbers(doc["feature_std"], (d,), "feature_std")
    try:
        return FcsModel(
            np.stack(cs), np.stack(ss), np.stack(ws), np.stack(bs),
            family=family, lam=float(lam),
            feature_names=tuple(_require(doc, "feature_names", "")),
            action_names=tuple(_require(doc, "action_names", "")),
            fallback=doc.get("fallback", NEAREST_CENTROID),
            feature_std=feature_std,
        )
    except InvalidInputError as exc:
        raise ModelFormatError(str(exc)) from None


def deserialize(data: bytes | str) -> FcsModel:
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"<root>: invalid JSON ({exc})") from None
    return from_dict(doc)


def save_model(model: FcsModel, path) -> None:
    from .io import atomic_write_bytes

    atomic_write_bytes(path, serialize(model))


def load_model(path) -> FcsModel:
    with open(path, "rb") as fh:
        return deserialize(fh.read())
