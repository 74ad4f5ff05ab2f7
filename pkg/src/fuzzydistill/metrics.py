"""Fidelity and explainability metrics for a trained rule base.

FRAD  concentration of normalised activations (sum of squared shares).
FSC   mean over states and dimensions of the best membership of any rule.
ASG   population variance of rule biases, averaged over action dimensions.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy import stats

from .dataset import Dataset
from .errors import InvalidInputError
from .model import FcsModel, infer_batch, memberships

DEFAULT_TAU = 0.1


def frad(activations) -> float:
    """Focus of one activation vector, in [1/N, 1].

    All-zero input (the zero-activation fallback case) returns 1.0; use
    :func:`frad_batch` to see which rows were flagged.
    """
    values, _ = frad_batch(np.asarray(activations, dtype=float)[None, :])
    return float(values[0])


def frad_batch(activations) -> tuple[np.ndarray, np.ndarray]:
    """Per-row FRAD and a mask of rows whose activations were all zero."""
    alpha = np.asarray(activations, dtype=float)
    if alpha.ndim != 2:
        raise InvalidInputError("activations must be 2-D (states x rules)")
    if np.any(alpha < 0) or not np.all(np.isfinite(alpha)):
        raise InvalidInputError("activations must be finite and non-negative")
    total = alpha.sum(axis=1)
    zero = total <= 0
    out = np.ones(alpha.shape[0])
    share = alpha[~zero] / total[~zero, None]
    # Cauchy-Schwarz bounds; the clip only absorbs rounding
    out[~zero] = np.clip(np.sum(share**2, axis=1), 1.0 / alpha.shape[1], 1.0)
    return out, zero


def mean_frad(model: FcsModel, states) -> float:
    """Mean FRAD over states with non-zero total activation (1.0 if there are none)."""
    _, alpha = infer_batch(model, states)
    values, zero = frad_batch(alpha)
    if np.all(zero):
        return 1.0
    return float(values[~zero].mean())


def max_memberships(model: FcsModel, states) -> np.ndarray:
    """Best membership of any rule, per state and dimension: shape (n, d)."""
    return memberships(model, states).max(axis=1)


def fsc(model: FcsModel, states) -> float:
    mm = max_memberships(model, states)
    if mm.shape[0] == 0:
        raise InvalidInputError("fsc needs at least one state")
    return float(mm.mean(axis=1).mean())


def asg(model: FcsModel) -> float:
    # np.var divides by N, matching the printed definition. Shifting by the
    # first rule's bias first makes identical biases give exactly 0.
    b = model.biases - model.biases[:1]
    return float(np.var(b, axis=0).mean())


def fidelity_from_predictions(pred, target, tau: float = DEFAULT_TAU) -> float:
    if not tau > 0:
        raise InvalidInputError("tau must be positive")
    err = np.max(np.abs(np.asarray(pred) - np.asarray(target)), axis=1)
    return 100.0 * float(np.count_nonzero(err <= tau)) / err.shape[0]


def fidelity(model, dataset: Dataset, tau: float = DEFAULT_TAU) -> float:
    """Percent of samples whose worst per-dimension action error is at most ``tau``."""
    return fidelity_from_predictions(predict(model, dataset.states), dataset.actions, tau)


def mse_from_predictions(pred, target) -> float:
    pred, target = np.asarray(pred), np.asarray(target)
    if pred.size == 0:
        raise InvalidInputError("mse needs at least one sample")
    return float(np.mean((pred - target) ** 2))


def mse(model, dataset: Dataset) -> float:
    return mse_from_predictions(predict(model, dataset.states), dataset.actions)


def predict(model, states) -> np.ndarray:
    """Batch prediction for an FcsModel, or anything with ``predict(states)``."""
    if isinstance(model, FcsModel):
        return infer_batch(model, states)[0]
    return np.asarray(model.predict(states))


def paired_t_test(sample_a, sample_b) -> tuple[float, float]:
    """Paired t statistic of ``a - b`` and its two-sided p-value (df = n - 1)."""
    a = np.asarray(sample_a, dtype=float)
    b = np.asarray(sample_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise InvalidInputError("paired samples must be 1-D and of equal length")
    if a.size < 2:
        raise InvalidInputError("paired t-test needs at least two pairs")
    diff = a - b
    sd = float(np.std(diff, ddof=1))
    if not np.any(diff != 0):
        raise InvalidInputError("all paired differences are zero")
    if sd == 0:
        raise InvalidInputError("paired differences have zero variance")
    n = diff.size
    t = float(diff.mean() / (sd / math.sqrt(n)))
    p = float(2.0 * stats.t.sf(abs(t), df=n - 1))
    return t, p


@dataclass
class MetricsReport:
    fidelity_percent: float
    mse: float
    mean_frad: float
    fsc: float
    asg: float
    n_samples: int
    tau: float
    zero_activation_count: int = 0
    n_rules: int = 0
    family: str = ""

    def to_dict(self) -> dict:
        return asdict(self)

    def to_csv(self) -> str:
        buf = io.StringIO()
        names = [f.name for f in fields(self)]
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(names)
        writer.writerow([repr(v) if isinstance(v, float) else v for v in (getattr(self, n) for n in names)])
        return buf.getvalue()


REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "MetricsReport",
    "type": "object",
    "required": [
        "fidelity_percent", "mse", "mean_frad", "fsc", "asg", "n_samples", "tau",
        "zero_activation_count",
    ],
    "properties": {
        "fidelity_percent": {"type": "number", "minimum": 0, "maximum": 100},
        "mse": {"type": "number", "minimum": 0},
        "mean_frad": {"type": "number", "minimum": 0, "maximum": 1},
        "fsc": {"type": "number", "minimum": 0, "maximum": 1},
        "asg": {"type": "number", "minimum": 0},
        "n_samples": {"type": "integer", "minimum": 1},
        "tau": {"type": "number", "exclusiveMinimum": 0},
        "zero_activation_count": {"type": "integer", "minimum": 0},
        "n_rules": {"type": "integer", "minimum": 0},
        "family": {"type": "string"},
    },
    "additionalProperties": False,
}


def evaluate(model: FcsModel, dataset: Dataset, tau: float = DEFAULT_TAU) -> MetricsReport:
    if len(dataset) == 0:
        raise InvalidInputError("cannot evaluate on an empty dataset")
    if dataset.d != model.d or dataset.m != model.m:
        raise InvalidInputError(
            f"dataset has d={dataset.d}, m={dataset.m} but model expects d={model.d}, m={model.m}"
        )
    pred, alpha = infer_batch(model, dataset.states)
    values, zero = frad_batch(alpha)
    return MetricsReport(
        fidelity_percent=fidelity_from_predictions(pred, dataset.actions, tau),
        mse=mse_from_predictions(pred, dataset.actions),
        mean_frad=float(values[~zero].mean()) if np.any(~zero) else 1.0,
        fsc=fsc(model, dataset.states),
        asg=asg(model),
        n_samples=len(dataset),
        tau=float(tau),
        zero_activation_count=int(np.count_nonzero(zero)),
        n_rules=model.n_rules,
        family=model.family.tag,
    )
