"""Linguistic rendering of a rule base as IF-THEN text.

Each antecedent clause names the dimension, a label read off the rule
centroid through a per-dimension breakpoint scale, and the centroid itself::

    IF x is NEG (~-0.6100) AND vx is POS (~0.2000) THEN Action is [main = 0.3600, side = 0.7100] + linear terms

A clause is left out when the rule barely constrains that dimension, i.e.
its spread is at least ``salience_threshold`` times the dimension's global
std. The THEN part prints the rule biases; ``+ linear terms`` flags that the
consequent also depends on the state.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .io import load_config
from .model import FcsModel

DEFAULT_SALIENCE = 1.25
PRINT_DECIMALS = 4
# smallest |w| that is still visible at 4 decimals
WEIGHT_PRINT_THRESHOLD = 0.5 * 10.0**-PRINT_DECIMALS
ANY_STATE = "ANY"


@dataclass(frozen=True)
class LabelScale:
    """Ordered breakpoints b_0 < b_1 < ... splitting the line into len(b)+1 labels.

    Interval i is [b_{i-1}, b_i), so a value exactly on a breakpoint takes
    the label above it.
    """

    breakpoints: tuple
    labels: tuple

    def __post_init__(self):
        b = tuple(float(v) for v in self.breakpoints)
        labels = tuple(str(v) for v in self.labels)
        if len(labels) != len(b) + 1:
            raise InvalidInputError(f"{len(b)} breakpoints need {len(b) + 1} labels, got {len(labels)}")
        if any(not np.isfinite(v) for v in b):
            raise InvalidInputError("breakpoints must be finite")
        if any(hi <= lo for lo, hi in zip(b, b[1:])):
            raise InvalidInputError(f"breakpoints must be strictly increasing: {b}")
        if any(not re.fullmatch(r"[A-Za-z][A-Za-z0-9_]*", lab) for lab in labels):
            raise InvalidInputError(f"labels must be identifiers: {labels}")
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "labels", labels)

    def label(self, value: float) -> str:
        if not np.isfinite(value):
            raise InvalidInputError(f"cannot label non-finite value {value}")
        return self.labels[int(np.searchsorted(self.breakpoints, value, side="right"))]

    def to_dict(self) -> dict:
        return {"breakpoints": list(self.breakpoints), "labels": list(self.labels)}


SYMMETRIC = LabelScale((-0.3, 0.3), ("NEG", "ZERO", "POS"))
ALTITUDE = LabelScale((-0.3, 0.3, 2.5), ("NEG", "ZERO", "POS", "HIGH"))


@dataclass(frozen=True)
class LabelScheme:
    """Label scales per dimension, looked up by index first, then by feature name."""

    default: LabelScale = SYMMETRIC
    by_name: dict = field(default_factory=dict)
    by_index: dict = field(default_factory=dict)

    def scale_for(self, dimension: int, name: str | None = None) -> LabelScale:
        if dimension in self.by_index:
            return self.by_index[dimension]
        if name is not None and name in self.by_name:
            return self.by_name[name]
        return self.default

    def to_dict(self) -> dict:
        return {
            "default": self.default.to_dict(),
            "dimensions": {
                **{str(k): v.to_dict() for k, v in sorted(self.by_index.items())},
                **{k: v.to_dict() for k, v in sorted(self.by_name.items())},
            },
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "LabelScheme":
        """``{"default": {...}, "dimensions": {"y": {...}, "4": {...}}}``; digit keys are indices."""
        if not isinstance(doc, dict):
            raise InvalidInputError("label scheme must be a mapping")
        try:
            default = LabelScale(**doc["default"]) if "default" in doc else SYMMETRIC
            by_name, by_index = {}, {}
            for key, spec in (doc.get("dimensions") or {}).items():
                scale = LabelScale(**spec)
                if str(key).isdigit():
                    by_index[int(key)] = scale
                else:
                    by_name[str(key)] = scale
        except TypeError as exc:
            raise InvalidInputError(f"malformed label scheme: {exc}") from None
        return cls(default, by_name, by_index)

    @classmethod
    def from_file(cls, path) -> "LabelScheme":
        return cls.from_dict(load_config(path))


def default_scheme() -> LabelScheme:
    """NEG/ZERO/POS at +-0.3 everywhere; altitude ``y`` also gets HIGH above 2.5."""
    return LabelScheme(SYMMETRIC, {"y": ALTITUDE})


def assign_label(scheme: LabelScheme, dimension: int, value: float, name: str | None = None) -> str:
    return scheme.scale_for(dimension, name).label(float(value))


# --- rendering ------------------------------------------------------------


def _fmt(v: float) -> str:
    out = f"{v:.{PRINT_DECIMALS}f}"
    return "0.0000" if out == "-0.0000" else out


def _names(model: FcsModel) -> tuple[list, list]:
    feats = list(model.feature_names) or [f"s{k}" for k in range(model.d)]
    acts = list(model.action_names) or [f"a{j}" for j in range(model.m)]
    return feats, acts


def global_std(model: FcsModel) -> np.ndarray:
    """Per-dimension std of the operating domain.

    Uses the training std stored with the model when present. Otherwise
    falls back to the std of an equal-weight mixture with the rule centroids
    as means and the spreads as per-component std.
    """
    if model.feature_std is not None:
        return np.asarray(model.feature_std)
    second = np.mean(model.spreads**2 + model.centroids**2, axis=0)
    mean = model.centroids.mean(axis=0)
    return np.sqrt(np.maximum(second - mean**2, 0.0))


def salient_dimensions(model: FcsModel, rule_index: int, salience_threshold: float = DEFAULT_SALIENCE) -> list:
    if not salience_threshold > 0:
        raise InvalidInputError("salience_threshold must be positive")
    limit = salience_threshold * global_std(model)
    return [k for k in range(model.d) if model.spreads[rule_index, k] < limit[k]]


def render_rule(model: FcsModel, rule_index: int, scheme: LabelScheme | None = None,
                salience_threshold: float = DEFAULT_SALIENCE) -> str:
    if not 0 <= rule_index < model.n_rules:
        raise InvalidInputError(f"rule index {rule_index} out of range for {model.n_rules} rules")
    scheme = scheme or default_scheme()
    feats, acts = _names(model)
    clauses = []
    for k in salient_dimensions(model, rule_index, salience_threshold):
        c = float(model.centroids[rule_index, k])
        clauses.append(f"{feats[k]} is {assign_label(scheme, k, c, feats[k])} (~{_fmt(c)})")
    antecedent = " AND ".join(clauses) if clauses else ANY_STATE
    outputs = ", ".join(f"{acts[j]} = {_fmt(float(b))}" for j, b in enumerate(model.biases[rule_index]))
    text = f"IF {antecedent} THEN Action is [{outputs}]"
    if np.any(np.abs(model.weights[rule_index]) > WEIGHT_PRINT_THRESHOLD):
        text += " + linear terms"
    return text


# --- parsing --------------------------------------------------------------

_RULE_RE = re.compile(
    r"^(?:Rule (?P<num>\d+): )?IF (?P<ante>.+?) THEN Action is \[(?P<then>[^\]]*)\](?P<lin> \+ linear terms)?$"
)
_CLAUSE_RE = re.compile(r"^(?P<name>\S+) is (?P<label>[A-Za-z][A-Za-z0-9_]*) \(~(?P<value>-?\d+\.\d+)\)$")
_OUTPUT_RE = re.compile(r"^(?P<name>\S+) = (?P<value>-?\d+\.\d+)$")


@dataclass(frozen=True)
class ParsedRule:
    clauses: tuple  # ((name, label, centroid), ...)
    outputs: tuple  # ((name, bias), ...)
    linear_terms: bool
    number: int | None = None


def parse_rule(text: str) -> ParsedRule:
    """Inverse of :func:`render_rule` (up to print precision)."""
    m = _RULE_RE.match(text.strip())
    if not m:
        raise InvalidInputError(f"not a rendered rule: {text!r}")
    clauses = []
    if m["ante"] != ANY_STATE:
        for part in m["ante"].split(" AND "):
            cm = _CLAUSE_RE.match(part)
            if not cm:
                raise InvalidInputError(f"bad antecedent clause {part!r}")
            clauses.append((cm["name"], cm["label"], float(cm["value"])))
    outputs = []
    for part in m["then"].split(", ") if m["then"] else []:
        om = _OUTPUT_RE.match(part)
        if not om:
            raise InvalidInputError(f"bad consequent term {part!r}")
        outputs.append((om["name"], float(om["value"])))
    number = int(m["num"]) if m["num"] else None
    return ParsedRule(tuple(clauses), tuple(outputs), bool(m["lin"]), number)


def parse_rulebase(text: str) -> list:
    return [parse_rule(line) for line in text.splitlines() if line.startswith("Rule ")]


# --- documents ------------------------------------------------------------


@dataclass(frozen=True)
class RuleDocument:
    text: str
    data: dict

    def to_json(self) -> str:
        return json.dumps(self.data, indent=1, sort_keys=True, allow_nan=False) + "\n"


def export_rulebase(model: FcsModel, scheme: LabelScheme | None = None,
                    salience_threshold: float = DEFAULT_SALIENCE) -> RuleDocument:
    """Text listing (one ``Rule i:`` line per rule, in index order) plus the same content as JSON.

    The JSON carries exact centroids, spreads, weights and biases so
    nothing is lost to print rounding.
    """
    scheme = scheme or default_scheme()
    feats, acts = _names(model)
    header = (
        f"# {model.n_rules} rules, {model.family.tag} membership"
        + (f" (beta = {model.family.beta:g})" if model.family.tag == "triangular" else "")
        + f", salience threshold {salience_threshold:g}"
    )
    lines = [header, ""]
    rules = []
    for i in range(model.n_rules):
        text = render_rule(model, i, scheme, salience_threshold)
        lines.append(f"Rule {i + 1}: {text}")
        keep = salient_dimensions(model, i, salience_threshold)
        rules.append({
            "rule": i + 1,
            "text": text,
            "clauses": [
                {
                    "dimension": k,
                    "name": feats[k],
                    "label": assign_label(scheme, k, model.centroids[i, k], feats[k]),
                    "centroid": float(model.centroids[i, k]),
                    "spread": float(model.spreads[i, k]),
                }
                for k in keep
            ],
            "omitted": [feats[k] for k in range(model.d) if k not in keep],
            "biases": {acts[j]: float(model.biases[i, j]) for j in range(model.m)},
            "weights": {acts[j]: model.weights[i, j].tolist() for j in range(model.m)},
            "linear_terms": bool(np.any(np.abs(model.weights[i]) > WEIGHT_PRINT_THRESHOLD)),
        })
    data = {
        "n_rules": model.n_rules,
        "family": model.family.tag,
        "beta": model.family.beta,
        "salience_threshold": float(salience_threshold),
        "scheme": scheme.to_dict(),
        "rules": rules,
    }
    return RuleDocument("\n".join(lines) + "\n", data)
