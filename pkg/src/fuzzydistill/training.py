"""Fitting a TSK rule base from teacher data.

Antecedents come from K-Means over the training states (one rule per
cluster, spread = per-dimension std of the members). Each rule's linear
consequent is then fitted by ridge regression with samples weighted by that
rule's firing strength.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import linalg

from .dataset import Dataset
from .errors import InvalidInputError, NumericalError
from .model import (
    ACTIVATION_EPSILON,
    SPREAD_FLOOR,
    FcsModel,
    MembershipFamily,
    activation_matrix,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    n_rules: int = 16
    family: MembershipFamily = field(default_factory=MembershipFamily)
    lam: float = 0.1
    seed: int = 42
    kmeans_max_iter: int = 300
    kmeans_tol: float = 1e-6
    train_fraction: float = 0.8
    # cluster and fit in z-scored state units, then map back to raw units
    standardize: bool = True

    def __post_init__(self):
        if int(self.n_rules) != self.n_rules or self.n_rules < 1:
            raise InvalidInputError(f"n_rules must be a positive integer, got {self.n_rules}")
        if not self.lam >= 0:
            raise InvalidInputError(f"lambda must be >= 0, got {self.lam}")
        if self.kmeans_max_iter < 1 or not self.kmeans_tol >= 0:
            raise InvalidInputError("kmeans_max_iter must be >= 1 and kmeans_tol >= 0")
        if not 0 < self.train_fraction <= 1:
            raise InvalidInputError(f"train_fraction must be in (0, 1], got {self.train_fraction}")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["family"] = {"tag": self.family.tag, "beta": self.family.beta}
        out["lambda"] = out.pop("lam")
        return out


# --- level 1: antecedents ------------------------------------------------


@dataclass
class KMeansResult:
    centroids: np.ndarray
    assignments: np.ndarray
    inertia: float
    inertia_history: list
    n_iter: int


def _sq_distances(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # explicit differences rather than the |x|^2 - 2xc + |c|^2 expansion:
    # slower but exact to rounding, and the summation order is fixed
    diff = x[:, None, :] - centroids[None, :, :]
    out = np.zeros(diff.shape[:2])
    for k in range(x.shape[1]):
        out += diff[:, :, k] ** 2
    return out


def _kmeans_pp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    chosen = [int(rng.integers(n))]
    closest = _sq_distances(x, x[chosen])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = int(rng.choice(n, p=closest / total))
        else:
            idx = int(rng.integers(n))
        chosen.append(idx)
        closest = np.minimum(closest, _sq_distances(x, x[idx : idx + 1])[:, 0])
    return x[chosen].copy()


def kmeans_fit(states, n_clusters: int, seed: int = 0, max_iter: int = 300, tol: float = 1e-6) -> KMeansResult:
    """Lloyd's algorithm with k-means++ seeding.

    Stops when no centroid moves by ``tol`` or more (Euclidean), or after
    ``max_iter`` updates. A cluster that ends up empty is moved onto the
    point currently farthest from its own centroid. ``inertia_history``
    holds the inertia after every assignment step and never increases.
    """
    x = np.asarray(states, dtype=float)
    if x.ndim != 2:
        raise InvalidInputError("states must be a 2-D array")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("states must be finite")
    if n_clusters < 1:
        raise InvalidInputError("n_clusters must be >= 1")
    if x.shape[0] < n_clusters:
        raise InvalidInputError(f"{x.shape[0]} points cannot form {n_clusters} clusters")

    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp(x, n_clusters, rng)
    history = []
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        d2 = _sq_distances(x, centroids)
        assign = np.argmin(d2, axis=1)
        own = d2[np.arange(x.shape[0]), assign]
        history.append(float(np.sum(own)))

        new = centroids.copy()
        taken = set()
        for j in range(n_clusters):
            members = assign == j
            if np.any(members):
                new[j] = x[members].mean(axis=0)
            else:
                for idx in np.argsort(-own, kind="stable"):
                    if int(idx) not in taken:
                        taken.add(int(idx))
                        new[j] = x[idx]
                        break
        shift = float(np.max(np.sqrt(np.sum((new - centroids) ** 2, axis=1))))
        centroids = new
        if shift < tol:
            break

    d2 = _sq_distances(x, centroids)
    assign = np.argmin(d2, axis=1)
    inertia = float(np.sum(d2[np.arange(x.shape[0]), assign]))
    history.append(inertia)
    return KMeansResult(centroids, assign, inertia, history, n_iter)


def estimate_spreads(states, assignments, centroids) -> np.ndarray:
    """Per-cluster population std of every dimension, floored at SPREAD_FLOOR."""
    x = np.asarray(states, dtype=float)
    assignments = np.asarray(assignments)
    n_clusters, d = np.asarray(centroids).shape
    spreads = np.full((n_clusters, d), SPREAD_FLOOR)
    for i in range(n_clusters):
        members = x[assignments == i]
        if members.shape[0] > 1:
            spreads[i] = np.maximum(members.std(axis=0), SPREAD_FLOOR)
    return spreads


# --- level 2: consequents -------------------------------------------------


def weighted_ridge(states, targets, weights, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Minimise sum_j w_j (y_j - W s_j - b)^2 + lam |W|^2 with b left unpenalised.

    Returns ``(W, b)`` with shapes (m, d) and (m,). Solves the normal
    equations with a Cholesky factorisation; raises ``np.linalg.LinAlgError``
    when the system is not positive definite.
    """
    x = np.asarray(states, dtype=float)
    y = np.asarray(targets, dtype=float)
    w = np.asarray(weights, dtype=float)
    n, d = x.shape
    xa = np.hstack([x, np.ones((n, 1))])
    xw = xa * w[:, None]
    gram = xa.T @ xw
    gram[np.arange(d), np.arange(d)] += lam
    rhs = xw.T @ y
    factor = linalg.cho_factor(gram, lower=True, check_finite=True)
    sol = linalg.cho_solve(factor, rhs)
    if not np.all(np.isfinite(sol)):
        raise np.linalg.LinAlgError("non-finite solution")
    return sol[:d].T.copy(), sol[d].copy()


@dataclass
class ConsequentFit:
    weights: np.ndarray  # (N, m, d)
    biases: np.ndarray  # (N, m)
    mass: np.ndarray  # (N,) total activation per rule
    low_support: np.ndarray  # (N,) bool


def fit_consequents(dataset: Dataset, centroids, spreads, family: MembershipFamily, lam: float, workers: int = 1) -> ConsequentFit:
    """Fit every rule's linear consequent by activation-weighted ridge regression.

    Rules with total activation mass below ACTIVATION_EPSILON get zero
    weights and a bias equal to the global mean action, each sample weighted
    by its summed activation over all rules (plain mean if that is zero too).
    """
    if lam < 0:
        raise InvalidInputError("lambda must be >= 0")
    centroids = np.asarray(centroids, dtype=float)
    spreads = np.asarray(spreads, dtype=float)
    x, y = dataset.states, dataset.actions
    alpha = activation_matrix(family, centroids, spreads, x)
    mass = alpha.sum(axis=0)
    n_rules, d, m = centroids.shape[0], x.shape[1], y.shape[1]

    total = alpha.sum(axis=1)
    if total.sum() > 0:
        fallback_bias = (total[:, None] * y).sum(axis=0) / total.sum()
    else:
        fallback_bias = y.mean(axis=0)

    def solve(i):
        if mass[i] < ACTIVATION_EPSILON:
            return np.zeros((m, d)), fallback_bias.copy(), True
        try:
            wi, bi = weighted_ridge(x, y, alpha[:, i], lam)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise NumericalError(f"rule {i}: normal equations are singular (lambda={lam}): {exc}") from None
        return wi, bi, False

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(solve, range(n_rules)))
    else:
        results = [solve(i) for i in range(n_rules)]

    weights = np.stack([r[0] for r in results])
    biases = np.stack([r[1] for r in results])
    low = np.array([r[2] for r in results])
    if np.any(low):
        log.warning("rules with no activation mass: %s", np.flatnonzero(low).tolist())
    return ConsequentFit(weights, biases, mass, low)


# --- full pipeline --------------------------------------------------------


@dataclass
class SplitReport:
    train_indices: list
    validation_indices: list
    kmeans_iterations: int
    kmeans_inertia: float
    low_support_rules: list

    def to_dict(self) -> dict:
        return asdict(self)


def split_indices(n: int, train_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_train = min(n, max(1, int(round(train_fraction * n))))
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def standardizer(states) -> tuple[np.ndarray, np.ndarray]:
    """Per-dimension mean and std of ``states``; constant dimensions get std 1."""
    mu = states.mean(axis=0)
    sd = states.std(axis=0)
    sd[sd == 0] = 1.0
    return mu, sd


def distill(dataset: Dataset, config: TrainConfig, feature_names=(), action_names=(), workers: int = 1) -> tuple[FcsModel, SplitReport]:
    """Train/validation split, K-Means antecedents, ridge consequents.

    With ``config.standardize`` the clustering, spreads and ridge fits run on
    z-scored training states (so lambda penalises every dimension on the
    same scale) and the result is mapped back exactly to raw-unit centroids,
    spreads, weights and biases. The returned model always takes raw states.
    """
    train_idx, val_idx = split_indices(len(dataset), config.train_fraction, config.seed)
    if train_idx.size < config.n_rules:
        raise InvalidInputError(
            f"{train_idx.size} training samples cannot support {config.n_rules} rules"
        )
    train = dataset.subset(train_idx)
    if config.standardize:
        mu, sd = standardizer(train.states)
    else:
        mu, sd = np.zeros(dataset.d), np.ones(dataset.d)
    z = (train.states - mu) / sd
    km = kmeans_fit(z, config.n_rules, config.seed, config.kmeans_max_iter, config.kmeans_tol)
    spreads = estimate_spreads(z, km.assignments, km.centroids)
    fit = fit_consequents(Dataset(z, train.actions), km.centroids, spreads, config.family, config.lam, workers=workers)
    if config.standardize:
        # a = Wz (s - mu)/sd + bz  =>  W = Wz/sd, b = bz - W mu
        weights = fit.weights / sd
        biases = fit.biases - np.einsum("imk,k->im", weights, mu)
        centroids = km.centroids * sd + mu
        spreads = np.maximum(spreads * sd, SPREAD_FLOOR)
    else:
        weights, biases, centroids = fit.weights, fit.biases, km.centroids
    model = FcsModel(
        centroids, spreads, weights, biases,
        family=config.family, lam=config.lam,
        feature_names=tuple(feature_names), action_names=tuple(action_names),
        feature_std=train.states.std(axis=0),
    )
    report = SplitReport(
        train_indices=train_idx.tolist(),
        validation_indices=val_idx.tolist(),
        kmeans_iterations=km.n_iter,
        kmeans_inertia=km.inertia,
        low_support_rules=np.flatnonzero(fit.low_support).tolist(),
    )
    return model, report
