"""Class-imbalance samplers gated by an imbalance-ratio threshold.

Applied to encoded, imputed training rows only, never to validation or
test rows. The majority class is the largest one (ties toward the lowest
label); every other class pools into the minority side. When the observed
ratio is at or below the sampler's threshold, every method is the
identity. Regression tasks skip this stage entirely.

Methods: random duplication over-sampling, random under-sampling,
interpolation-based synthetic over-sampling, and the three kNN cleaning
rules (mutual-pair removal, edited neighbors, condensed neighbors). The
cleaning rules use the threshold only as a gate, not as a target ratio.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .base import Component, as_float_matrix, check_no_missing
from .errors import BalancingError, ConfigurationError

logger = logging.getLogger(__name__)

BALANCE_METHODS = ("none", "random_over", "random_under", "smote", "tomek", "enn", "cnn")

# Ratio above which a classification dataset is reported as imbalanced.
DEFAULT_DETECTION_RATIO = 3.0


@dataclass(frozen=True)
class ImbalanceProfile:
    majority_class: int
    majority_count: int
    minority_count: int

    @property
    def ratio(self) -> float:
        return self.majority_count / self.minority_count


def profile(y) -> ImbalanceProfile:
    """Count the majority class against the pooled remaining classes."""
    y = np.asarray(y, dtype=int)
    if y.size == 0:
        raise BalancingError("cannot profile an empty label vector")
    labels, counts = np.unique(y, return_counts=True)
    major_pos = int(np.argmax(counts))
    major = int(labels[major_pos])
    major_count = int(counts[major_pos])
    minor_count = int(y.size - major_count)
    if minor_count == 0:
        raise BalancingError("single-class labels have no minority to balance")
    return ImbalanceProfile(major, major_count, minor_count)


def is_imbalanced(prof: ImbalanceProfile, threshold: float = DEFAULT_DETECTION_RATIO) -> bool:
    return prof.ratio > threshold


def _pairwise_distances(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    d2 = (A * A).sum(axis=1)[:, None] + (B * B).sum(axis=1)[None, :] - 2.0 * (A @ B.T)
    np.maximum(d2, 0.0, out=d2)
    return np.sqrt(d2)


def _nearest_among(X: np.ndarray, i: int) -> int:
    """Index of the nearest other row; distance ties prefer lower index."""
    d = np.sqrt(((X - X[i]) ** 2).sum(axis=1))
    d[i] = np.inf
    return int(np.argmin(d))


class Balancer(Component):
    """Resampler with a ratio threshold and per-call seed.

    ``ratio`` is both the imbalance gate and, for the ratio-targeting
    methods, the post-resampling target majority/minority ratio.
    """

    def __init__(self, method: str = "none", ratio: float = 1.0, k: int = 5):
        if method not in BALANCE_METHODS:
            raise ConfigurationError(f"unknown balancer {method!r}")
        if ratio < 1.0:
            raise ConfigurationError("ratio threshold must be at least 1")
        if k < 1:
            raise ConfigurationError("neighbor count must be at least 1")
        self.method = method
        self.ratio = ratio
        self.k = k

    def fit_resample(self, X, y, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
        X = as_float_matrix(X)
        check_no_missing(X)
        y = np.asarray(y, dtype=int)
        if len(y) != len(X):
            raise ConfigurationError("X and y row counts differ")
        if self.method == "none":
            return X, y
        prof = profile(y)
        if prof.ratio <= self.ratio:
            return X, y
        fn = {
            "random_over": self._random_over,
            "random_under": self._random_under,
            "smote": self._smote,
            "tomek": self._tomek,
            "enn": self._enn,
            "cnn": self._cnn,
        }[self.method]
        return fn(X, y, prof, np.random.default_rng(seed))

    def _minority_target(self, prof: ImbalanceProfile) -> int:
        return math.ceil(prof.majority_count / self.ratio)

    def _random_over(self, X, y, prof, rng):
        minority_idx = np.flatnonzero(y != prof.majority_class)
        if minority_idx.size == 0:
            raise BalancingError("empty minority")
        extra = self._minority_target(prof) - prof.minority_count
        picks = rng.integers(0, minority_idx.size, extra)
        add = minority_idx[picks]
        return np.vstack([X, X[add]]), np.concatenate([y, y[add]])

    def _random_under(self, X, y, prof, rng):
        keep_major = math.floor(self.ratio * prof.minority_count)
        if keep_major < 1:
            raise BalancingError("under-sampling target is below one majority row")
        majority_idx = np.flatnonzero(y == prof.majority_class)
        kept = rng.choice(majority_idx, size=keep_major, replace=False)
        keep = np.sort(np.concatenate([np.flatnonzero(y != prof.majority_class), kept]))
        return X[keep], y[keep]

    def _smote(self, X, y, prof, rng):
        minority_idx = np.flatnonzero(y != prof.majority_class)
        if minority_idx.size < 2:
            logger.warning(
                "smote needs at least 2 minority rows, falling back to random_over"
            )
            return self._random_over(X, y, prof, rng)
        extra = self._minority_target(prof) - prof.minority_count
        Xm = X[minority_idx]
        dists = _pairwise_distances(Xm, Xm)
        np.fill_diagonal(dists, np.inf)
        k = min(self.k, len(Xm) - 1)
        neighbor_ids = np.argsort(dists, axis=1, kind="mergesort")[:, :k]
        synth = np.empty((extra, X.shape[1]), dtype=float)
        labels = np.empty(extra, dtype=int)
        for s in range(extra):
            base = int(rng.integers(0, len(Xm)))
            nn = int(neighbor_ids[base, rng.integers(0, k)])
            u = rng.uniform()
            synth[s] = Xm[base] + u * (Xm[nn] - Xm[base])
            labels[s] = y[minority_idx[base]]
        return np.vstack([X, synth]), np.concatenate([y, labels])

    def _tomek(self, X, y, prof, rng):
        majority = y == prof.majority_class
        nearest = np.array([_nearest_among(X, i) for i in range(len(X))])
        drop = [
            i
            for i in np.flatnonzero(majority)
            if not majority[nearest[i]] and nearest[nearest[i]] == i
        ]
        keep = np.setdiff1d(np.arange(len(X)), np.asarray(drop, dtype=int))
        return X[keep], y[keep]

    def _enn(self, X, y, prof, rng):
        majority = y == prof.majority_class
        k = min(self.k, len(X) - 1)
        drop = []
        for i in np.flatnonzero(majority):
            d = np.sqrt(((X - X[i]) ** 2).sum(axis=1))
            d[i] = np.inf
            neighbors = np.argsort(d, kind="mergesort")[:k]
            votes = np.bincount(y[neighbors])
            own = votes[y[i]] if y[i] < len(votes) else 0
            others = np.delete(votes, y[i]) if y[i] < len(votes) else votes
            if others.size and others.max() > own:
                drop.append(i)
        keep = np.setdiff1d(np.arange(len(X)), np.asarray(drop, dtype=int))
        return X[keep], y[keep]

    def _cnn(self, X, y, prof, rng):
        majority_idx = np.flatnonzero(y == prof.majority_class)
        minority_idx = np.flatnonzero(y != prof.majority_class)
        first = int(rng.choice(majority_idx))
        condensed = set(minority_idx.tolist())
        condensed.add(first)
        order = rng.permutation(len(X))
        changed = True
        while changed:
            changed = False
            store = np.fromiter(sorted(condensed), dtype=int)
            bank, bank_labels = X[store], y[store]
            for i in order:
                if i in condensed or y[i] != prof.majority_class:
                    continue
                d = np.sqrt(((bank - X[i]) ** 2).sum(axis=1))
                if bank_labels[int(np.argmin(d))] != y[i]:
                    condensed.add(int(i))
                    store = np.fromiter(sorted(condensed), dtype=int)
                    bank, bank_labels = X[store], y[store]
                    changed = True
        keep = np.fromiter(sorted(condensed), dtype=int)
        return X[keep], y[keep]


def make_balancer(method: str, **params) -> Balancer:
    return Balancer(method=method, **params)
