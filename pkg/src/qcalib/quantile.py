"""Conditional quantile estimation from stored samples.

A fitted estimator keeps its calibration points and values verbatim. For a
query x it collects the points whose Euclidean distance to x is at most the
configured bandwidth (inclusive), widening the radius to the nearest
``min_neighbors`` points when the ball holds fewer, and returns the left
quantile of the values attached to those points: the smallest stored value
whose empirical CDF weight reaches the requested level. That element is also
the smallest minimizer of the neighborhood's average pinball loss, which is
what makes the closed form valid.

Bandwidth selection is K-fold cross-validation of the pinball loss over a
candidate grid drawn from the quantiles of pairwise inter-point distances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .metrics import TauGrid, default_tau_grid, pinball_loss

__all__ = [
    "BandwidthSearch",
    "KernelConfig",
    "LocalNeighborhood",
    "QuantileEstimator",
    "bandwidth_cv_scores",
    "select_bandwidth",
]

# distance-matrix entries held in memory per prediction block
_BLOCK_BUDGET = 8_000_000


def _check_tau_scalar(tau: float) -> float:
    tau = float(tau)
    if not 0.0 < tau < 1.0:
        raise ValueError(f"quantile level must lie strictly inside (0, 1), got {tau}")
    return tau


def _as_levels(taus) -> np.ndarray:
    if isinstance(taus, TauGrid):
        return taus.levels
    levels = np.asarray(taus, dtype=float).ravel()
    if levels.size == 0:
        raise ValueError("no quantile levels given")
    if not ((levels > 0.0).all() and (levels < 1.0).all()):
        raise ValueError("quantile levels must lie strictly inside (0, 1)")
    if levels.size > 1 and not (np.diff(levels) > 0).all():
        raise ValueError("quantile levels must be strictly increasing")
    return levels


def _left_quantile_index(m: int, taus):
    """Index of the left tau-quantile in a sorted m-vector.

    Smallest k with k/m >= tau, evaluated at float resolution: comparing the
    cumulative fractions keeps exact-decimal levels honest, where a raw
    ceil(tau * m) can overshoot by one ulp (e.g. tau=0.14, m=50).
    """
    cdf = np.arange(1, m + 1, dtype=float) / m
    return np.searchsorted(cdf, taus, side="left")


@dataclass(frozen=True)
class KernelConfig:
    """Hard-threshold distance kernel: weight 1 within ``bandwidth``, else 0.

    ``bandwidth`` may be ``math.inf``, which turns the estimator into the
    marginal quantile of all stored values. When a query's ball holds fewer
    than ``min_neighbors`` points, the radius widens to the distance of the
    ``min_neighbors``-th nearest point.
    """

    bandwidth: float
    min_neighbors: int = 1

    def __post_init__(self) -> None:
        if math.isnan(self.bandwidth) or self.bandwidth < 0:
            raise ValueError(f"bandwidth must be nonnegative, got {self.bandwidth}")
        if self.min_neighbors < 1:
            raise ValueError(f"min_neighbors must be at least 1, got {self.min_neighbors}")


@dataclass(frozen=True)
class LocalNeighborhood:
    """Stored-point indices within ``effective_h`` of a query."""

    indices: np.ndarray
    effective_h: float


@dataclass(frozen=True)
class QuantileEstimator:
    """Stored calibration sample plus its kernel; see the module docstring."""

    points: np.ndarray  # (n, d)
    values: np.ndarray  # (n,)
    kernel: KernelConfig

    def __post_init__(self) -> None:
        points = np.array(self.points, dtype=float, copy=True)
        if points.ndim == 1:
            points = points.reshape(-1, 1)
        values = np.array(self.values, dtype=float, copy=True).ravel()
        if points.ndim != 2 or points.shape[0] < 1:
            raise ValueError("points must form a non-empty 2-d matrix")
        if values.shape[0] != points.shape[0]:
            raise ValueError(
                f"{values.shape[0]} values for {points.shape[0]} points"
            )
        if not (np.isfinite(points).all() and np.isfinite(values).all()):
            raise ValueError("points and values must be finite")
        points.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "values", values)

    @classmethod
    def fit(cls, points, values, kernel: KernelConfig) -> "QuantileEstimator":
        """Store the sample verbatim; no precomputation beyond validation."""
        return cls(points, values, kernel)

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def _check_query(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).ravel()
        if x.shape[0] != self.dim:
            raise ValueError(f"query has {x.shape[0]} coordinates, expected {self.dim}")
        if not np.isfinite(x).all():
            raise ValueError("query must be finite")
        return x

    def neighborhood(self, x) -> LocalNeighborhood:
        """Indices of stored points within the bandwidth of x (boundary included).

        If fewer than ``min_neighbors`` qualify, the radius grows to the
        ``min_neighbors``-th nearest distance, so the result is never empty.
        """
        x = self._check_query(x)
        dists = np.sqrt(((self.points - x) ** 2).sum(axis=1))
        h = self.kernel.bandwidth
        inside = dists <= h
        if int(inside.sum()) >= min(self.kernel.min_neighbors, dists.shape[0]):
            return LocalNeighborhood(np.flatnonzero(inside), float(h))
        k = min(self.kernel.min_neighbors, dists.shape[0])
        eff = float(np.partition(dists, k - 1)[k - 1])
        return LocalNeighborhood(np.flatnonzero(dists <= eff), eff)

    def predict_quantile(self, x, tau: float) -> float:
        """Left tau-quantile of the values in x's neighborhood."""
        tau = _check_tau_scalar(tau)
        nb = self.neighborhood(x)
        vals = np.sort(self.values[nb.indices])
        return float(vals[_left_quantile_index(vals.shape[0], tau)])

    def predict_quantile_batch(self, xs, taus) -> np.ndarray:
        """Quantiles for many queries over an increasing level grid.

        Returns an (n_queries, n_levels) matrix; each row is nondecreasing
        left to right and agrees elementwise with ``predict_quantile``.
        """
        levels = _as_levels(taus)
        xs = np.asarray(xs, dtype=float)
        if xs.ndim == 1:
            xs = xs.reshape(-1, 1) if self.dim == 1 else xs.reshape(1, -1)
        if xs.ndim != 2 or xs.shape[1] != self.dim:
            raise ValueError(f"queries must be (n, {self.dim})")
        if not np.isfinite(xs).all():
            raise ValueError("queries must be finite")

        # one global value ordering; a sorted neighborhood is then a gather
        order = np.argsort(self.values, kind="stable")
        values_sorted = self.values[order]
        h = self.kernel.bandwidth
        k_min = min(self.kernel.min_neighbors, self.n_points)

        out = np.empty((xs.shape[0], levels.shape[0]))
        block = max(1, _BLOCK_BUDGET // max(1, self.n_points * self.dim))
        for start in range(0, xs.shape[0], block):
            chunk = xs[start : start + block]
            dists = np.sqrt(
                ((chunk[:, None, :] - self.points[None, :, :]) ** 2).sum(axis=2)
            )
            for i, drow in enumerate(dists):
                inside = drow <= h
                if int(inside.sum()) < k_min:
                    eff = np.partition(drow, k_min - 1)[k_min - 1]
                    inside = drow <= eff
                vals = values_sorted[inside[order]]
                out[start + i] = vals[_left_quantile_index(vals.shape[0], levels)]
        return out


@dataclass(frozen=True)
class BandwidthSearch:
    """Cross-validation plan for choosing the kernel bandwidth.

    With no explicit candidates the grid is the {0.05, 0.1, 0.2, 0.4, 0.6,
    0.8} quantiles of pairwise inter-point distances (a seeded 2000-row
    subsample stands in when the data is larger). A positive
    ``lipschitz_hint`` L appends the rate-rule candidate
    ``L**(2/(d+2)) * n**(-1/(d+2))`` with unit constant; cross-validation
    still makes the final call.
    """

    candidates: tuple[float, ...] | None = None
    folds: int = 5
    tau_grid: TauGrid | None = None
    seed: int = 0
    lipschitz_hint: float | None = None

    def __post_init__(self) -> None:
        if self.folds < 2:
            raise ValueError(f"need at least 2 folds, got {self.folds}")
        if self.candidates is not None:
            cand = tuple(float(c) for c in self.candidates)
            if len(cand) == 0:
                raise ValueError("empty candidate grid")
            if any(c <= 0 or not math.isfinite(c) for c in cand):
                raise ValueError("candidates must be positive and finite")
            if any(b <= a for a, b in zip(cand, cand[1:])):
                raise ValueError("candidates must be strictly increasing")
            object.__setattr__(self, "candidates", cand)
        if self.lipschitz_hint is not None and self.lipschitz_hint < 0:
            raise ValueError("lipschitz_hint must be nonnegative")


_DISTANCE_QUANTILES = (0.05, 0.1, 0.2, 0.4, 0.6, 0.8)
_PAIRWISE_CAP = 2000


def _pairwise_distance_candidates(points: np.ndarray, seed: int) -> np.ndarray:
    n = points.shape[0]
    if n > _PAIRWISE_CAP:
        rows = np.random.default_rng([seed, 1]).choice(n, _PAIRWISE_CAP, replace=False)
        sub = points[rows]
    else:
        sub = points
    sq = (sub**2).sum(axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (sub @ sub.T)
    iu = np.triu_indices(sub.shape[0], k=1)
    dists = np.sqrt(np.clip(d2[iu], 0.0, None))
    dists = dists[dists > 0]
    if dists.size == 0:
        raise ValueError("all pairwise distances are zero; candidate grid undefined")
    return np.unique(np.quantile(dists, _DISTANCE_QUANTILES))


def _resolve_candidates(points: np.ndarray, search: BandwidthSearch) -> np.ndarray:
    if search.candidates is not None:
        cand = np.asarray(search.candidates, dtype=float)
    else:
        cand = _pairwise_distance_candidates(points, search.seed)
    if search.lipschitz_hint is not None and search.lipschitz_hint > 0:
        n, d = points.shape
        rate = search.lipschitz_hint ** (2.0 / (d + 2)) * n ** (-1.0 / (d + 2))
        cand = np.unique(np.append(cand, rate))
    return cand


def _cv_folds(n: int, folds: int, seed: int) -> list[np.ndarray]:
    perm = np.random.default_rng(seed).permutation(n)
    return np.array_split(perm, folds)


def bandwidth_cv_scores(points, values, search: BandwidthSearch) -> tuple[np.ndarray, np.ndarray]:
    """Candidate bandwidths and their fold-averaged pinball losses.

    Folds come from ``array_split`` of a ``default_rng(seed)`` permutation.
    Each fold is predicted by an estimator fitted on the remaining points
    (``min_neighbors=1`` so every query resolves), scored by the mean
    pinball loss over the fold's rows and the level grid, and the candidate
    score is the unweighted mean over folds.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points.reshape(-1, 1)
    values = np.asarray(values, dtype=float).ravel()
    n = values.shape[0]
    if points.shape[0] != n:
        raise ValueError(f"{n} values for {points.shape[0]} points")
    if n < search.folds:
        raise ValueError(f"{n} points cannot fill {search.folds} folds")
    grid = search.tau_grid or default_tau_grid()
    candidates = _resolve_candidates(points, search)
    folds = _cv_folds(n, search.folds, search.seed)

    scores = np.empty(candidates.shape[0])
    for ci, h in enumerate(candidates):
        fold_losses = []
        for held_out in folds:
            mask = np.ones(n, dtype=bool)
            mask[held_out] = False
            est = QuantileEstimator.fit(
                points[mask], values[mask], KernelConfig(float(h), 1)
            )
            preds = est.predict_quantile_batch(points[held_out], grid)
            loss = pinball_loss(preds, values[held_out][:, None], grid.levels[None, :])
            fold_losses.append(float(loss.mean()))
        scores[ci] = float(np.mean(fold_losses))
    return candidates, scores


def select_bandwidth(points, values, search: BandwidthSearch | None = None) -> float:
    """Cross-validated bandwidth; ties go to the larger candidate."""
    search = search or BandwidthSearch()
    candidates, scores = bandwidth_cv_scores(points, values, search)
    best_h = float(candidates[0])
    best_score = float(scores[0])
    for h, score in zip(candidates[1:], scores[1:]):
        if score <= best_score:  # candidates ascend, so <= prefers the larger
            best_h, best_score = float(h), float(score)
    return best_h
