"""Synthetic regression families with closed-form conditional quantiles,
plus a resampling construction for covariate-shifted test sets.

Three kinds:

``sine_hetero``
    X ~ Unif[0, 15], Y | X ~ N(mu(X), sigma(X)^2) with mu(X) =
    4 sin(2 pi X / 15) and sigma(X) = max(0.2 X |sin X|, 0.1).
``uniform_triangle``
    X ~ Unif[0, 1], Y | X ~ Unif[0, X]; tau-quantile is tau * x.
``scaled_uniform``
    X ~ Unif[0, 1], Y = u X with u ~ Unif[-1, 1]; tau-quantile is
    (2 tau - 1) x.

Optional nuisance columns are independent Unif[0, 1] draws appended after
the informative feature; for a fixed seed the (x, y) pairs do not depend on
how many nuisance columns are requested.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .data import Dataset, DatasetError

__all__ = [
    "GeneratorSpec",
    "ShiftSpec",
    "analytic_quantile",
    "covariate_shift_testset",
    "generate",
    "sharpness_counterexample_predictor",
    "sine_mean",
    "sine_stddev",
]

KINDS = ("sine_hetero", "uniform_triangle", "scaled_uniform")

_SINE_PERIOD = 15.0
_SINE_AMPLITUDE = 4.0
_SINE_NOISE_SLOPE = 0.2
_SINE_NOISE_FLOOR = 0.1

_STD_NORMAL = NormalDist()


def sine_mean(x):
    """Conditional mean of the sine_hetero family."""
    x = np.asarray(x, dtype=float)
    out = _SINE_AMPLITUDE * np.sin(2.0 * np.pi / _SINE_PERIOD * x)
    return float(out) if out.ndim == 0 else out


def sine_stddev(x):
    """Conditional noise scale of the sine_hetero family, floored at 0.1."""
    x = np.asarray(x, dtype=float)
    out = np.maximum(_SINE_NOISE_SLOPE * x * np.abs(np.sin(x)), _SINE_NOISE_FLOOR)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class GeneratorSpec:
    """What to sample: family, size, seed, and extra noise columns."""

    kind: str
    n: int
    seed: int = 0
    nuisance_dims: int = 0

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown generator kind {self.kind!r}, expected one of {KINDS}")
        if self.n < 1:
            raise ValueError(f"n must be positive, got {self.n}")
        if self.nuisance_dims < 0:
            raise ValueError("nuisance_dims must be nonnegative")


def generate(spec: GeneratorSpec) -> Dataset:
    """Draw a dataset from the requested family; deterministic per seed."""
    rng = np.random.default_rng(spec.seed)
    if spec.kind == "sine_hetero":
        x = rng.uniform(0.0, _SINE_PERIOD, spec.n)
        y = rng.normal(sine_mean(x), sine_stddev(x))
    elif spec.kind == "uniform_triangle":
        x = rng.uniform(0.0, 1.0, spec.n)
        y = x * rng.uniform(0.0, 1.0, spec.n)
    else:
        x = rng.uniform(0.0, 1.0, spec.n)
        y = x * rng.uniform(-1.0, 1.0, spec.n)
    columns = [x]
    names = ["x"]
    for j in range(spec.nuisance_dims):
        columns.append(rng.uniform(0.0, 1.0, spec.n))
        names.append(f"z{j + 1}")
    return Dataset(np.column_stack(columns), y, tuple(names), "y")


def analytic_quantile(kind: str, x: float, tau: float) -> float:
    """Exact conditional tau-quantile of Y given the informative feature x."""
    if kind not in KINDS:
        raise ValueError(f"unknown generator kind {kind!r}")
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie strictly inside (0, 1), got {tau}")
    x = float(x)
    if kind == "sine_hetero":
        if not 0.0 <= x <= _SINE_PERIOD:
            raise ValueError(f"x={x} outside the support [0, {_SINE_PERIOD}]")
        return sine_mean(x) + sine_stddev(x) * _STD_NORMAL.inv_cdf(tau)
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x={x} outside the support [0, 1]")
    if kind == "uniform_triangle":
        return tau * x
    return (2.0 * tau - 1.0) * x


def sharpness_counterexample_predictor(x, tau: float = 0.9):
    """The marginally calibrated but pointwise-useless quantile predictor.

    Predicts x itself below the threshold tau and 0 above it. Under the
    uniform_triangle family the prediction covers everything on [0, tau] and
    nothing above, so marginal coverage is exactly tau while conditional
    coverage is wrong everywhere. Vectorized over x.
    """
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie strictly inside (0, 1), got {tau}")
    x = np.asarray(x, dtype=float)
    out = np.where(x <= tau, x, 0.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ShiftSpec:
    """Covariate-shift construction: pool fraction, resample count, spread."""

    pool_fraction: float = 0.1
    resample_count: int = 1000
    variance_scale: float = 0.3
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.pool_fraction < 1.0:
            raise ValueError("pool_fraction must lie strictly inside (0, 1)")
        if self.resample_count < 1:
            raise ValueError("resample_count must be positive")
        if self.variance_scale <= 0:
            raise ValueError("variance_scale must be positive")


def covariate_shift_testset(data: Dataset, shift: ShiftSpec) -> tuple[Dataset, Dataset]:
    """Split off a pool and importance-resample it around a random seed point.

    A seeded permutation sets aside ``round(pool_fraction * n)`` rows as the
    pool. From the remaining training rows' feature mean and covariance
    (denominator n-1) a single seed point is drawn, and ``resample_count``
    pool rows are then drawn with replacement, weighted by the Gaussian
    density centered at that seed with covariance ``variance_scale`` times
    the training covariance. Returns ``(train, shifted_test)``; a singular
    covariance gets a diagonal ridge of 1e-9 * trace / d before use.
    """
    n = data.n
    rng = np.random.default_rng(shift.seed)
    pool_size = int(math.floor(shift.pool_fraction * n + 0.5))
    pool_size = max(pool_size, 2)
    if n - pool_size < 2:
        raise DatasetError(
            f"{n} rows cannot supply a {pool_size}-row pool and a usable train part"
        )
    perm = rng.permutation(n)
    pool = data.select(np.sort(perm[:pool_size]))
    train = data.select(np.sort(perm[pool_size:]))

    mu = train.features.mean(axis=0)
    cov = np.atleast_2d(np.cov(train.features, rowvar=False, ddof=1))
    evals = np.linalg.eigvalsh(cov)
    if evals[0] <= evals[-1] * 1e-12:
        ridge = 1e-9 * max(float(np.trace(cov)) / data.d, np.finfo(float).tiny)
        cov = cov + ridge * np.eye(data.d)

    x_seed = rng.multivariate_normal(mu, cov)
    centered = pool.features - x_seed
    chol = np.linalg.cholesky(shift.variance_scale * cov)
    solved = np.linalg.solve(chol, centered.T)
    log_weights = -0.5 * (solved**2).sum(axis=0)
    log_weights -= log_weights.max()
    weights = np.exp(log_weights)
    weights /= weights.sum()
    rows = rng.choice(pool.n, size=shift.resample_count, replace=True, p=weights)
    return train, pool.select(rows)
