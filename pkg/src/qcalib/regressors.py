"""Base regressors whose point predictions get quantile-calibrated.

Three kinds: ordinary least squares with an intercept, k-nearest-neighbor
averaging, and "external" passthrough for predictions produced elsewhere and
shipped as an extra numeric column.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset

__all__ = [
    "FittedRegressor",
    "RegressorSpec",
    "ResidualSample",
    "fit_regressor",
    "residuals",
]

_KINDS = ("ols", "knn", "external")

# entries of the query-by-train distance matrix held per block
_KNN_BLOCK_BUDGET = 8_000_000


@dataclass(frozen=True)
class RegressorSpec:
    """Which base regressor to fit and its hyperparameters."""

    kind: str
    knn_k: int = 5
    external_column: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise ValueError(f"unknown regressor kind {self.kind!r}, expected one of {_KINDS}")
        if self.kind == "knn" and self.knn_k < 1:
            raise ValueError(f"knn_k must be at least 1, got {self.knn_k}")
        if self.kind == "external" and not self.external_column:
            raise ValueError("external regressor needs the predictions column name")


@dataclass(frozen=True)
class FittedRegressor:
    """A fitted base model; ``predict`` maps an (n, d) matrix to n values.

    For ``ols`` the coefficient vector has the intercept first. For ``knn``
    the training sample is stored verbatim. For ``external`` predictions are
    read straight out of the stored feature column.
    """

    kind: str
    input_dim: int
    coefficients: np.ndarray | None = None
    train_features: np.ndarray | None = None
    train_targets: np.ndarray | None = None
    knn_k: int | None = None
    external_column: str | None = None
    external_index: int | None = None

    def predict(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        if xs.ndim == 1:
            xs = xs.reshape(-1, 1) if self.input_dim == 1 else xs.reshape(1, -1)
        if xs.ndim != 2 or xs.shape[1] != self.input_dim:
            raise ValueError(
                f"queries have {xs.shape[-1]} columns, model expects {self.input_dim}"
            )
        if self.kind == "ols":
            return xs @ self.coefficients[1:] + self.coefficients[0]
        if self.kind == "external":
            return xs[:, self.external_index].copy()
        return self._predict_knn(xs)

    def _predict_knn(self, xs: np.ndarray) -> np.ndarray:
        train = self.train_features
        out = np.empty(xs.shape[0])
        block = max(1, _KNN_BLOCK_BUDGET // max(1, train.shape[0]))
        for start in range(0, xs.shape[0], block):
            chunk = xs[start : start + block]
            dists = np.sqrt(((chunk[:, None, :] - train[None, :, :]) ** 2).sum(axis=2))
            # stable sort so equal distances resolve to the lower index
            nearest = np.argsort(dists, axis=1, kind="stable")[:, : self.knn_k]
            out[start : start + chunk.shape[0]] = self.train_targets[nearest].mean(axis=1)
        return out


def fit_regressor(spec: RegressorSpec, train: Dataset) -> FittedRegressor:
    """Fit the base model on a training dataset.

    OLS solves the normal equations, falling back to a small ridge shift
    (1e-8 on the diagonal) whenever they are numerically singular, so
    duplicated columns degrade gracefully and deterministically. kNN stores
    the data; ``external`` just resolves its column name.
    """
    if spec.kind == "ols":
        design = np.column_stack([np.ones(train.n), train.features])
        gram = design.T @ design
        rhs = design.T @ train.target
        svals = np.linalg.svd(gram, compute_uv=False)
        if svals[0] <= 0 or svals[-1] <= svals[0] * 1e-12:
            gram = gram + 1e-8 * np.eye(gram.shape[0])
        beta = np.linalg.solve(gram, rhs)
        if not np.isfinite(beta).all():
            raise ValueError("least squares produced non-finite coefficients")
        return FittedRegressor(kind="ols", input_dim=train.d, coefficients=beta)
    if spec.kind == "knn":
        if spec.knn_k > train.n:
            raise ValueError(f"knn_k={spec.knn_k} exceeds the {train.n} training rows")
        return FittedRegressor(
            kind="knn",
            input_dim=train.d,
            train_features=train.features.copy(),
            train_targets=train.target.copy(),
            knn_k=spec.knn_k,
        )
    try:
        idx = train.feature_names.index(spec.external_column)
    except ValueError:
        raise ValueError(
            f"no column named {spec.external_column!r} holds the external predictions"
        ) from None
    return FittedRegressor(
        kind="external",
        input_dim=train.d,
        external_column=spec.external_column,
        external_index=idx,
    )


@dataclass(frozen=True)
class ResidualSample:
    """Feature rows paired with target minus prediction, order preserved."""

    points: np.ndarray
    residuals: np.ndarray


def residuals(model: FittedRegressor, data: Dataset) -> ResidualSample:
    """Exact elementwise residuals of the model on a dataset."""
    preds = model.predict(data.features)
    return ResidualSample(points=data.features, residuals=data.target - preds)
