"""L2-regularized linear least squares for the global stage regressors.

Solves min ||X W + 1 b' - Y||^2 + lam ||W||^2 with an unpenalized bias,
by centering X and Y and factorizing the regularized normal equations.
When features outnumber samples (and lam > 0) the equivalent kernel form
X'(X X' + lam I)^-1 Y is used instead; it satisfies the same normal
equations exactly while keeping the solve at n x n.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse

from .validation import check_finite_matrix


@dataclass
class RidgeConfig:
    lam: float = 1.0

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"ridge penalty must be >= 0, got {self.lam}")


@dataclass(eq=False)
class LinearModel:
    weights: np.ndarray  # (feature_dim, target_dim)
    bias: np.ndarray  # (target_dim,)

    @property
    def feature_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def target_dim(self) -> int:
        return self.weights.shape[1]


def _as_2d(arr, name: str) -> np.ndarray:
    out = np.asarray(arr, dtype=np.float64)
    if out.ndim == 1:
        out = out[:, None]
    if out.ndim != 2:
        raise ValueError(f"{name} must be 2D, got shape {out.shape}")
    return out


def fit_ridge(features, targets, config: RidgeConfig = RidgeConfig()) -> LinearModel:
    """Fit weights and bias; `features` may be dense or scipy.sparse."""
    sparse_input = scipy.sparse.issparse(features)
    if sparse_input:
        x = features.tocsr().astype(np.float64)
        check_finite_matrix(x.data, "features")
        n, p = x.shape
        mean_x = np.asarray(x.mean(axis=0)).ravel()
    else:
        x = _as_2d(features, "features")
        check_finite_matrix(x, "features")
        n, p = x.shape
        mean_x = x.mean(axis=0)
    y = _as_2d(targets, "targets")
    check_finite_matrix(y, "targets")
    if y.shape[0] != n:
        raise ValueError(f"features have {n} rows but targets have {y.shape[0]}")
    if n < 1 or p < 1 or y.shape[1] < 1:
        raise ValueError("ridge fit needs at least one sample, feature, and target")
    mean_y = y.mean(axis=0)
    yc = y - mean_y
    lam = config.lam

    if lam > 0 and p > n:
        weights = _solve_dual(x, mean_x, yc, lam, sparse_input)
    else:
        weights = _solve_primal(x, mean_x, yc, lam, sparse_input, n)
    bias = mean_y - mean_x @ weights
    return LinearModel(weights, bias)


def _solve_primal(x, mean_x, yc, lam, sparse_input, n):
    p = x.shape[1]
    if sparse_input:
        gram = (x.T @ x).toarray() - n * np.outer(mean_x, mean_x)
        rhs = x.T @ yc - np.outer(mean_x, yc.sum(axis=0))
    else:
        xc = x - mean_x
        gram = xc.T @ xc
        rhs = xc.T @ yc
    gram[np.diag_indices(p)] += lam
    # Rounding can hand LAPACK a tiny positive pivot on an exactly singular
    # Gram matrix, so the unregularized case gets an explicit rank check.
    if lam == 0 and np.linalg.matrix_rank(gram, hermitian=True) < p:
        raise ValueError(
            "normal equations are singular (rank-deficient features); use a ridge penalty lam > 0"
        )
    try:
        cho = scipy.linalg.cho_factor(gram, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise ValueError(
            "regularized normal equations are singular (rank-deficient features); "
            "use a ridge penalty lam > 0"
        ) from exc
    return scipy.linalg.cho_solve(cho, rhs)


def _solve_dual(x, mean_x, yc, lam, sparse_input):
    n = x.shape[0]
    if sparse_input:
        row_proj = np.asarray(x @ mean_x).ravel()
        kernel = (x @ x.T).toarray()
    else:
        row_proj = x @ mean_x
        kernel = x @ x.T
    # Gram of the centered rows: (x - 1 m')(x - 1 m')'.
    kernel -= row_proj[:, None]
    kernel -= row_proj[None, :]
    kernel += float(mean_x @ mean_x)
    kernel[np.diag_indices(n)] += lam
    try:
        cho = scipy.linalg.cho_factor(kernel, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise ValueError("kernel system is singular; increase the ridge penalty") from exc
    alpha = scipy.linalg.cho_solve(cho, yc)
    if sparse_input:
        weights = np.asarray(x.T @ alpha)
    else:
        weights = x.T @ alpha
    weights -= np.outer(mean_x, alpha.sum(axis=0))
    return weights


def predict(model: LinearModel, features) -> np.ndarray:
    """Apply the model; accepts a single feature vector or a batch of rows."""
    x = np.asarray(features, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != model.feature_dim:
        raise ValueError(f"model expects {model.feature_dim} features, got {x.shape[1]}")
    out = x @ model.weights + model.bias
    return out[0] if single else out
