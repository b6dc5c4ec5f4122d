"""Problem data containers and column standardization.

The solver works on centered (optionally variance-scaled) copies of the
design and response matrices; fitted coefficients are mapped back to the
original scale together with recovered intercepts.  Sparse designs are kept
sparse: the Gram quantities the solver needs are assembled from the raw
matrix, the column means and the column scales without materializing a
centered copy.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .exceptions import DimensionMismatchError

ZERO_VARIANCE_TOL = 1e-12


@dataclass(frozen=True)
class CoefficientMatrix:
    """A p-by-K coefficient matrix plus a per-outcome intercept vector.

    Column ``k`` stacks the coefficients of every variable for outcome ``k``;
    row ``j`` is the profile of variable ``j`` across all outcomes.
    """

    beta: np.ndarray
    intercept: np.ndarray

    def __post_init__(self):
        beta = np.atleast_2d(np.asarray(self.beta, dtype=float))
        intercept = np.asarray(self.intercept, dtype=float).ravel()
        if intercept.shape != (beta.shape[1],):
            raise DimensionMismatchError("intercept", (beta.shape[1],), intercept.shape)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "intercept", intercept)

    @property
    def p(self) -> int:
        return self.beta.shape[0]

    @property
    def n_outcomes(self) -> int:
        return self.beta.shape[1]


def standardize_matrix(X, center, scale):
    """Return ``(X - center) / scale`` as a dense array."""
    X = X.toarray() if sp.issparse(X) else np.asarray(X, dtype=float)
    return (X - center[None, :]) / scale[None, :]


def destandardize_matrix(Xs, center, scale):
    """Invert :func:`standardize_matrix`; round-trips to ~1e-16 relative."""
    return np.asarray(Xs, dtype=float) * scale[None, :] + center[None, :]


def _column_stats(M):
    """Column means and population standard deviations, sparse-aware."""
    if sp.issparse(M):
        mean = np.asarray(M.mean(axis=0)).ravel()
        mean_sq = np.asarray(M.multiply(M).mean(axis=0)).ravel()
    else:
        mean = M.mean(axis=0)
        mean_sq = (M * M).mean(axis=0)
    var = np.maximum(mean_sq - mean * mean, 0.0)
    return mean, np.sqrt(var)


class ProblemData:
    """Fit-ready (X, Y) pair with standardization metadata.

    Parameters
    ----------
    X : ndarray or scipy sparse matrix, shape (n, p)
        Predictor matrix.  Sparse input keeps sparse storage end to end.
    Y : ndarray, shape (n, K) or (n,)
        Response matrix; a vector is treated as a single outcome.
    center : bool, default True
        Center the X and Y columns before fitting (the intercept is
        recovered from the column means afterwards).
    standardize : bool, default True
        Scale X columns to unit (population) standard deviation.
    standardize_y : bool, default False
        Also scale Y columns to unit standard deviation, for outcomes
        measured on different scales.
    zero_variance : {"screen", "keep"}, default "screen"
        What to do with constant X columns when ``standardize`` is on:
        "screen" removes them from the fit and records their indices in
        ``screened_columns``; "keep" retains them with unit scale and a
        warning (used inside cross-validation folds so the coefficient
        layout stays stable across folds).

    Notes
    -----
    Instances are immutable after construction and safe to share across
    threads.  ``p`` refers to the number of active (non-screened) columns;
    coefficient matrices returned to callers are always re-expanded to the
    original ``p_raw`` columns with zeros in screened positions.
    """

    def __init__(self, X, Y, *, center=True, standardize=True,
                 standardize_y=False, zero_variance="screen"):
        if zero_variance not in ("screen", "keep"):
            raise ValueError(f"unknown zero_variance policy {zero_variance!r}")
        if not sp.issparse(X):
            X = np.asarray(X, dtype=float)
            if X.ndim != 2:
                raise DimensionMismatchError("X", "2-d matrix", f"{X.ndim}-d array")
        else:
            X = X.tocsr().astype(float)
        Y = np.asarray(Y, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        if Y.ndim != 2:
            raise DimensionMismatchError("Y", "2-d matrix", f"{Y.ndim}-d array")
        if X.shape[0] != Y.shape[0]:
            raise DimensionMismatchError("rows", X.shape[0], Y.shape[0])
        if X.shape[0] < 1:
            raise DimensionMismatchError("rows", ">= 1", X.shape[0])
        xdata = X.data if sp.issparse(X) else X
        if not (np.all(np.isfinite(xdata)) and np.all(np.isfinite(Y))):
            raise ValueError("X and Y must be finite (no NaN or Inf entries)")

        self.X_raw = X
        self.Y_raw = Y
        self.n = X.shape[0]
        self.p_raw = X.shape[1]
        self.n_outcomes = Y.shape[1]
        self.is_sparse = sp.issparse(X)
        self.centered = bool(center)
        self.standardized = bool(standardize)
        self.y_standardized = bool(standardize_y)

        mean_x, std_x = _column_stats(X)
        mean_y, std_y = _column_stats(Y)

        self.center_X = mean_x if center else np.zeros(self.p_raw)
        self.center_Y = mean_y if center else np.zeros(self.n_outcomes)

        screened = np.zeros(self.p_raw, dtype=bool)
        scale = np.ones(self.p_raw)
        if standardize:
            constant = std_x < ZERO_VARIANCE_TOL
            if constant.any():
                if zero_variance == "screen":
                    screened = constant
                else:
                    warnings.warn(
                        f"{int(constant.sum())} zero-variance column(s) kept "
                        "with unit scale", RuntimeWarning)
            scale = np.where(std_x < ZERO_VARIANCE_TOL, 1.0, std_x)
        self.scale_X = scale
        self.scale_Y = (np.where(std_y < ZERO_VARIANCE_TOL, 1.0, std_y)
                        if standardize_y else np.ones(self.n_outcomes))

        self.screened_columns = np.flatnonzero(screened)
        self.active_columns = np.flatnonzero(~screened)
        self.p = self.active_columns.size
        for arr in (self.center_X, self.center_Y, self.scale_X, self.scale_Y,
                    self.screened_columns, self.active_columns):
            arr.setflags(write=False)

    # -- prepared (centered/scaled) views ---------------------------------

    @cached_property
    def Xs(self) -> np.ndarray:
        """Dense standardized design restricted to active columns."""
        X = self.X_raw[:, self.active_columns] if self.p != self.p_raw else self.X_raw
        out = standardize_matrix(X, self.center_X[self.active_columns],
                                 self.scale_X[self.active_columns])
        out.setflags(write=False)
        return out

    @cached_property
    def Ys(self) -> np.ndarray:
        out = (self.Y_raw - self.center_Y[None, :]) / self.scale_Y[None, :]
        out.setflags(write=False)
        return out

    @cached_property
    def gram_xx(self) -> np.ndarray:
        """(Xs' Xs) / n as a dense (p, p) array."""
        if not self.is_sparse:
            G = self.Xs.T @ self.Xs / self.n
        else:
            cols = self.active_columns
            C = self.X_raw[:, cols] if self.p != self.p_raw else self.X_raw
            m = self.center_X[cols]
            s = self.scale_X[cols]
            G = (C.T @ C).toarray() / self.n - np.outer(m, m)
            G /= np.outer(s, s)
        G = np.ascontiguousarray(G)
        G.setflags(write=False)
        return G

    @cached_property
    def gram_xy(self) -> np.ndarray:
        """(Xs' Ys) / n as a dense (p, K) array."""
        if not self.is_sparse:
            G = self.Xs.T @ self.Ys / self.n
        else:
            cols = self.active_columns
            C = self.X_raw[:, cols] if self.p != self.p_raw else self.X_raw
            m = self.center_X[cols]
            s = self.scale_X[cols]
            G = np.asarray(C.T @ self.Y_raw) / self.n - np.outer(m, self.center_Y)
            G /= s[:, None]
            G /= self.scale_Y[None, :]
        G = np.ascontiguousarray(G)
        G.setflags(write=False)
        return G

    @cached_property
    def y_mean_sq(self) -> float:
        """tr(Ys' Ys) / n."""
        return float(np.sum(self.Ys * self.Ys)) / self.n

    # -- coefficient scale conversion --------------------------------------

    def to_original_coef(self, beta_std) -> CoefficientMatrix:
        """Map a (p_active, K) prepared-scale matrix back to the raw scale.

        Screened columns re-enter as zero rows; the intercept row is
        recovered from the stored column means.
        """
        beta_std = np.asarray(beta_std, dtype=float)
        if beta_std.shape != (self.p, self.n_outcomes):
            raise DimensionMismatchError(
                "beta", (self.p, self.n_outcomes), beta_std.shape)
        full = np.zeros((self.p_raw, self.n_outcomes))
        scale_act = self.scale_X[self.active_columns]
        full[self.active_columns] = (beta_std / scale_act[:, None]) * self.scale_Y[None, :]
        intercept = self.center_Y - self.center_X @ full
        return CoefficientMatrix(full, intercept)

    def raw_rows(self, idx):
        """Row-sliced (X_raw, Y_raw) pair; used for CV fold construction."""
        return self.X_raw[idx], self.Y_raw[idx]
