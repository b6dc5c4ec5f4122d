"""Scikit-learn style estimators for doubly structured multi-response regression.

``GroupFusedRegressor`` fits one penalty configuration; the CV variant tunes
the overall strength and the group/fused mixing fraction by k-fold
cross-validation and refits on the full data.  Both follow the usual
fit/predict/get_params contract, so they compose with model-selection and
pipeline tooling.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .data import ProblemData
from .exceptions import DimensionMismatchError
from .grouping import build_grouping
from .path import PathSpec, cross_validate, DEFAULT_ALPHAS
from .solver import SolverOptions, fit
from .weights import WeightScheme, build_penalty_config


def _validate_xy(X, y):
    X = check_array(X, accept_sparse=("csr", "csc"), dtype=np.float64)
    y = check_array(y, ensure_2d=False, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    if y.shape[0] != X.shape[0]:
        raise DimensionMismatchError("rows", X.shape[0], y.shape[0])
    return X, y


class GroupFusedRegressor(RegressorMixin, BaseEstimator):
    """Multi-response linear regression with group and fused sparsity.

    The loss is the least-squares error over all outcomes, normalized by
    twice the sample size, plus ``lam * (1 - alpha)`` times a weighted
    group-norm penalty over (variable, outcome-group) blocks and
    ``lam * alpha`` times a weighted fused penalty over within-group outcome
    pairs.  Whole blocks are selected or removed jointly; fused pairs are
    driven to exact equality.

    Parameters
    ----------
    lam : float
        Overall penalty strength.
    alpha : float
        Fraction of the penalty assigned to the fused part, in [0, 1].
    levels : sequence of levels, optional
        Hierarchy of outcome groups (0-based column indices of y); the
        all-outcomes group and per-outcome singletons are added
        automatically.  ``None`` uses only those two automatic levels.
    fuse_pairs : iterable of (int, int), optional
        Explicit outcome pairs to fuse, overriding the default (all
        within-group pairs of the last user level).
    adaptive : bool
        Build penalty weights from base coefficient estimates (inverse
        powers with exponents ``gamma1``/``gamma2``) instead of group-size
        weights.
    weight_base : {"auto", "ols", "marginal"}
        Base estimate used for adaptive weights.
    center, standardize, standardize_y : bool
        Column preparation; coefficients are always reported on the
        original scale with a recovered intercept.
    eps_abs, eps_rel, max_iter, rho0, adapt_rho, polish_support,
    solve_method : solver controls, see :class:`SolverOptions`.

    Attributes
    ----------
    coef_ : ndarray (p, K)
    intercept_ : ndarray (K,)
    support_ : ndarray bool (p, K)
    fused_ : ndarray bool (p, n_pairs)
    objective_ : float
    n_iter_ : int
    converged_ : bool
    result_ : FitResult
    """

    def __init__(self, lam=1.0, alpha=0.0, levels=None, fuse_pairs=None,
                 adaptive=False, gamma1=0.5, gamma2=0.5, weight_cap=1e8,
                 weight_base="auto", center=True, standardize=True,
                 standardize_y=False, eps_abs=1e-5, eps_rel=1e-5,
                 max_iter=5000, rho0=1.0, adapt_rho=True,
                 polish_support=True, solve_method="auto"):
        self.lam = lam
        self.alpha = alpha
        self.levels = levels
        self.fuse_pairs = fuse_pairs
        self.adaptive = adaptive
        self.gamma1 = gamma1
        self.gamma2 = gamma2
        self.weight_cap = weight_cap
        self.weight_base = weight_base
        self.center = center
        self.standardize = standardize
        self.standardize_y = standardize_y
        self.eps_abs = eps_abs
        self.eps_rel = eps_rel
        self.max_iter = max_iter
        self.rho0 = rho0
        self.adapt_rho = adapt_rho
        self.polish_support = polish_support
        self.solve_method = solve_method

    def _problem(self, X, y):
        return ProblemData(X, y, center=self.center,
                           standardize=self.standardize,
                           standardize_y=self.standardize_y)

    def _grouping(self, n_outcomes):
        return build_grouping(n_outcomes, self.levels, self.fuse_pairs)

    def _scheme(self):
        return WeightScheme(adaptive=self.adaptive, gamma1=self.gamma1,
                            gamma2=self.gamma2, weight_cap=self.weight_cap,
                            base=self.weight_base)

    def _options(self):
        return SolverOptions(eps_abs=self.eps_abs, eps_rel=self.eps_rel,
                             max_iter=self.max_iter, rho0=self.rho0,
                             adapt_rho=self.adapt_rho,
                             polish_support=self.polish_support,
                             solve_method=self.solve_method)

    def fit(self, X, y):
        X, y = _validate_xy(X, y)
        data = self._problem(X, y)
        grouping = self._grouping(data.n_outcomes)
        config = build_penalty_config(data, grouping, self._scheme(),
                                      lam=self.lam, alpha=self.alpha)
        result = fit(data, grouping, config, self._options())
        self._store(result, data, grouping)
        return self

    def _store(self, result, data, grouping):
        self.result_ = result
        self.grouping_ = grouping
        self.coef_ = result.coef.beta
        self.intercept_ = result.coef.intercept
        self.support_ = result.support
        self.fused_ = result.fused
        self.objective_ = result.objective
        self.n_iter_ = result.iterations
        self.converged_ = result.converged
        self.n_features_in_ = data.p_raw

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, accept_sparse=("csr", "csc"), dtype=np.float64)
        if X.shape[1] != self.coef_.shape[0]:
            raise DimensionMismatchError("columns", self.coef_.shape[0],
                                         X.shape[1])
        out = X @ self.coef_ + self.intercept_[None, :]
        return np.asarray(out)


class GroupFusedRegressorCV(GroupFusedRegressor):
    """Cross-validated variant tuning (strength, mixing) on a shared grid.

    Parameters (in addition to :class:`GroupFusedRegressor`, whose ``lam``
    and ``alpha`` are ignored here)
    ----------
    n_lambdas : int
        Grid size per mixing value.
    lambda_min_ratio : float, optional
        Grid tail relative to the head; defaults by aspect ratio.
    alphas : tuple of float
        Mixing values to search.
    cv : int
        Number of folds.
    random_state : int
        Seed for the fold shuffle.
    n_jobs : int
        Parallel fold-by-mixing tasks.
    selection : {"min", "1se"}
        Pick the error minimizer or the sparsest grid point within one
        standard error of it.

    Attributes
    ----------
    cv_result_ : CVResult
    lam_, alpha_ : selected penalties (also reflected in the refit).
    """

    def __init__(self, n_lambdas=50, lambda_min_ratio=None,
                 alphas=DEFAULT_ALPHAS, cv=10, random_state=0, n_jobs=1,
                 selection="min", levels=None, fuse_pairs=None,
                 adaptive=False, gamma1=0.5, gamma2=0.5, weight_cap=1e8,
                 weight_base="auto", center=True, standardize=True,
                 standardize_y=False, eps_abs=1e-5, eps_rel=1e-5,
                 max_iter=5000, rho0=1.0, adapt_rho=True,
                 polish_support=True, solve_method="auto"):
        super().__init__(levels=levels, fuse_pairs=fuse_pairs,
                         adaptive=adaptive, gamma1=gamma1, gamma2=gamma2,
                         weight_cap=weight_cap, weight_base=weight_base,
                         center=center, standardize=standardize,
                         standardize_y=standardize_y, eps_abs=eps_abs,
                         eps_rel=eps_rel, max_iter=max_iter, rho0=rho0,
                         adapt_rho=adapt_rho, polish_support=polish_support,
                         solve_method=solve_method)
        self.n_lambdas = n_lambdas
        self.lambda_min_ratio = lambda_min_ratio
        self.alphas = alphas
        self.cv = cv
        self.random_state = random_state
        self.n_jobs = n_jobs
        self.selection = selection

    def fit(self, X, y):
        if self.selection not in ("min", "1se"):
            raise ValueError(f"unknown selection rule {self.selection!r}")
        X, y = _validate_xy(X, y)
        data = self._problem(X, y)
        grouping = self._grouping(data.n_outcomes)
        spec = PathSpec(n_lambda=self.n_lambdas,
                        lambda_min_ratio=self.lambda_min_ratio,
                        alphas=tuple(self.alphas))
        cv_result = cross_validate(data, grouping, self._scheme(), spec,
                                   k=self.cv, seed=self.random_state,
                                   options=self._options(),
                                   n_jobs=self.n_jobs)
        pick = cv_result.best if self.selection == "min" else cv_result.best_1se
        self.lam_ = float(cv_result.lambdas[pick])
        self.alpha_ = float(cv_result.alphas[pick[0]])
        config = build_penalty_config(data, grouping, self._scheme(),
                                      lam=self.lam_, alpha=self.alpha_)
        result = fit(data, grouping, config, self._options())
        self.cv_result_ = cv_result
        self._store(result, data, grouping)
        return self
