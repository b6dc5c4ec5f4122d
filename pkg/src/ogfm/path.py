"""Regularization paths, penalty grids, cross-validation and prediction.

Paths are fit per mixing fraction over a log-spaced, decreasing strength
grid with warm starts.  The grid head is the smallest strength producing the
all-zero fit: a cross-moment heuristic gives a starting value which is then
verified by fitting (doubling until the fit is exactly zero).  In pure-fused
configurations no strength can zero the coefficients, so the head falls back
to an analogous bound built from cross-moment differences.

Cross-validation recomputes standardization, base estimates and adaptive
weights on each training fold; the (strength, mixing) grid itself is shared
across folds so held-out errors aggregate per grid point.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed

from .data import CoefficientMatrix, ProblemData
from .exceptions import DimensionMismatchError
from .solver import FitResult, SolverOptions, fit
from .weights import build_penalty_config

DEFAULT_ALPHAS = (0.0, 1e-5, 1e-3, 1e-2, 0.1, 0.5)


@dataclass(frozen=True)
class PathSpec:
    """Grid layout for path fitting and cross-validation.

    ``lambda_min_ratio`` defaults to 1e-3 for tall data (n > p) and 1e-2
    otherwise; ``lambda_max`` overrides the computed grid head.
    """

    n_lambda: int = 50
    lambda_min_ratio: float = None
    alphas: tuple = DEFAULT_ALPHAS
    lambda_max: float = None

    def __post_init__(self):
        if self.n_lambda < 1:
            raise ValueError("n_lambda must be >= 1")
        if self.lambda_min_ratio is not None and not 0 < self.lambda_min_ratio < 1:
            raise ValueError("lambda_min_ratio must lie in (0, 1)")
        alphas = tuple(float(a) for a in self.alphas)
        for a in alphas:
            if not 0.0 <= a <= 1.0:
                raise ValueError("alphas must lie in [0, 1]")
        object.__setattr__(self, "alphas", alphas)

    def min_ratio(self, data) -> float:
        if self.lambda_min_ratio is not None:
            return self.lambda_min_ratio
        return 1e-3 if data.n > data.p else 1e-2


def _lambda_head_heuristic(data, grouping, config):
    """Cross-moment upper-bound candidate for the all-zero strength."""
    b = np.abs(data.gram_xy)
    if config.alpha < 1.0:
        mem = grouping.membership_matrix()
        wmin = np.empty_like(b)
        for k in range(grouping.n_outcomes):
            gs = np.flatnonzero(mem[:, k])
            wmin[:, k] = config.group_weights[:, gs].min(axis=1)
        vals = b / ((1.0 - config.alpha) * np.maximum(wmin, 1e-300))
        return float(vals.max()) if vals.size else 0.0
    # pure fused: no strength zeroes the fit; use the analogous difference bound
    best = 0.0
    for pi, (l, o) in enumerate(grouping.fuse_pairs):
        diff = np.abs(data.gram_xy[:, l] - data.gram_xy[:, o])
        w = np.maximum(config.pair_weights[:, pi], 1e-300)
        best = max(best, float((diff / (config.alpha * w)).max()))
    return best


def _zero_fit(data, grouping, config, lam, options):
    res = fit(data, grouping, config.with_penalty(lam=lam), options)
    return not res.support.any(), res


def make_lambda_grid(data, grouping, config, spec=None, options=None,
                     extra=()):
    """Decreasing log-spaced strength grid for ``config.alpha``.

    ``extra`` holds additional (data, config) pairs whose fits must also be
    zero at the grid head (used by cross-validation so every training fold
    starts from the null model).
    """
    spec = spec or PathSpec()
    options = options or SolverOptions()
    if spec.lambda_max is not None:
        head = float(spec.lambda_max)
    else:
        head = _lambda_head_heuristic(data, grouping, config)
        for d, c in extra:
            head = max(head, _lambda_head_heuristic(d, grouping, c))
        if head == 0.0:
            warnings.warn("zero response or empty penalty: strength grid "
                          "degenerates to {0}", RuntimeWarning)
            return np.zeros(1)
        if config.alpha < 1.0:
            for _ in range(60):
                ok, _res = _zero_fit(data, grouping, config, head, options)
                if ok:
                    for d, c in extra:
                        sub_ok, _ = _zero_fit(d, grouping, c, head, options)
                        ok = ok and sub_ok
                if ok:
                    break
                head *= 2.0
    if spec.n_lambda == 1:
        return np.array([head])
    return np.geomspace(head, head * spec.min_ratio(data), spec.n_lambda)


def fit_path(data, grouping, config, spec=None, options=None, lambdas=None):
    """Fit the full (strength, mixing) grid with warm starts.

    Returns a flat list of :class:`FitResult`, ordered mixing-major then by
    decreasing strength; each result records its own (lam, alpha).
    Solver non-convergence surfaces as per-point ``converged`` flags.
    ``lambdas`` (one decreasing row per mixing value) overrides the computed
    grids, so path points can be aligned with a cross-validation surface.
    """
    spec = spec or PathSpec()
    results = []
    for ai, alpha in enumerate(spec.alphas):
        cfg = config.with_penalty(alpha=alpha)
        if lambdas is None:
            lams = make_lambda_grid(data, grouping, cfg, spec, options)
        else:
            lams = np.asarray(lambdas)[ai]
        warm = None
        for lam in lams:
            res = fit(data, grouping, cfg.with_penalty(lam=lam), options,
                      warm_start=warm)
            warm = res.state
            results.append(res)
    return results


@dataclass(frozen=True)
class CVResult:
    """Cross-validation surface and selected penalties.

    ``lambdas[ai]`` is the decreasing strength grid for ``alphas[ai]``;
    ``fold_mse[ai, li, f, k]`` is the held-out MSE of outcome k in fold f.
    ``best`` / ``best_1se`` are (alpha index, lambda index) pairs: the
    minimizer of the mean curve and the largest strength within one standard
    error of it (at the minimizing mixing value).
    """

    alphas: np.ndarray
    lambdas: np.ndarray
    fold_mse: np.ndarray
    mean_mse: np.ndarray
    se_mse: np.ndarray
    best: tuple
    best_1se: tuple
    fold_assignments: np.ndarray
    seed: object
    k: int

    @property
    def best_lambda(self) -> float:
        return float(self.lambdas[self.best])

    @property
    def best_alpha(self) -> float:
        return float(self.alphas[self.best[0]])

    @property
    def best_1se_lambda(self) -> float:
        return float(self.lambdas[self.best_1se])


def _fold_problem(data, rows):
    X, Y = data.raw_rows(rows)
    return ProblemData(X, Y, center=data.centered,
                       standardize=data.standardized,
                       standardize_y=data.y_standardized,
                       zero_variance="keep")


def _cv_task(train, hold_X, hold_Y, grouping, cfg, lams, options):
    warm = None
    out = np.empty((lams.size, hold_Y.shape[1]))
    for li, lam in enumerate(lams):
        res = fit(train, grouping, cfg.with_penalty(lam=lam), options,
                  warm_start=warm)
        warm = res.state
        pred = predict(res, hold_X)
        out[li] = np.mean((pred - hold_Y) ** 2, axis=0)
    return out


def cross_validate(data, grouping, scheme, spec=None, k=10, seed=0,
                   options=None, n_jobs=1) -> CVResult:
    """K-fold cross-validation over the (strength, mixing) grid.

    Rows are partitioned by a seeded shuffle into folds whose sizes differ
    by at most one.  Standardization and penalty weights are recomputed on
    each fold's training part; the grid is computed once, with its head
    enlarged so every fold's head fit is the null model.  Fold-by-mixing
    tasks are independent and may run in parallel; results merge by grid
    position, so the output is reproducible for a fixed seed regardless of
    scheduling.
    """
    spec = spec or PathSpec()
    options = options or SolverOptions()
    n = data.n
    if k < 2:
        raise ValueError("k must be >= 2")
    if k > n:
        raise ValueError(f"k={k} exceeds n={n}")

    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    fold_rows = np.array_split(perm, k)
    assignments = np.empty(n, dtype=np.int64)
    for fi, rows in enumerate(fold_rows):
        assignments[rows] = fi

    all_rows = np.arange(n)
    folds = []
    for fi in range(k):
        hold = fold_rows[fi]
        train_rows = np.setdiff1d(all_rows, hold)
        train = _fold_problem(data, train_rows)
        fold_cfg = build_penalty_config(train, grouping, scheme)
        hx, hy = data.raw_rows(hold)
        folds.append((train, fold_cfg, hx, hy))

    full_cfg = build_penalty_config(data, grouping, scheme)
    n_alpha = len(spec.alphas)
    lambdas = np.empty((n_alpha, spec.n_lambda))
    for ai, alpha in enumerate(spec.alphas):
        cfg_a = full_cfg.with_penalty(alpha=alpha)
        extra = [(tr, fc.with_penalty(alpha=alpha)) for tr, fc, _, _ in folds]
        grid = make_lambda_grid(data, grouping, cfg_a, spec, options,
                                extra=extra)
        if grid.size < spec.n_lambda:  # degenerate all-zero grid
            grid = np.pad(grid, (0, spec.n_lambda - grid.size))
        lambdas[ai] = grid

    tasks = [(ai, fi) for ai in range(n_alpha) for fi in range(k)]

    def run_task(ai, fi):
        train, fold_cfg, hx, hy = folds[fi]
        return _cv_task(train, hx, hy, grouping,
                        fold_cfg.with_penalty(alpha=spec.alphas[ai]),
                        lambdas[ai], options)

    if n_jobs == 1:
        outputs = [run_task(ai, fi) for ai, fi in tasks]
    else:
        outputs = Parallel(n_jobs=n_jobs, prefer="threads")(
            delayed(run_task)(ai, fi) for ai, fi in tasks)

    K = data.n_outcomes
    fold_mse = np.empty((n_alpha, spec.n_lambda, k, K))
    for (ai, fi), out in zip(tasks, outputs):
        fold_mse[ai, :, fi, :] = out

    fold_means = fold_mse.mean(axis=3)            # (n_alpha, n_lambda, k)
    mean_mse = fold_means.mean(axis=2)
    se_mse = fold_means.std(axis=2, ddof=1) / np.sqrt(k)

    best = np.unravel_index(int(np.argmin(mean_mse)), mean_mse.shape)
    ai = best[0]
    within = mean_mse[ai] <= mean_mse[best] + se_mse[best]
    best_1se = (ai, int(np.flatnonzero(within)[0]))

    return CVResult(alphas=np.asarray(spec.alphas), lambdas=lambdas,
                    fold_mse=fold_mse, mean_mse=mean_mse, se_mse=se_mse,
                    best=(int(best[0]), int(best[1])), best_1se=best_1se,
                    fold_assignments=assignments, seed=seed, k=k)


def predict(fit_result, X_new):
    """Predictions on the original scale: X_new @ beta + intercept."""
    coef = fit_result.coef if isinstance(fit_result, FitResult) else fit_result
    if not isinstance(coef, CoefficientMatrix):
        raise TypeError("predict expects a FitResult or CoefficientMatrix")
    n_cols = X_new.shape[1]
    if n_cols != coef.p:
        raise DimensionMismatchError("columns", coef.p, n_cols)
    return X_new @ coef.beta + coef.intercept[None, :]
