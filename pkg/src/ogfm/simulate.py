"""Synthetic-data harness: generators, evaluation metrics and method runs.

Data generation follows a grouped-effects recipe: for the first ``z``
variables, per-entry Bernoulli(0.9) masks and per-(variable, group)
Bernoulli(1 - p_hs) masks multiply effect sizes drawn uniformly from
{-1, -0.5, -0.25, -0.125, 0.125, 0.25, 0.5, 1}; per variable, with
probability ``p_ge / 2`` effect sizes are equalized within each outcome
group, and independently with probability ``p_ge / 2`` across all outcomes.
Predictors have an AR(1) covariance and errors an AR(1) covariance scaled by
``sigma_scale``, both sampled through the AR recursion (the closed-form
banded Cholesky).  An ordinal family replaces Gaussian predictors by
Bernoulli(0.2) indicators and quantizes the latent responses onto 8 levels.

Randomness comes from NumPy's PCG64 generator seeded through
``default_rng([seed, rep, stream])`` sequences so scenario tables reproduce
across platforms; replications own disjoint streams and may run in any
order.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass

import numpy as np

from .data import CoefficientMatrix, ProblemData
from .exceptions import DimensionMismatchError
from .grouping import build_grouping, singleton_grouping
from .path import PathSpec, cross_validate, predict
from .solver import SolverOptions, fit
from .weights import WeightScheme, build_penalty_config

PRESET_GROUPS_K8 = ((0, 1, 2), (3, 4), (5, 6, 7))
EFFECT_SIZES = (-1.0, -0.5, -0.25, -0.125, 0.125, 0.25, 0.5, 1.0)
ORDINAL_CUTS = (-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0)
KNOWN_METHODS = ("ogfm", "ogfm_adaptive", "separate_lasso")
RESULT_COLUMNS = ("rep", "method", "rmse", "model_error",
                  "balanced_accuracy", "seconds")


@dataclass(frozen=True)
class SimulationScenario:
    """Generator parameters for one synthetic setting."""

    n: int
    p: int
    K: int = 8
    z: int = None
    p_hs: float = 0.25
    p_ge: float = 0.5
    response_family: str = "gaussian"
    sigma_scale: float = 4.0
    ar_rho_x: float = 0.5
    ar_rho_eps: float = 0.5
    test_size: int = 10000
    seed: int = 0
    groups: tuple = None

    def __post_init__(self):
        if self.z is None:
            object.__setattr__(self, "z", min(self.p, 25 if self.p <= 50 else 50))
        if not 0 <= self.z <= self.p:
            raise ValueError("z must lie in [0, p]")
        for name in ("p_hs", "p_ge"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.response_family not in ("gaussian", "ordinal"):
            raise ValueError(f"unknown response family {self.response_family!r}")
        if self.groups is None:
            if self.K != 8:
                raise ValueError("non-default K requires an explicit 3-group layout")
            object.__setattr__(self, "groups", PRESET_GROUPS_K8)
        groups = tuple(tuple(int(k) for k in g) for g in self.groups)
        if len(groups) != 3:
            raise ValueError("the effect generator expects exactly 3 outcome groups")
        seen = [k for g in groups for k in g]
        if sorted(seen) != list(range(self.K)):
            raise ValueError("groups must partition the outcomes")
        object.__setattr__(self, "groups", groups)

    @property
    def group_of_outcome(self) -> np.ndarray:
        gmap = np.empty(self.K, dtype=np.int64)
        for gi, g in enumerate(self.groups):
            gmap[list(g)] = gi
        return gmap


@dataclass(frozen=True)
class TrueModel:
    """Ground truth for one replication."""

    beta0: np.ndarray
    sigma_x: np.ndarray
    sigma_eps: np.ndarray
    xi: np.ndarray
    xi_g: np.ndarray


def _ar1_covariance(dim, rho, scale=1.0):
    idx = np.arange(dim)
    return scale * rho ** np.abs(idx[:, None] - idx[None, :])


def _ar1_sample(rng, n, dim, rho):
    """Rows with exact AR(1) correlation rho^|j-k| via the lag recursion."""
    z = rng.standard_normal((n, dim))
    out = np.empty_like(z)
    out[:, 0] = z[:, 0]
    c = np.sqrt(1.0 - rho * rho)
    for k in range(1, dim):
        out[:, k] = rho * out[:, k - 1] + c * z[:, k]
    return out


def gen_beta0(scenario, rng) -> TrueModel:
    """Draw the true coefficient matrix and covariances for one replication.

    Draw order is fixed (effect sizes, within-group equality events,
    all-outcome equality events, entry masks, group masks) so results are
    reproducible for a given generator state.
    """
    p, K, z = scenario.p, scenario.K, scenario.z
    effects = rng.choice(np.asarray(EFFECT_SIZES), size=(p, K))
    within = rng.random(p) < scenario.p_ge / 2.0
    allsame = rng.random(p) < scenario.p_ge / 2.0
    xi = (rng.random((p, K)) < 0.9).astype(np.int8)
    xi_g = (rng.random((p, len(scenario.groups))) < 1.0 - scenario.p_hs).astype(np.int8)

    for g in scenario.groups:
        rows = np.flatnonzero(within)
        effects[np.ix_(rows, g)] = effects[rows, g[0]][:, None]
    rows = np.flatnonzero(allsame)
    effects[rows, :] = effects[rows, 0][:, None]

    beta0 = effects * xi * xi_g[:, scenario.group_of_outcome]
    beta0[z:, :] = 0.0
    return TrueModel(beta0=beta0,
                     sigma_x=_ar1_covariance(p, scenario.ar_rho_x),
                     sigma_eps=_ar1_covariance(K, scenario.ar_rho_eps,
                                               scenario.sigma_scale),
                     xi=xi, xi_g=xi_g)


def _noise(rng, n, scenario):
    return np.sqrt(scenario.sigma_scale) * _ar1_sample(
        rng, n, scenario.K, scenario.ar_rho_eps)


def gen_gaussian_data(scenario, model, rng):
    """AR-correlated Gaussian predictors and errors; returns (train, test)."""
    X = _ar1_sample(rng, scenario.n, scenario.p, scenario.ar_rho_x)
    Y = X @ model.beta0 + _noise(rng, scenario.n, scenario)
    Xt = _ar1_sample(rng, scenario.test_size, scenario.p, scenario.ar_rho_x)
    Yt = Xt @ model.beta0 + _noise(rng, scenario.test_size, scenario)
    return ProblemData(X, Y), ProblemData(Xt, Yt)


def ordinal_levels(latent):
    """Quantize latent values onto levels 1..8 with fixed cut points.

    The k-th level covers the half-open interval ending at the k-th cut,
    boundaries included on the left cell; values above the last cut map to
    level 8.  The map is monotone.
    """
    latent = np.asarray(latent, dtype=float)
    return 1.0 + np.searchsorted(np.asarray(ORDINAL_CUTS), latent, side="left")


def gen_ordinal_data(scenario, model, rng):
    """Bernoulli(0.2) predictors with 8-level quantized latent responses."""
    def one(n):
        X = (rng.random((n, scenario.p)) < 0.2).astype(float)
        latent = X @ model.beta0 + _noise(rng, n, scenario)
        return ProblemData(X, ordinal_levels(latent))
    return one(scenario.n), one(scenario.test_size)


# -- evaluation metrics ------------------------------------------------------

def model_error(beta_hat, beta0, sigma_x) -> float:
    """Design-weighted estimation loss tr[(B - B0)' Sigma (B - B0)]."""
    beta_hat = np.asarray(beta_hat, dtype=float)
    beta0 = np.asarray(beta0, dtype=float)
    sigma_x = np.asarray(sigma_x, dtype=float)
    if beta_hat.shape != beta0.shape:
        raise DimensionMismatchError("beta", beta0.shape, beta_hat.shape)
    if sigma_x.shape != (beta0.shape[0], beta0.shape[0]):
        raise DimensionMismatchError("sigma_x", (beta0.shape[0],) * 2,
                                     sigma_x.shape)
    if np.max(np.abs(sigma_x - sigma_x.T)) > 1e-12:
        raise ValueError("sigma_x must be symmetric (tolerance 1e-12)")
    delta = beta_hat - beta0
    return float(np.sum(delta * (sigma_x @ delta)))


def avg_rmse(pred, y) -> float:
    """Per-outcome root-mean-squared errors, averaged over outcomes."""
    pred = np.asarray(pred, dtype=float)
    y = np.asarray(y, dtype=float)
    if pred.shape != y.shape:
        raise DimensionMismatchError("predictions", y.shape, pred.shape)
    return float(np.mean(np.sqrt(np.mean((pred - y) ** 2, axis=0))))


def balanced_accuracy(support, beta0) -> float:
    """Mean of entrywise true-positive and true-negative rates.

    Both rates use a max(1, count) denominator so degenerate all-zero or
    all-nonzero truths stay defined.
    """
    s = np.asarray(support) != 0
    t = np.asarray(beta0) != 0
    if s.shape != t.shape:
        raise DimensionMismatchError("support", t.shape, s.shape)
    tpr = float((s & t).sum()) / max(1, int(t.sum()))
    tnr = float((~s & ~t).sum()) / max(1, int((~t).sum()))
    return 0.5 * (tpr + tnr)


def validation_r2(pred, y) -> np.ndarray:
    """Per-outcome proportion of held-out variance explained (can be < 0)."""
    pred = np.asarray(pred, dtype=float)
    y = np.asarray(y, dtype=float)
    if pred.shape != y.shape:
        raise DimensionMismatchError("predictions", y.shape, pred.shape)
    sse = np.sum((y - pred) ** 2, axis=0)
    sst = np.sum((y - y.mean(axis=0)) ** 2, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(sst > 0, 1.0 - sse / sst, 0.0)
    return out


# -- method runners ----------------------------------------------------------

@dataclass(frozen=True)
class TuningProtocol:
    """Cross-validation protocol used inside scenario runs (desk scale)."""

    n_lambda: int = 10
    alphas: tuple = (1e-3, 0.1, 0.5)
    kfolds: int = 5
    lambda_min_ratio: float = None
    eps_abs: float = 1e-5
    eps_rel: float = 1e-5
    max_iter: int = 2000
    n_jobs: int = 1

    def solver_options(self) -> SolverOptions:
        return SolverOptions(eps_abs=self.eps_abs, eps_rel=self.eps_rel,
                             max_iter=self.max_iter)


def _fit_grouped(train, scenario, protocol, adaptive, seed):
    grouping = build_grouping(scenario.K, [scenario.groups])
    scheme = WeightScheme(adaptive=adaptive)
    spec = PathSpec(n_lambda=protocol.n_lambda, alphas=protocol.alphas,
                    lambda_min_ratio=protocol.lambda_min_ratio)
    opts = protocol.solver_options()
    cv = cross_validate(train, grouping, scheme, spec, k=protocol.kfolds,
                        seed=seed, options=opts, n_jobs=protocol.n_jobs)
    config = build_penalty_config(train, grouping, scheme,
                                  lam=cv.best_lambda, alpha=cv.best_alpha)
    res = fit(train, grouping, config, opts)
    return res.coef, res.support


def _fit_separate_lasso(train, scenario, protocol, seed):
    """Independent per-outcome lasso fits, each tuned on its own strength grid."""
    grouping = singleton_grouping(1)
    scheme = WeightScheme()
    spec = PathSpec(n_lambda=protocol.n_lambda, alphas=(0.0,),
                    lambda_min_ratio=protocol.lambda_min_ratio)
    opts = protocol.solver_options()
    betas, intercepts, supports = [], [], []
    for k in range(scenario.K):
        data_k = ProblemData(train.X_raw, train.Y_raw[:, [k]],
                             center=train.centered,
                             standardize=train.standardized,
                             standardize_y=train.y_standardized)
        cv = cross_validate(data_k, grouping, scheme, spec,
                            k=protocol.kfolds, seed=seed, options=opts,
                            n_jobs=protocol.n_jobs)
        config = build_penalty_config(data_k, grouping, scheme,
                                      lam=cv.best_lambda, alpha=0.0)
        res = fit(data_k, grouping, config, opts)
        betas.append(res.coef.beta[:, 0])
        intercepts.append(res.coef.intercept[0])
        supports.append(res.support[:, 0])
    coef = CoefficientMatrix(np.column_stack(betas), np.array(intercepts))
    return coef, np.column_stack(supports)


def run_scenario(scenario, methods=KNOWN_METHODS, n_reps=10, seed=0,
                 protocol=None):
    """Replicated method comparison on one scenario.

    Returns a list of row dicts with keys ``rep, method, rmse, model_error,
    balanced_accuracy, seconds``.  All stochastic outputs are a pure
    function of ``seed``; the ``seconds`` column is measured wall time and
    is the only non-seeded field.  Per-point solver non-convergence inside
    cross-validation is logged as a warning, never fatal.
    """
    methods = tuple(methods)
    for m in methods:
        if m not in KNOWN_METHODS:
            raise ValueError(f"unknown method {m!r}; choose from {KNOWN_METHODS}")
    protocol = protocol or TuningProtocol()
    rows = []
    for rep in range(n_reps):
        model = gen_beta0(scenario, np.random.default_rng([seed, rep, 0]))
        data_rng = np.random.default_rng([seed, rep, 1])
        if scenario.response_family == "gaussian":
            train, test = gen_gaussian_data(scenario, model, data_rng)
        else:
            train, test = gen_ordinal_data(scenario, model, data_rng)
        for mi, method in enumerate(methods):
            cv_seed = [seed, rep, 2 + mi]
            start = time.perf_counter()
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                if method == "ogfm":
                    coef, support = _fit_grouped(train, scenario, protocol,
                                                 False, cv_seed)
                elif method == "ogfm_adaptive":
                    coef, support = _fit_grouped(train, scenario, protocol,
                                                 True, cv_seed)
                else:
                    coef, support = _fit_separate_lasso(train, scenario,
                                                        protocol, cv_seed)
            seconds = time.perf_counter() - start
            pred = predict(coef, test.X_raw)
            rows.append({
                "rep": rep,
                "method": method,
                "rmse": avg_rmse(pred, test.Y_raw),
                "model_error": model_error(coef.beta, model.beta0,
                                           model.sigma_x),
                "balanced_accuracy": balanced_accuracy(support, model.beta0),
                "seconds": seconds,
            })
    return rows


def results_to_csv(rows) -> str:
    """Render scenario rows as a comma-delimited table with a header."""
    lines = [",".join(RESULT_COLUMNS)]
    for row in rows:
        cells = []
        for col in RESULT_COLUMNS:
            v = row[col]
            cells.append(f"{v:.17g}" if isinstance(v, float) else str(v))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


_SCENARIO_KEYS = {
    "n": int, "p": int, "k": int, "z": int,
    "p_hs": float, "p_ge": float,
    "family": str, "sigma_scale": float,
    "ar_rho_x": float, "ar_rho_eps": float,
    "test_size": int, "seed": int,
    "reps": int, "methods": str, "groups": str,
    "nlambda": int, "alphas": str, "kfolds": int,
    "lambda_min_ratio": float, "max_iter": int,
}


def parse_scenario_file(source):
    """Parse the flat key=value scenario format.

    Recognized keys (case-insensitive): n, p, K, z, p_HS, p_GE, family,
    sigma_scale, ar_rho_X, ar_rho_eps, test_size, seed, groups
    (pipe-separated 1-based index lists, e.g. ``1,2,3|4,5|6,7,8``) plus run
    controls reps, methods (comma list), nlambda, alphas (comma list),
    kfolds, lambda_min_ratio, max_iter.  Blank lines and ``#`` comments are
    ignored.

    Returns ``(scenario, run_kwargs)`` where run_kwargs holds ``methods``,
    ``n_reps``, ``seed`` and ``protocol`` for :func:`run_scenario`.
    """
    if hasattr(source, "read"):
        lines = source.read().splitlines()
    elif isinstance(source, str) and "\n" not in source:
        with open(source, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    else:
        lines = str(source).splitlines()

    raw = {}
    for ln, line in enumerate(lines, start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ValueError(f"line {ln}: expected key=value, got {body!r}")
        key, val = (s.strip() for s in body.split("=", 1))
        lkey = key.lower()
        if lkey not in _SCENARIO_KEYS:
            raise ValueError(f"line {ln}: unknown scenario key {key!r}")
        try:
            raw[lkey] = _SCENARIO_KEYS[lkey](val)
        except ValueError:
            raise ValueError(f"line {ln}: bad value {val!r} for {key}") from None

    for required in ("n", "p"):
        if required not in raw:
            raise ValueError(f"scenario file must set {required}")

    groups = None
    if "groups" in raw:
        groups = tuple(tuple(int(s) - 1 for s in part.split(","))
                       for part in raw["groups"].split("|"))
    scenario = SimulationScenario(
        n=raw["n"], p=raw["p"], K=raw.get("k", 8), z=raw.get("z"),
        p_hs=raw.get("p_hs", 0.25), p_ge=raw.get("p_ge", 0.5),
        response_family=raw.get("family", "gaussian"),
        sigma_scale=raw.get("sigma_scale", 4.0),
        ar_rho_x=raw.get("ar_rho_x", 0.5),
        ar_rho_eps=raw.get("ar_rho_eps", 0.5),
        test_size=raw.get("test_size", 10000),
        seed=raw.get("seed", 0), groups=groups)

    protocol = TuningProtocol(
        n_lambda=raw.get("nlambda", TuningProtocol.n_lambda),
        alphas=(tuple(float(s) for s in raw["alphas"].split(","))
                if "alphas" in raw else TuningProtocol.alphas),
        kfolds=raw.get("kfolds", TuningProtocol.kfolds),
        lambda_min_ratio=raw.get("lambda_min_ratio"),
        max_iter=raw.get("max_iter", TuningProtocol.max_iter))
    methods = (tuple(s.strip() for s in raw["methods"].split(","))
               if "methods" in raw else KNOWN_METHODS)
    run_kwargs = {"methods": methods, "n_reps": raw.get("reps", 10),
                  "seed": raw.get("seed", 0), "protocol": protocol}
    return scenario, run_kwargs
