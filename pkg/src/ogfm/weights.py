"""Base estimates and penalty-weight construction.

Adaptive weights are inverse powers of a base coefficient estimate: the
joint least-squares solution when the sample size allows it, otherwise
per-(variable, outcome) univariate regression slopes.  Non-adaptive weights
put the square root of the group size on each group and one on each pair.
Weights of set-identical groups arising at different hierarchy levels are
merged by summation (recorded in the grouping's multiplicity).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import CoefficientMatrix
from .exceptions import DimensionMismatchError, SingularDesignError
from .penalties import PenaltyConfig

EIG_RATIO_TOL = 1e-10


def compute_ols(data) -> CoefficientMatrix:
    """Joint least-squares solution on the prepared scale.

    Requires n > p and a numerically nonsingular Gram matrix (smallest
    eigenvalue above ``1e-10`` times the largest); otherwise raises
    :class:`SingularDesignError` directing the caller to the marginal base
    estimate.
    """
    if data.n <= data.p:
        raise SingularDesignError(
            f"n={data.n} <= p={data.p}; use compute_marginal_weights_base "
            "for the adaptive-weight base estimate")
    G = data.gram_xx
    eigs = np.linalg.eigvalsh(G)
    if eigs[0] <= EIG_RATIO_TOL * max(eigs[-1], 0.0):
        raise SingularDesignError(
            "X'X is numerically singular (eigenvalue ratio "
            f"{eigs[0] / max(eigs[-1], 1e-300):.2e}); use "
            "compute_marginal_weights_base instead")
    beta = np.linalg.solve(G, data.gram_xy)
    return CoefficientMatrix(beta, np.zeros(data.n_outcomes))


def compute_marginal_weights_base(data) -> CoefficientMatrix:
    """Univariate regression slope of each outcome on each predictor."""
    d = np.diag(data.gram_xx).copy()
    zero = np.flatnonzero(d <= 0)
    if zero.size:
        raise ValueError(f"column {int(zero[0])} of X has zero norm")
    beta = data.gram_xy / d[:, None]
    return CoefficientMatrix(beta, np.zeros(data.n_outcomes))


def compute_adaptive_weights(base, grouping, gamma1, gamma2, cap=1e8):
    """Inverse-power weights from a base estimate, capped and merged.

    Each (variable, group) weight is ``min(norm(base block) ** -gamma1,
    cap)`` summed over coincident groups and re-capped; each pair weight is
    ``min(|base difference| ** -gamma2, cap)``.  Degenerate zero blocks or
    differences hit the cap rather than becoming infinite.
    """
    if gamma1 <= 0 or gamma2 <= 0:
        raise ValueError("gamma1 and gamma2 must be positive")
    B = base.beta if isinstance(base, CoefficientMatrix) else np.asarray(base, float)
    p, K = B.shape
    if K != grouping.n_outcomes:
        raise DimensionMismatchError("outcomes", grouping.n_outcomes, K)

    gw = np.empty((p, grouping.n_groups))
    with np.errstate(divide="ignore", over="ignore"):
        for gi, g in enumerate(grouping.groups):
            norms = np.sqrt(np.sum(B[:, list(g)] ** 2, axis=1))
            w = np.where(norms > 0, norms ** (-gamma1), np.inf)
            gw[:, gi] = np.minimum(w, cap) * grouping.multiplicity[gi]
        pw = np.empty((p, grouping.n_pairs))
        for pi, (l, o) in enumerate(grouping.fuse_pairs):
            diff = np.abs(B[:, l] - B[:, o])
            w = np.where(diff > 0, diff ** (-gamma2), np.inf)
            pw[:, pi] = np.minimum(w, cap)
    return np.minimum(gw, cap), np.minimum(pw, cap)


def make_nonadaptive_weights(grouping, p, cap=1e8):
    """Size-based group weights (sqrt of group size) and unit pair weights."""
    sizes = grouping.group_sizes.astype(float)
    mult = np.asarray(grouping.multiplicity, dtype=float)
    gw = np.tile(np.sqrt(sizes) * mult, (p, 1))
    pw = np.ones((p, grouping.n_pairs))
    return np.minimum(gw, cap), np.minimum(pw, cap)


@dataclass(frozen=True)
class WeightScheme:
    """Recipe for building penalty weights from data.

    ``base="auto"`` picks the joint least-squares estimate when feasible and
    falls back to marginal slopes for wide or ill-conditioned designs.
    """

    adaptive: bool = False
    gamma1: float = 0.5
    gamma2: float = 0.5
    weight_cap: float = 1e8
    base: str = "auto"  # "auto" | "ols" | "marginal"

    def __post_init__(self):
        if self.base not in ("auto", "ols", "marginal"):
            raise ValueError(f"unknown base {self.base!r}")


def build_penalty_config(data, grouping, scheme=None, lam=0.0, alpha=0.0) -> PenaltyConfig:
    """Populate a :class:`PenaltyConfig` for the given data and grouping."""
    scheme = scheme or WeightScheme()
    if scheme.adaptive:
        if scheme.base == "marginal":
            base = compute_marginal_weights_base(data)
        elif scheme.base == "ols":
            base = compute_ols(data)
        else:
            try:
                base = compute_ols(data)
            except SingularDesignError:
                base = compute_marginal_weights_base(data)
        gw, pw = compute_adaptive_weights(
            base, grouping, scheme.gamma1, scheme.gamma2, scheme.weight_cap)
    else:
        gw, pw = make_nonadaptive_weights(grouping, data.p, scheme.weight_cap)
    return PenaltyConfig(lam=float(lam), alpha=float(alpha),
                         group_weights=gw, pair_weights=pw,
                         gamma1=scheme.gamma1, gamma2=scheme.gamma2,
                         weight_cap=scheme.weight_cap)
