"""Penalty configuration and evaluation of the penalized objective.

The objective is the multivariate least-squares loss, normalized by twice
the sample size, plus two structured penalties: a weighted group-norm sum
over (variable, outcome-group) blocks and a weighted absolute-difference sum
over (variable, fuse-pair) combinations.  A single overall strength ``lam``
is split between the two by the mixing fraction ``alpha``: the group part
gets ``lam * (1 - alpha)`` and the fused part ``lam * alpha``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .data import CoefficientMatrix
from .exceptions import DimensionMismatchError


@dataclass(frozen=True)
class PenaltyConfig:
    """Penalty strengths and per-block weights.

    Attributes
    ----------
    lam : float
        Overall penalty strength (>= 0).
    alpha : float
        Fraction of the penalty given to the fused part, in [0, 1].
    group_weights : ndarray (p, n_groups)
        Weight of each (variable, deduplicated group) block.
    pair_weights : ndarray (p, n_pairs)
        Weight of each (variable, fuse pair) difference.
    gamma1, gamma2 : float
        Exponents used when the weights were built adaptively (recorded for
        provenance; not used at evaluation time).
    weight_cap : float
        Cap applied to every stored weight.
    """

    lam: float
    alpha: float
    group_weights: np.ndarray
    pair_weights: np.ndarray
    gamma1: float = 0.5
    gamma2: float = 0.5
    weight_cap: float = 1e8

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        gw = np.ascontiguousarray(np.asarray(self.group_weights, dtype=float))
        pw = np.ascontiguousarray(np.asarray(self.pair_weights, dtype=float))
        for name, w in (("group_weights", gw), ("pair_weights", pw)):
            if w.ndim != 2:
                raise DimensionMismatchError(name, "2-d array", f"{w.ndim}-d")
            if not np.all(np.isfinite(w)) or np.any(w < 0):
                raise ValueError(f"{name} must be finite and nonnegative")
            if np.any(w > self.weight_cap * (1 + 1e-12)):
                raise ValueError(f"{name} exceeds weight_cap")
        gw.setflags(write=False)
        pw.setflags(write=False)
        object.__setattr__(self, "group_weights", gw)
        object.__setattr__(self, "pair_weights", pw)

    @property
    def lam1(self) -> float:
        """Effective group-penalty strength lam * (1 - alpha)."""
        return self.lam * (1.0 - self.alpha)

    @property
    def lam2(self) -> float:
        """Effective fused-penalty strength lam * alpha."""
        return self.lam * self.alpha

    @property
    def p(self) -> int:
        return self.group_weights.shape[0]

    def with_penalty(self, lam=None, alpha=None) -> "PenaltyConfig":
        """Copy with a new strength and/or mixing fraction, same weights."""
        return replace(self,
                       lam=self.lam if lam is None else float(lam),
                       alpha=self.alpha if alpha is None else float(alpha))


def _as_beta(beta):
    if isinstance(beta, CoefficientMatrix):
        return beta.beta
    return np.atleast_2d(np.asarray(beta, dtype=float))


def eval_penalties(beta, grouping, config):
    """Unscaled penalty values (group part, fused part) at ``beta``.

    The group part sums, over variables and deduplicated groups, the
    weighted Euclidean norm of the coefficient block; the fused part sums
    weighted absolute differences with each unordered pair counted once.
    """
    B = _as_beta(beta)
    p, K = B.shape
    if K != grouping.n_outcomes:
        raise DimensionMismatchError("outcomes", grouping.n_outcomes, K)
    if config.group_weights.shape != (p, grouping.n_groups):
        raise DimensionMismatchError(
            "group_weights", (p, grouping.n_groups), config.group_weights.shape)
    if config.pair_weights.shape != (p, grouping.n_pairs):
        raise DimensionMismatchError(
            "pair_weights", (p, grouping.n_pairs), config.pair_weights.shape)

    p1 = 0.0
    for gi, g in enumerate(grouping.groups):
        norms = np.sqrt(np.sum(B[:, list(g)] ** 2, axis=1))
        p1 += float(config.group_weights[:, gi] @ norms)
    p2 = 0.0
    for pi, (l, o) in enumerate(grouping.fuse_pairs):
        p2 += float(config.pair_weights[:, pi] @ np.abs(B[:, l] - B[:, o]))
    return p1, p2


def quad_loss(gram_xx, gram_xy, y_mean_sq, beta):
    """Least-squares loss ||Y - X b||_F^2 / (2n) from Gram quantities."""
    B = _as_beta(beta)
    val = 0.5 * (y_mean_sq - 2.0 * float(np.sum(B * gram_xy))
                 + float(np.sum(B * (gram_xx @ B))))
    return max(val, 0.0)


def eval_objective(data, beta, grouping, config):
    """Full penalized objective at ``beta`` on the prepared scale.

    ``beta`` must be expressed on the same (centered/standardized) scale as
    ``data``'s prepared matrices; the intercept is handled by the centering
    and does not appear.
    """
    B = _as_beta(beta)
    if B.shape != (data.p, data.n_outcomes):
        raise DimensionMismatchError("beta", (data.p, data.n_outcomes), B.shape)
    p1, p2 = eval_penalties(B, grouping, config)
    loss = quad_loss(data.gram_xx, data.gram_xy, data.y_mean_sq, B)
    return loss + config.lam1 * p1 + config.lam2 * p2
