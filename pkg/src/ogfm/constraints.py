"""Constraint matrices for the splitting formulation, plus structural diagnostics.

Coefficients are vectorized outcome-block-major: the coefficient of variable
``j`` (0-based) for outcome ``k`` sits at position ``k * p + j``.  The group
replication matrix stacks, for every (variable, group) pair, one row per
group member so that multiplying it against the vectorized coefficients
lists each coefficient once per group membership.  The pair difference
matrix has one +1/-1 row per (variable, fuse pair) giving all fused
differences.

Row order is fixed so outputs are bit-reproducible: variable-major, then
deduplicated group order (respectively given pair order), then outcome
order within a group.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .exceptions import DimensionMismatchError


def coef_index(j, k, p):
    """Position of coefficient (variable j, outcome k) in the vectorization."""
    return k * p + j


@dataclass(frozen=True)
class ConstraintMatrices:
    """Sparse constraint matrices with slice bookkeeping.

    Attributes
    ----------
    group_mat : csr_matrix, shape (m, K*p)
        0/1 replication matrix; m = p * sum of deduplicated group sizes.
    pair_mat : csr_matrix, shape (e, K*p)
        +1/-1 difference matrix; e = p * number of fuse pairs.
    slice_starts : ndarray (p * n_groups,)
        Start row of each contiguous (variable, group) slice of group_mat.
    slice_lengths : ndarray (p * n_groups,)
        Length of each slice (the group size).
    ftf_diag : ndarray (K*p,)
        Diagonal of group_mat' group_mat: the number of groups containing
        each coefficient.
    """

    group_mat: sp.csr_matrix
    pair_mat: sp.csr_matrix
    slice_starts: np.ndarray
    slice_lengths: np.ndarray
    ftf_diag: np.ndarray

    @property
    def n_group_rows(self) -> int:
        return self.group_mat.shape[0]

    @property
    def n_pair_rows(self) -> int:
        return self.pair_mat.shape[0]

    def pair_row(self, j, pair_index, p):
        """Row of pair_mat holding (variable j, pair pair_index)."""
        n_pairs = self.pair_mat.shape[0] // max(p, 1)
        return j * n_pairs + pair_index


def group_replication_matrix(grouping, p):
    """Build the group replication matrix and its slice offsets.

    Returns ``(matrix, slice_starts, slice_lengths)``; the slice for
    (variable j, group g) extracts the coefficients of variable j limited to
    the outcomes in g, in ascending outcome order.
    """
    sizes = grouping.group_sizes
    per_var = int(sizes.sum())
    m = p * per_var
    K = grouping.n_outcomes

    member_cols = np.concatenate(
        [np.asarray(g, dtype=np.int64) for g in grouping.groups]
    ) if grouping.n_groups else np.zeros(0, dtype=np.int64)
    # columns for variable j are member_cols * p + j
    cols = (np.tile(member_cols, p) * p
            + np.repeat(np.arange(p, dtype=np.int64), per_var))
    F = sp.csr_matrix(
        (np.ones(m), (np.arange(m, dtype=np.int64), cols)), shape=(m, K * p))

    lengths = np.tile(sizes, p)
    starts = np.concatenate([[0], np.cumsum(lengths)[:-1]]).astype(np.int64)
    return F, starts, lengths


def pair_difference_matrix(grouping, p):
    """Build the pair difference matrix (+1 at the lower outcome index)."""
    K = grouping.n_outcomes
    pairs = grouping.fuse_pairs
    for l, o in pairs:
        if l == o:
            raise ValueError(f"degenerate fuse pair ({l}, {o})")
    e = p * len(pairs)
    if e == 0:
        return sp.csr_matrix((0, K * p))
    lo = np.array(pairs, dtype=np.int64)  # (n_pairs, 2)
    j_rep = np.repeat(np.arange(p, dtype=np.int64), len(pairs))
    plus_cols = np.tile(lo[:, 0], p) * p + j_rep
    minus_cols = np.tile(lo[:, 1], p) * p + j_rep
    rows = np.arange(e, dtype=np.int64)
    data = np.concatenate([np.ones(e), -np.ones(e)])
    D = sp.csr_matrix(
        (data, (np.concatenate([rows, rows]),
                np.concatenate([plus_cols, minus_cols]))),
        shape=(e, K * p))
    return D


def build_constraint_matrices(grouping, p) -> ConstraintMatrices:
    F, starts, lengths = group_replication_matrix(grouping, p)
    D = pair_difference_matrix(grouping, p)
    ftf = np.asarray(F.T.dot(F).diagonal()).ravel()
    return ConstraintMatrices(F, D, starts, lengths, ftf)


def compute_hull(grouping, nonzero, p):
    """Smallest group-expressible superset of a nonzero coefficient set.

    The hull is the complement of the union of all (variable, group)
    coefficient blocks disjoint from ``nonzero``.  With singleton groups
    present it always equals ``nonzero`` itself.

    Parameters
    ----------
    nonzero : iterable of int
        0-based positions in the vectorized coefficient layout.
    p : int
        Number of variables.

    Returns
    -------
    ndarray of sorted 0-based coefficient positions.
    """
    K = grouping.n_outcomes
    total = K * p
    nz = np.zeros(total, dtype=bool)
    idx = np.asarray(sorted(set(int(i) for i in nonzero)), dtype=np.int64)
    if idx.size:
        if idx[0] < 0 or idx[-1] >= total:
            raise ValueError(f"nonzero index outside 0..{total - 1}")
        nz[idx] = True
    removed = np.zeros(total, dtype=bool)
    for j in range(p):
        for g in grouping.groups:
            block = np.array([coef_index(j, k, p) for k in g], dtype=np.int64)
            if not nz[block].any():
                removed[block] = True
    return np.flatnonzero(~removed)


def detect_structure(fit, tol_zero=None, tol_fuse=None):
    """Post-fit support and fused-equality sets from the coefficient estimate.

    Works on the prepared-scale coefficients (the scale the penalties act
    on), so exact fusions survive per-outcome response scaling.

    Parameters
    ----------
    fit : FitResult
    tol_zero : float, optional
        Magnitudes above this count as nonzero.  Defaults to 0 when the
        support was polished to exact zeros, else ``1e-4 * max|beta|``.
    tol_fuse : float, optional
        Pairs whose coefficients are both in the support and differ by at
        most this are reported fused.  Defaults to ``1e-6 * (1 + max|beta|)``.

    Returns
    -------
    support : ndarray bool (p, K)
    fused : ndarray bool (p, n_pairs)
    """
    beta = np.asarray(fit.beta_std)
    grouping = fit.grouping
    if beta.shape[1] != grouping.n_outcomes:
        raise DimensionMismatchError("outcomes", grouping.n_outcomes, beta.shape[1])
    bmax = np.max(np.abs(beta)) if beta.size else 0.0
    if tol_zero is None:
        tol_zero = 0.0 if fit.polished else 1e-4 * bmax
    if tol_fuse is None:
        tol_fuse = 1e-6 * (1.0 + bmax)
    support = np.abs(beta) > tol_zero
    pairs = grouping.fuse_pairs
    fused = np.zeros((beta.shape[0], len(pairs)), dtype=bool)
    for pi, (l, o) in enumerate(pairs):
        fused[:, pi] = (support[:, l] & support[:, o]
                        & (np.abs(beta[:, l] - beta[:, o]) <= tol_fuse))
    return support, fused
