"""Independent reference solvers used to check the package implementation.

Everything here deliberately avoids the package's solver internals: a
diminishing-step subgradient method on the raw penalized objective, a
coordinate-descent lasso, closed-form collapsed least squares, and a
brute-force hull enumeration.
"""

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is in the test extras
    def njit(**kwargs):
        def deco(fn):
            return fn
        return deco


@njit(cache=True)
def _subgrad_loop(Xs, Ys, lam1, lam2, gsizes, gmembers, goffsets, W1,
                  pairs, W2, n_iter, delta0, phase_len, shrink):
    n, p = Xs.shape
    K = Ys.shape[1]
    g = gsizes.shape[0]
    e = pairs.shape[0]
    beta = np.zeros((p, K))
    best = np.zeros((p, K))
    fbest = 1e300
    grad = np.zeros((p, K))
    delta = delta0
    for t in range(n_iter):
        if t > 0 and t % phase_len == 0:
            # restart each phase from the incumbent with a smaller target gap
            delta *= shrink
            for a in range(p):
                for b in range(K):
                    beta[a, b] = best[a, b]
        R = np.dot(Xs, beta) - Ys
        f = 0.0
        for i in range(n):
            for k in range(K):
                f += R[i, k] * R[i, k]
        f *= 0.5 / n
        G0 = np.dot(Xs.T, R) / n
        for a in range(p):
            for b in range(K):
                grad[a, b] = G0[a, b]
        for j in range(p):
            for gi in range(g):
                off = goffsets[gi]
                sz = gsizes[gi]
                nrm = 0.0
                for ii in range(sz):
                    v = beta[j, gmembers[off + ii]]
                    nrm += v * v
                nrm = np.sqrt(nrm)
                w = lam1 * W1[j, gi]
                f += w * nrm
                if nrm > 0.0:
                    for ii in range(sz):
                        k = gmembers[off + ii]
                        grad[j, k] += w * beta[j, k] / nrm
            for pi in range(e):
                l = pairs[pi, 0]
                o = pairs[pi, 1]
                d = beta[j, l] - beta[j, o]
                w = lam2 * W2[j, pi]
                f += w * abs(d)
                if d > 0.0:
                    grad[j, l] += w
                    grad[j, o] -= w
                elif d < 0.0:
                    grad[j, l] -= w
                    grad[j, o] += w
        if f < fbest:
            fbest = f
            for a in range(p):
                for b in range(K):
                    best[a, b] = beta[a, b]
        gn2 = 0.0
        for a in range(p):
            for b in range(K):
                gn2 += grad[a, b] * grad[a, b]
        if gn2 <= 1e-300:
            break
        step = (f - fbest + delta) / gn2
        for a in range(p):
            for b in range(K):
                beta[a, b] -= step * grad[a, b]
    return fbest, best


def subgradient_solve(Xs, Ys, grouping, config, n_iter=1_000_000,
                      delta0=None, phase_len=20_000, shrink=0.7):
    """Diminishing-step subgradient descent on the penalized objective.

    Runs the full iteration budget, tracking the best objective seen.  The
    step is a Polyak-style ratio with a target offset that shrinks
    geometrically between restart phases, a valid diminishing step
    sequence.  Returns (best objective, best point).
    """
    Xs = np.ascontiguousarray(Xs, dtype=np.float64)
    Ys = np.ascontiguousarray(Ys, dtype=np.float64)
    gsizes = grouping.group_sizes.astype(np.int64)
    gmembers = (np.concatenate([np.asarray(g, dtype=np.int64)
                                for g in grouping.groups])
                if grouping.n_groups else np.zeros(0, dtype=np.int64))
    goffsets = np.concatenate([[0], np.cumsum(gsizes)[:-1]]).astype(np.int64)
    pairs = (np.asarray(grouping.fuse_pairs, dtype=np.int64).reshape(-1, 2)
             if grouping.n_pairs else np.zeros((0, 2), dtype=np.int64))
    if delta0 is None:
        f0 = 0.5 * np.mean(np.sum(Ys * Ys, axis=1))
        delta0 = 1e-2 * (1.0 + f0)
    return _subgrad_loop(
        Xs, Ys, float(config.lam1), float(config.lam2), gsizes, gmembers,
        goffsets, np.ascontiguousarray(config.group_weights), pairs,
        np.ascontiguousarray(config.pair_weights), int(n_iter),
        float(delta0), int(phase_len), float(shrink))


def cd_lasso(X, y, lam, weights, max_sweeps=200_000, tol=1e-14):
    """Cyclic coordinate descent for the single-response lasso.

    Minimizes ||y - X b||^2 / (2n) + lam * sum_j w_j |b_j| by exact
    per-coordinate updates until the largest coordinate move in a sweep
    drops below ``tol``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    n, p = X.shape
    col_sq = np.sum(X * X, axis=0) / n
    b = np.zeros(p)
    r = y.copy()
    for _ in range(max_sweeps):
        max_move = 0.0
        for j in range(p):
            if col_sq[j] == 0.0:
                continue
            old = b[j]
            rho = X[:, j] @ r / n + col_sq[j] * old
            new = np.sign(rho) * max(abs(rho) - lam * weights[j], 0.0) / col_sq[j]
            if new != old:
                r += X[:, j] * (old - new)
                b[j] = new
                max_move = max(max_move, abs(new - old))
        if max_move < tol:
            break
    return b


def lasso_objective(X, y, b, lam, weights):
    n = X.shape[0]
    resid = y.ravel() - X @ b
    return 0.5 / n * float(resid @ resid) + lam * float(weights @ np.abs(b))


def normal_equation_ols(X, Y):
    """Plain dense normal-equations solve."""
    X = np.asarray(X, dtype=float)
    return np.linalg.solve(X.T @ X, X.T @ np.asarray(Y, dtype=float))


def group_mean_ols(Xs, Ys, groups):
    """Least squares with coefficients tied within each outcome group.

    With disjoint groups the constrained solution regresses each group's
    mean response on the design.
    """
    Xs = np.asarray(Xs, dtype=float)
    Ys = np.asarray(Ys, dtype=float)
    XtX = Xs.T @ Xs
    out = np.zeros((Xs.shape[1], Ys.shape[1]))
    for g in groups:
        ybar = Ys[:, list(g)].mean(axis=1)
        coef = np.linalg.solve(XtX, Xs.T @ ybar)
        out[:, list(g)] = coef[:, None]
    return out


def hull_bruteforce(grouping, nonzero, p):
    """Enumerate (variable, group) blocks and union the disjoint ones."""
    K = grouping.n_outcomes
    nonzero = set(int(i) for i in nonzero)
    removed = set()
    for j in range(p):
        for g in grouping.groups:
            block = {k * p + j for k in g}
            if not (block & nonzero):
                removed |= block
    return sorted(set(range(K * p)) - removed)
