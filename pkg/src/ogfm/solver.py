"""Three-block ADMM solver for the doubly structured sparse model.

The objective is split by introducing one copy of each (variable, group)
coefficient block and one variable per fused difference.  Each sweep solves
a ridge-augmented linear system for the coefficients, applies exact block
soft-thresholding to the group copies, exact scalar soft-thresholding to the
difference variables, and then ascends the (scaled) dual.  The splitting
satisfies the orthogonality condition under which the three-block scheme is
convergent.

The linear system ``(X'X/n  replicated per outcome) + rho * (F'F + D'D)``
couples outcomes only through the difference matrix, and ``F'F`` is
diagonal.  For small-to-moderate problems a cached sparse LU factorization
is reused until the penalty parameter changes; beyond a size threshold a
preconditioned conjugate-gradient solve warm-started from the previous
iterate is used instead, so the replicated Gram block never materializes as
a dense (Kp, Kp) matrix.

Support and fusion decisions are read from the exactly-thresholded copy
variables, then optionally polished: entries all of whose group copies are
zero are fixed at exactly zero, exactly-fused coefficients are collapsed,
and an unpenalized least-squares refit on the collapsed support is accepted
only when it does not increase the objective.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import cho_factor, cho_solve

from .constraints import build_constraint_matrices
from .exceptions import DimensionMismatchError, LinearSolveError
from .penalties import eval_penalties, quad_loss

BETA_SOLVE_RTOL = 1e-9


def soft_threshold(u, t):
    """Shrink toward zero: sign(u) * max(|u| - t, 0); works elementwise."""
    u = np.asarray(u, dtype=float)
    out = np.sign(u) * np.maximum(np.abs(u) - t, 0.0)
    return float(out) if out.ndim == 0 else out


def block_soft_threshold(u, t):
    """Vector shrinkage u * max(1 - t / ||u||, 0); zero when ||u|| <= t."""
    u = np.asarray(u, dtype=float)
    norm = float(np.linalg.norm(u))
    if norm <= t or norm == 0.0:
        return np.zeros_like(u)
    return u * (1.0 - t / norm)


@dataclass
class SolverOptions:
    """Tolerances and behavior switches for the ADMM engine."""

    eps_abs: float = 1e-5
    eps_rel: float = 1e-5
    max_iter: int = 5000
    rho0: float = 1.0
    rho_mu: float = 10.0
    rho_tau: float = 2.0
    adapt_rho: bool = True
    polish_support: bool = True
    solve_method: str = "auto"  # "auto" | "direct" | "cg"
    direct_size_limit: int = 4000
    cg_tol: float = 1e-10
    cg_maxiter: int = 1000
    polish_refit_max_size: int = 3000
    log_lagrangian: bool = False

    def __post_init__(self):
        if self.eps_abs <= 0 or self.eps_rel <= 0:
            raise ValueError("eps_abs and eps_rel must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.rho0 <= 0:
            raise ValueError("rho0 must be positive")
        if self.rho_mu <= 1 or self.rho_tau <= 1:
            raise ValueError("rho_mu and rho_tau must exceed 1")
        if self.solve_method not in ("auto", "direct", "cg"):
            raise ValueError(f"unknown solve_method {self.solve_method!r}")


@dataclass
class SolverState:
    """Iterates of one ADMM run; ``dual`` stores the scaled dual u = nu/rho."""

    beta: np.ndarray
    group_copies: np.ndarray
    pair_diffs: np.ndarray
    dual: np.ndarray
    rho: float
    iteration: int = 0

    def copy(self) -> "SolverState":
        return SolverState(self.beta.copy(), self.group_copies.copy(),
                           self.pair_diffs.copy(), self.dual.copy(),
                           self.rho, self.iteration)

    @property
    def nu(self) -> np.ndarray:
        """Unscaled dual vector rho * u."""
        return self.rho * self.dual


@dataclass(frozen=True)
class FitResult:
    """Solution of one penalized fit.

    ``coef`` is on the original data scale (screened columns re-inserted as
    zero rows); ``beta_std`` is the prepared-scale matrix the optimizer
    actually produced, and ``objective`` is the penalized objective at
    ``beta_std``.  ``support`` and ``fused`` are read from the
    exactly-thresholded splitting variables.
    """

    coef: "CoefficientMatrix"
    beta_std: np.ndarray
    group_copies: np.ndarray
    pair_diffs: np.ndarray
    support: np.ndarray
    fused: np.ndarray
    objective: float
    iterations: int
    converged: bool
    primal_residual: float
    dual_residual: float
    lam: float
    alpha: float
    grouping: "OutcomeGrouping"
    polished: bool
    polish_tag: str
    state: SolverState = field(repr=False, default=None)
    lagrangian_log: np.ndarray = field(repr=False, default=None)

    @property
    def support_size(self) -> int:
        return int(self.support.sum())

    @property
    def n_fused(self) -> int:
        return int(self.fused.sum())


class AdmmEngine:
    """One solver instance bound to a (data, grouping, config) triple.

    The engine exposes the individual update steps so they can be exercised
    directly; :func:`fit` is the high-level entry point.
    """

    def __init__(self, data, grouping, config, options=None):
        if config.group_weights.shape != (data.p, grouping.n_groups):
            raise DimensionMismatchError(
                "group_weights", (data.p, grouping.n_groups),
                config.group_weights.shape)
        if config.pair_weights.shape != (data.p, grouping.n_pairs):
            raise DimensionMismatchError(
                "pair_weights", (data.p, grouping.n_pairs),
                config.pair_weights.shape)
        self.data = data
        self.grouping = grouping
        self.config = config
        self.options = options or SolverOptions()

        self.p = data.p
        self.K = data.n_outcomes
        self.kp = self.p * self.K
        cm = build_constraint_matrices(grouping, self.p)
        self.cm = cm
        self.F = cm.group_mat
        self.D = cm.pair_mat
        self.Ft = self.F.T.tocsr()
        self.Dt = self.D.T.tocsr()
        self.m = cm.n_group_rows
        self.e = cm.n_pair_rows

        self.gram_xx = data.gram_xx
        self.q = np.ascontiguousarray(data.gram_xy.ravel(order="F"))
        # fixed structural part of the system matrix, scaled by rho at solve time
        self.struct = (sp.diags(cm.ftf_diag) + self.Dt @ self.D).tocsc()
        self._kron_gram = None
        self._lu = None
        self._lu_rho = None
        self._precond = None
        self._precond_rho = None

        self.slice_weights = np.ascontiguousarray(config.group_weights.ravel())
        self.pair_weights = np.ascontiguousarray(config.pair_weights.ravel())

        if self.options.solve_method == "auto":
            self.solve_method = ("direct" if self.kp <= self.options.direct_size_limit
                                 else "cg")
        else:
            self.solve_method = self.options.solve_method

    # -- individual update steps -------------------------------------------

    def beta_step(self, state) -> np.ndarray:
        """Solve the ridge-augmented linear system for the coefficients."""
        u_f = state.dual[:self.m]
        u_d = state.dual[self.m:]
        rhs = self.q + state.rho * (self.Ft @ (state.group_copies - u_f))
        if self.e:
            rhs = rhs + state.rho * (self.Dt @ (state.pair_diffs - u_d))
        if self.solve_method == "direct":
            beta = self._solve_direct(rhs, state.rho)
        else:
            beta = self._solve_cg(rhs, state.rho, state.beta)
        resid = self._system_matvec(beta, state.rho) - rhs
        rel = np.linalg.norm(resid) / max(np.linalg.norm(rhs), 1e-300)
        if rel > BETA_SOLVE_RTOL:
            raise LinearSolveError(
                f"coefficient solve stalled: relative residual {rel:.3e} "
                f"(rho={state.rho:.3e}, method={self.solve_method})")
        return beta

    def gamma_step(self, state, f_beta) -> np.ndarray:
        """Block soft-threshold every (variable, group) copy slice."""
        v = f_beta + state.dual[:self.m]
        thr = (self.config.lam1 / state.rho) * self.slice_weights
        sq = np.add.reduceat(v * v, self.cm.slice_starts)
        norms = np.sqrt(sq)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(norms > 0, thr / norms, np.inf)
        factor = np.maximum(1.0 - ratio, 0.0)
        return v * np.repeat(factor, self.cm.slice_lengths)

    def eta_step(self, state, d_beta) -> np.ndarray:
        """Scalar soft-threshold every fused-difference variable."""
        if not self.e:
            return np.zeros(0)
        v = d_beta + state.dual[self.m:]
        thr = (self.config.lam2 / state.rho) * self.pair_weights
        return soft_threshold(v, thr)

    def dual_step(self, state, primal_residual) -> None:
        """Scaled dual ascent; the unscaled dual moves by rho * residual."""
        state.dual += primal_residual

    def convergence_check(self, f_beta, d_beta, gamma, eta,
                          gamma_prev, eta_prev, dual, rho, opts=None):
        """Primal/dual residual norms and the stopping decision.

        The primal residual compares the replicated/differenced coefficients
        with their copies; the dual residual maps the copy change back
        through the constraint transposes.  Tolerances combine an absolute
        floor scaled by the square root of the residual dimension with a
        relative part.
        """
        opts = opts or self.options
        a_beta = np.concatenate([f_beta, d_beta]) if self.e else f_beta
        z = np.concatenate([gamma, eta]) if self.e else gamma
        r = a_beta - z
        s_vec = rho * (self.Ft @ (gamma - gamma_prev))
        if self.e:
            s_vec = s_vec + rho * (self.Dt @ (eta - eta_prev))
        prim = float(np.linalg.norm(r))
        dual_norm = float(np.linalg.norm(s_vec))
        at_nu = rho * (self.Ft @ dual[:self.m])
        if self.e:
            at_nu = at_nu + rho * (self.Dt @ dual[self.m:])
        eps_pri = (np.sqrt(self.m + self.e) * opts.eps_abs
                   + opts.eps_rel * max(np.linalg.norm(a_beta), np.linalg.norm(z)))
        eps_dual = (np.sqrt(self.kp) * opts.eps_abs
                    + opts.eps_rel * np.linalg.norm(at_nu))
        return (prim <= eps_pri and dual_norm <= eps_dual), prim, dual_norm

    def rho_update(self, state, prim, dual_norm) -> bool:
        """Residual-balancing update; rescales the scaled dual on change."""
        opts = self.options
        if prim > opts.rho_mu * dual_norm:
            state.rho *= opts.rho_tau
            state.dual /= opts.rho_tau
            return True
        if dual_norm > opts.rho_mu * prim:
            state.rho /= opts.rho_tau
            state.dual *= opts.rho_tau
            return True
        return False

    # -- objective bookkeeping ----------------------------------------------

    def objective(self, beta_mat) -> float:
        p1, p2 = eval_penalties(beta_mat, self.grouping, self.config)
        loss = quad_loss(self.gram_xx, self.data.gram_xy, self.data.y_mean_sq,
                         beta_mat)
        return loss + self.config.lam1 * p1 + self.config.lam2 * p2

    def lagrangian(self, beta, gamma, eta, dual, rho) -> float:
        """Augmented Lagrangian in scaled-dual form."""
        B = beta.reshape(self.p, self.K, order="F")
        val = quad_loss(self.gram_xx, self.data.gram_xy, self.data.y_mean_sq, B)
        thr_w = self.config.lam1 * self.slice_weights
        norms = np.sqrt(np.add.reduceat(gamma * gamma, self.cm.slice_starts))
        val += float(thr_w @ norms)
        if self.e:
            val += float((self.config.lam2 * self.pair_weights) @ np.abs(eta))
        rf = self.F @ beta - gamma + dual[:self.m]
        val += 0.5 * rho * float(rf @ rf - dual[:self.m] @ dual[:self.m])
        if self.e:
            rd = self.D @ beta - eta + dual[self.m:]
            val += 0.5 * rho * float(rd @ rd - dual[self.m:] @ dual[self.m:])
        return val

    # -- linear solves -------------------------------------------------------

    def _system_matvec(self, v, rho):
        B = v.reshape(self.p, self.K, order="F")
        out = (self.gram_xx @ B).ravel(order="F")
        return out + rho * (self.struct @ v)

    def _solve_direct(self, rhs, rho):
        if self._lu is None or self._lu_rho != rho:
            if self._kron_gram is None:
                self._kron_gram = sp.kron(
                    sp.identity(self.K, format="csc"),
                    sp.csc_matrix(self.gram_xx), format="csc")
            M = (self._kron_gram + rho * self.struct).tocsc()
            self._lu = spla.splu(M)
            self._lu_rho = rho
        return self._lu.solve(rhs)

    def _solve_cg(self, rhs, rho, x0):
        if self._precond is None or self._precond_rho != rho:
            # block-diagonal preconditioner: per-outcome Gram + rho * diagonal
            diag_full = np.asarray(self.struct.diagonal()).ravel()
            blocks = []
            for k in range(self.K):
                dk = diag_full[k * self.p:(k + 1) * self.p]
                blocks.append(cho_factor(self.gram_xx + rho * np.diag(dk)))
            self._precond = blocks
            self._precond_rho = rho

        def precond(v):
            out = np.empty_like(v)
            for k in range(self.K):
                sl = slice(k * self.p, (k + 1) * self.p)
                out[sl] = cho_solve(self._precond[k], v[sl])
            return out

        A = spla.LinearOperator(
            (self.kp, self.kp), matvec=lambda v: self._system_matvec(v, rho))
        M = spla.LinearOperator((self.kp, self.kp), matvec=precond)
        x, info = spla.cg(A, rhs, x0=x0, rtol=self.options.cg_tol, atol=0.0,
                          maxiter=self.options.cg_maxiter, M=M)
        if info > 0:
            resid = np.linalg.norm(self._system_matvec(x, rho) - rhs)
            raise LinearSolveError(
                f"conjugate gradient did not converge in "
                f"{self.options.cg_maxiter} iterations "
                f"(absolute residual {resid:.3e})")
        return x

    # -- main loop -----------------------------------------------------------

    def init_state(self, warm_start=None) -> SolverState:
        if warm_start is None:
            return SolverState(np.zeros(self.kp), np.zeros(self.m),
                               np.zeros(self.e), np.zeros(self.m + self.e),
                               self.options.rho0)
        ws = warm_start.state if isinstance(warm_start, FitResult) else warm_start
        expect = {"beta": self.kp, "group_copies": self.m,
                  "pair_diffs": self.e, "dual": self.m + self.e}
        for name, size in expect.items():
            if getattr(ws, name).shape != (size,):
                raise DimensionMismatchError(name, (size,), getattr(ws, name).shape)
        return ws.copy()

    def run(self, warm_start=None) -> FitResult:
        opts = self.options
        state = self.init_state(warm_start)
        state.iteration = 0
        prim = dual_norm = np.inf
        converged = False
        log = [] if opts.log_lagrangian else None

        for t in range(1, opts.max_iter + 1):
            gamma_prev = state.group_copies
            eta_prev = state.pair_diffs
            if log is not None:
                l0 = self.lagrangian(state.beta, gamma_prev, eta_prev,
                                     state.dual, state.rho)

            state.beta = self.beta_step(state)
            f_beta = self.F @ state.beta
            d_beta = self.D @ state.beta if self.e else np.zeros(0)
            if log is not None:
                l1 = self.lagrangian(state.beta, gamma_prev, eta_prev,
                                     state.dual, state.rho)
            state.group_copies = self.gamma_step(state, f_beta)
            if log is not None:
                l2 = self.lagrangian(state.beta, state.group_copies, eta_prev,
                                     state.dual, state.rho)
            state.pair_diffs = self.eta_step(state, d_beta)
            if log is not None:
                l3 = self.lagrangian(state.beta, state.group_copies,
                                     state.pair_diffs, state.dual, state.rho)
                log.append((l0, l1, l2, l3))

            a_beta = np.concatenate([f_beta, d_beta]) if self.e else f_beta
            z = (np.concatenate([state.group_copies, state.pair_diffs])
                 if self.e else state.group_copies)
            self.dual_step(state, a_beta - z)
            state.iteration = t

            converged, prim, dual_norm = self.convergence_check(
                f_beta, d_beta, state.group_copies, state.pair_diffs,
                gamma_prev, eta_prev, state.dual, state.rho)
            if converged:
                break
            if opts.adapt_rho and (t <= 100 or t % 10 == 0):
                self.rho_update(state, prim, dual_norm)

        if not converged:
            warnings.warn(
                f"ADMM stopped at max_iter={opts.max_iter} without meeting "
                f"tolerances (primal {prim:.2e}, dual {dual_norm:.2e})",
                RuntimeWarning)

        support, fused = self._structure_from_copies(state)
        beta_mat, tag = self._select_beta(state, support, fused)
        polished = opts.polish_support
        if not polished:
            # fallback support rule when polishing is disabled
            bmax = np.max(np.abs(beta_mat)) if beta_mat.size else 0.0
            support = np.abs(beta_mat) > 1e-4 * bmax

        coef = self.data.to_original_coef(beta_mat)
        raw_support = np.zeros((self.data.p_raw, self.K), dtype=bool)
        raw_support[self.data.active_columns] = support
        raw_fused = np.zeros((self.data.p_raw, self.grouping.n_pairs), dtype=bool)
        raw_fused[self.data.active_columns] = fused

        return FitResult(
            coef=coef, beta_std=beta_mat,
            group_copies=state.group_copies.copy(),
            pair_diffs=state.pair_diffs.copy(),
            support=raw_support, fused=raw_fused,
            objective=self.objective(beta_mat),
            iterations=state.iteration, converged=converged,
            primal_residual=prim, dual_residual=dual_norm,
            lam=self.config.lam, alpha=self.config.alpha,
            grouping=self.grouping, polished=opts.polish_support,
            polish_tag=tag, state=state,
            lagrangian_log=np.array(log) if log is not None else None)

    # -- support extraction and polishing -------------------------------------

    def _structure_from_copies(self, state):
        """Support and fusion masks from the exactly-thresholded copies.

        Zero patterns of the overlapping group penalty are unions of zeroed
        groups, so a coefficient is zero as soon as any group copy
        containing it was thresholded away; it stays in the support only
        when every containing copy survived.
        """
        norms = np.sqrt(np.add.reduceat(state.group_copies ** 2,
                                        self.cm.slice_starts))
        zero_slice = (norms == 0.0).reshape(self.p, self.grouping.n_groups)
        mem = self.grouping.membership_matrix()  # (g, K)
        support = ~(zero_slice @ mem)  # no containing copy zeroed
        if self.e:
            eta_zero = (state.pair_diffs == 0.0).reshape(
                self.p, self.grouping.n_pairs)
        else:
            eta_zero = np.zeros((self.p, 0), dtype=bool)
        pairs = self.grouping.fuse_pairs
        fused = np.zeros_like(eta_zero)
        for pi, (l, o) in enumerate(pairs):
            fused[:, pi] = eta_zero[:, pi] & support[:, l] & support[:, o]
        return support, fused

    def _fused_components(self, support, fused):
        """Per-variable connected components of supported outcomes.

        Returns (indicators Z of shape (n_components, K), variable index per
        component).  Unfused supported coefficients form singleton
        components.
        """
        pairs = self.grouping.fuse_pairs
        z_rows, j_idx = [], []
        for j in range(self.p):
            parent = list(range(self.K))

            def find(a):
                while parent[a] != a:
                    parent[a] = parent[parent[a]]
                    a = parent[a]
                return a

            for pi, (l, o) in enumerate(pairs):
                if fused[j, pi]:
                    ra, rb = find(l), find(o)
                    if ra != rb:
                        parent[rb] = ra
            comps = {}
            for k in range(self.K):
                if support[j, k]:
                    comps.setdefault(find(k), []).append(k)
            for members in comps.values():
                row = np.zeros(self.K, dtype=float)
                row[members] = 1.0
                z_rows.append(row)
                j_idx.append(j)
        if not z_rows:
            return np.zeros((0, self.K)), np.zeros(0, dtype=np.int64)
        return np.array(z_rows), np.array(j_idx, dtype=np.int64)

    def _select_beta(self, state, support, fused):
        """Pick the best of the refit/projected/null/raw candidates.

        A polished candidate is only ever returned when it does not increase
        the objective relative to the raw iterate.
        """
        beta_admm = state.beta.reshape(self.p, self.K, order="F").copy()
        if not self.options.polish_support:
            return beta_admm, "admm"

        projected = np.where(support, beta_admm, 0.0)
        Z, j_idx = self._fused_components(support, fused)
        for row, j in zip(Z, j_idx):
            members = np.flatnonzero(row)
            if members.size > 1:
                projected[j, members] = projected[j, members].mean()

        candidates = []
        if Z.shape[0] and Z.shape[0] <= self.options.polish_refit_max_size:
            refit = self._collapsed_refit(Z, j_idx)
            if refit is not None:
                candidates.append(("refit", refit))
        elif Z.shape[0] == 0:
            candidates.append(("refit", np.zeros((self.p, self.K))))
        candidates.append(("projected", projected))
        candidates.append(("null", np.zeros((self.p, self.K))))
        candidates.append(("admm", beta_admm))

        objs = np.array([self.objective(b) for _, b in candidates])
        idx = int(np.argmin(objs))
        return candidates[idx][1], candidates[idx][0]

    def _collapsed_refit(self, Z, j_idx):
        """Least squares with fused coefficients collapsed by column summing."""
        gxx = self.gram_xx
        N = (Z @ Z.T) * gxx[np.ix_(j_idx, j_idx)]
        rhs = np.sum(Z * self.data.gram_xy[j_idx, :], axis=1)
        try:
            c, *_ = np.linalg.lstsq(N, rhs, rcond=None)
        except np.linalg.LinAlgError:
            return None
        beta = np.zeros((self.p, self.K))
        for ci, (row, j) in enumerate(zip(Z, j_idx)):
            beta[j, row > 0] = c[ci]
        return beta


def fit(data, grouping, config, options=None, warm_start=None) -> FitResult:
    """Solve the penalized problem for one (lam, alpha) configuration.

    Parameters
    ----------
    data : ProblemData
    grouping : OutcomeGrouping
    config : PenaltyConfig
        Strengths and fully populated weights.
    options : SolverOptions, optional
    warm_start : SolverState or FitResult, optional
        Previous state to resume from (shapes must match).

    Returns
    -------
    FitResult
    """
    engine = AdmmEngine(data, grouping, config, options)
    return engine.run(warm_start)
