import numpy as np
import pytest

from conftest import default_grouping, make_problem
from ogfm import (AdmmEngine, ProblemData, SolverOptions, WeightScheme,
                  block_soft_threshold, build_grouping, build_penalty_config,
                  compute_ols, detect_structure, eval_objective, fit,
                  singleton_grouping, soft_threshold)
from oracles import cd_lasso, group_mean_ols, lasso_objective, subgradient_solve


def test_soft_threshold_values():
    assert soft_threshold(2.0, 0.5) == 1.5
    assert soft_threshold(0.3, 0.5) == 0.0
    assert soft_threshold(-2.0, 0.5) == -1.5


def test_soft_threshold_properties(rng):
    u = rng.standard_normal(50) * 3
    t = rng.uniform(0, 2)
    out = soft_threshold(u, t)
    assert np.all(np.abs(out) <= np.abs(u) + 1e-15)
    assert np.all((out == 0) | (np.sign(out) == np.sign(u)))


def test_block_soft_threshold_values():
    assert np.allclose(block_soft_threshold([3.0, 4.0], 2.5), [1.5, 2.0])
    assert np.array_equal(block_soft_threshold([3.0, 4.0], 6.0), [0.0, 0.0])
    assert np.array_equal(block_soft_threshold(np.zeros(3), 1.0), np.zeros(3))


def _engine(rng, n=40, p=3, K=3, lam=0.2, alpha=0.5, opts=None, **kwargs):
    data, _ = make_problem(rng, n=n, p=p, K=K, **kwargs)
    grouping = default_grouping(K)
    cfg = build_penalty_config(data, grouping, WeightScheme(), lam=lam,
                               alpha=alpha)
    return AdmmEngine(data, grouping, cfg, opts or SolverOptions()), data


def test_beta_step_small_rho_is_ols(rng):
    engine, data = _engine(rng, lam=0.3)
    state = engine.init_state()
    state.rho = 1e-12
    beta = engine.beta_step(state).reshape(data.p, data.n_outcomes, order="F")
    ols = compute_ols(data).beta
    assert np.max(np.abs(beta - ols)) <= 1e-6


def test_beta_step_scalar_closed_form(rng):
    X = rng.standard_normal((20, 1))
    Y = rng.standard_normal((20, 1))
    data = ProblemData(X, Y, center=False, standardize=False)
    grouping = singleton_grouping(1)
    cfg = build_penalty_config(data, grouping, WeightScheme(), lam=0.4)
    engine = AdmmEngine(data, grouping, cfg)
    state = engine.init_state()
    state.rho = 1.7
    state.group_copies = np.array([0.6])
    state.dual = np.array([-0.2])
    beta = engine.beta_step(state)
    gxx = (X.T @ X).item() / 20
    gxy = (X.T @ Y).item() / 20
    expected = (gxy + state.rho * (0.6 - (-0.2))) / (gxx + state.rho)
    assert np.isclose(beta[0], expected, atol=1e-12)


@pytest.mark.parametrize("method", ["direct", "cg"])
def test_beta_step_residual_contract(rng, method):
    opts = SolverOptions(solve_method=method)
    engine, data = _engine(rng, n=50, p=4, K=3, opts=opts)
    state = engine.init_state()
    state.group_copies = rng.standard_normal(engine.m)
    state.pair_diffs = rng.standard_normal(engine.e)
    state.dual = rng.standard_normal(engine.m + engine.e)
    beta = engine.beta_step(state)
    rhs = engine.q + state.rho * (engine.Ft @ (state.group_copies - state.dual[:engine.m])
                                  + engine.Dt @ (state.pair_diffs - state.dual[engine.m:]))
    resid = engine._system_matvec(beta, state.rho) - rhs
    assert np.linalg.norm(resid) <= 1e-9 * np.linalg.norm(rhs)


def test_direct_and_cg_agree(rng):
    data, _ = make_problem(rng, n=50, p=4, K=3)
    grouping = default_grouping(3)
    cfg = build_penalty_config(data, grouping, WeightScheme(), lam=0.2,
                               alpha=0.5)
    beta = {}
    for method in ("direct", "cg"):
        engine = AdmmEngine(data, grouping, cfg,
                            SolverOptions(solve_method=method))
        state = engine.init_state()
        state.group_copies = np.linspace(-1, 1, engine.m)
        beta[method] = engine.beta_step(state)
    assert np.max(np.abs(beta["direct"] - beta["cg"])) <= 1e-8


def test_gamma_step_no_shrinkage_when_unpenalized(rng):
    engine, _ = _engine(rng, lam=0.0)
    state = engine.init_state()
    state.beta = rng.standard_normal(engine.kp)
    state.dual = rng.standard_normal(engine.m + engine.e)
    f_beta = engine.F @ state.beta
    gamma = engine.gamma_step(state, f_beta)
    # scaled-dual form: the copy target is the replication plus the dual
    assert np.allclose(gamma, f_beta + state.dual[:engine.m], atol=1e-14)


def test_gamma_step_thresholds_small_slices(rng):
    engine, _ = _engine(rng, lam=50.0, alpha=0.0)
    state = engine.init_state()
    state.beta = 1e-3 * rng.standard_normal(engine.kp)
    gamma = engine.gamma_step(state, engine.F @ state.beta)
    assert np.all(gamma == 0.0)


def test_gamma_step_matches_block_soft_threshold():
    assert np.allclose(block_soft_threshold([3.0, 4.0], 2.5), [1.5, 2.0])


def test_eta_step_elementwise(rng):
    engine, _ = _engine(rng, lam=0.5, alpha=1.0)
    state = engine.init_state()
    state.beta = rng.standard_normal(engine.kp)
    d_beta = engine.D @ state.beta
    eta = engine.eta_step(state, d_beta)
    thr = engine.config.lam2 * engine.pair_weights / state.rho
    assert np.allclose(eta, soft_threshold(d_beta, thr), atol=1e-14)


def test_dual_update_fixed_point(rng):
    engine, _ = _engine(rng)
    state = engine.init_state()
    state.beta = rng.standard_normal(engine.kp)
    state.group_copies = engine.F @ state.beta
    state.pair_diffs = engine.D @ state.beta
    before = state.nu.copy()
    a_beta = np.concatenate([engine.F @ state.beta, engine.D @ state.beta])
    z = np.concatenate([state.group_copies, state.pair_diffs])
    engine.dual_step(state, a_beta - z)
    assert np.allclose(state.nu, before, atol=1e-15)


def test_dual_update_increments_by_residual(rng):
    engine, _ = _engine(rng)
    state = engine.init_state()
    state.rho = 1.0
    r = rng.standard_normal(engine.m + engine.e)
    before = state.nu.copy()
    engine.dual_step(state, r)
    assert np.allclose(state.nu - before, r, atol=1e-15)


def test_fixed_point_iterations_are_idempotent(rng):
    # an exact unpenalized fixed point stays put under further sweeps
    data, _ = make_problem(rng, n=50, p=3, K=2)
    grouping = default_grouping(2)
    cfg = build_penalty_config(data, grouping, WeightScheme(), lam=0.0)
    engine = AdmmEngine(data, grouping, cfg)
    state = engine.init_state()
    ols = compute_ols(data).beta.ravel(order="F")
    state.beta = ols.copy()
    state.group_copies = engine.F @ ols
    state.pair_diffs = engine.D @ ols
    snapshots = []
    for _ in range(2):
        state.beta = engine.beta_step(state)
        f_beta = engine.F @ state.beta
        d_beta = engine.D @ state.beta
        state.group_copies = engine.gamma_step(state, f_beta)
        state.pair_diffs = engine.eta_step(state, d_beta)
        a = np.concatenate([f_beta, d_beta])
        z = np.concatenate([state.group_copies, state.pair_diffs])
        engine.dual_step(state, a - z)
        snapshots.append((state.beta.copy(), state.group_copies.copy(),
                          state.pair_diffs.copy(), state.dual.copy()))
    for a, b in zip(snapshots[0], snapshots[1]):
        if a.size:
            assert np.max(np.abs(a - b)) <= 1e-12


def test_convergence_check_cases(rng):
    engine, _ = _engine(rng)
    beta = rng.standard_normal(engine.kp)
    f_beta = engine.F @ beta
    d_beta = engine.D @ beta
    gamma, eta = f_beta.copy(), d_beta.copy()
    ok, prim, dual = engine.convergence_check(
        f_beta, d_beta, gamma, eta, gamma, eta,
        np.zeros(engine.m + engine.e), 1.0)
    assert ok and prim == 0.0 and dual == 0.0

    # vacuous tolerances accept anything
    loose = SolverOptions(eps_abs=1e300, eps_rel=1e300)
    ok, _, _ = engine.convergence_check(
        f_beta, d_beta, np.zeros(engine.m), np.zeros(engine.e),
        gamma, eta, rng.standard_normal(engine.m + engine.e), 1.0, loose)
    assert ok


def test_cold_start_not_converged_after_one_iteration(rng):
    data, _ = make_problem(rng, n=40, p=3, K=3)
    grouping = default_grouping(3)
    cfg = build_penalty_config(data, grouping, WeightScheme(), lam=0.1,
                               alpha=0.3)
    opts = SolverOptions(max_iter=1)
    with pytest.warns(RuntimeWarning, match="max_iter"):
        res = fit(data, grouping, cfg, opts)
    assert not res.converged
    assert res.iterations == 1


def test_rho_update_rules(rng):
    engine, _ = _engine(rng)
    state = engine.init_state()
    state.dual = np.ones(engine.m + engine.e)

    state.rho = 2.0
    assert engine.rho_update(state, prim=100.0, dual_norm=1.0)
    assert state.rho == 4.0
    assert np.allclose(state.dual, 0.5)  # scaled dual keeps nu continuous

    state.rho = 2.0
    state.dual = np.ones(engine.m + engine.e)
    assert engine.rho_update(state, prim=1.0, dual_norm=100.0)
    assert state.rho == 1.0
    assert np.allclose(state.dual, 2.0)

    state.rho = 2.0
    assert not engine.rho_update(state, prim=5.0, dual_norm=5.0)
    assert state.rho == 2.0


def test_fit_unpenalized_equals_ols(rng):
    data, _ = make_problem(rng, n=50, p=5, K=3)
    grouping = default_grouping(3)
    cfg = build_penalty_config(data, grouping, WeightScheme(), lam=0.0)
    res = fit(data, grouping, cfg)
    ols = compute_ols(data).beta
    rel = np.linalg.norm(res.beta_std - ols) / np.linalg.norm(ols)
    assert rel <= 1e-6


def test_fit_total_shrinkage(rng):
    data, _ = make_problem(rng, n=40, p=4, K=3)
    grouping = default_grouping(3)
    cfg = build_penalty_config(data, grouping, WeightScheme(), lam=1e4,
                               alpha=0.0)
    res = fit(data, grouping, cfg)
    assert np.all(res.coef.beta == 0.0)
    assert not res.support.any()
    assert res.n_fused == 0


def test_fit_matches_subgradient_oracle(rng):
    data, _ = make_problem(rng, n=30, p=3, K=3)
    grouping = build_grouping(3, [[(0, 1), (1, 2)]])
    cfg = build_penalty_config(data, grouping, WeightScheme(), lam=0.15,
                               alpha=0.5)
    res = fit(data, grouping, cfg, SolverOptions(eps_abs=1e-7, eps_rel=1e-7))
    ref, _ = subgradient_solve(np.asarray(data.Xs), np.asarray(data.Ys),
                               grouping, cfg, n_iter=400_000, phase_len=8_000)
    assert abs(res.objective - ref) <= 1e-5


def test_fit_full_fusion_matches_collapsed_ols(rng):
    data, _ = make_problem(rng, n=40, p=3, K=4)
    grouping = build_grouping(4, [[(0, 1), (2, 3)]])
    cfg = build_penalty_config(data, grouping, WeightScheme(), lam=200.0,
                               alpha=1.0)
    res = fit(data, grouping, cfg, SolverOptions(eps_abs=1e-8, eps_rel=1e-8))
    for members in ((0, 1), (2, 3)):
        spread = np.ptp(res.beta_std[:, members], axis=1)
        assert np.max(spread) <= 1e-6
    oracle = group_mean_ols(np.asarray(data.Xs), np.asarray(data.Ys),
                            [(0, 1), (2, 3)])
    assert np.max(np.abs(res.beta_std - oracle)) <= 1e-4


def test_fit_separate_lasso_degeneracy(rng):
    data, _ = make_problem(rng, n=60, p=6, K=3)
    grouping = singleton_grouping(3)
    cfg = build_penalty_config(data, grouping, WeightScheme(), lam=0.15,
                               alpha=0.0)
    res = fit(data, grouping, cfg, SolverOptions(eps_abs=1e-8, eps_rel=1e-8))
    Xs, Ys = np.asarray(data.Xs), np.asarray(data.Ys)
    for k in range(3):
        b = cd_lasso(Xs, Ys[:, k], 0.15, np.ones(6))
        ours = lasso_objective(Xs, Ys[:, k], res.beta_std[:, k], 0.15,
                               np.ones(6))
        ref = lasso_objective(Xs, Ys[:, k], b, 0.15, np.ones(6))
        assert abs(ours - ref) <= 1e-6


def test_fit_rejects_nan():
    X = np.ones((5, 2))
    Y = np.ones((5, 2))
    Y[0, 0] = np.nan
    with pytest.raises(ValueError, match="finite"):
        ProblemData(X, Y)


def test_warm_start_restarts_quickly(rng):
    data, _ = make_problem(rng, n=40, p=4, K=3)
    grouping = default_grouping(3)
    cfg = build_penalty_config(data, grouping, WeightScheme(), lam=0.2,
                               alpha=0.4)
    first = fit(data, grouping, cfg)
    again = fit(data, grouping, cfg, warm_start=first)
    assert again.converged
    assert again.iterations <= 5
    assert np.isclose(again.objective, first.objective, atol=1e-8)


def test_rho0_invariance(rng):
    data, _ = make_problem(rng, n=40, p=4, K=3)
    grouping = default_grouping(3)
    cfg = build_penalty_config(data, grouping, WeightScheme(), lam=0.25,
                               alpha=0.5)
    objs = [fit(data, grouping, cfg, SolverOptions(rho0=r)).objective
            for r in (0.1, 10.0)]
    assert abs(objs[0] - objs[1]) <= 1e-4


def test_objective_never_worse_than_null(rng):
    for lam in (0.0, 0.05, 0.5, 5.0):
        data, _ = make_problem(rng, n=30, p=3, K=2)
        grouping = default_grouping(2)
        cfg = build_penalty_config(data, grouping, WeightScheme(), lam=lam,
                                   alpha=0.5)
        res = fit(data, grouping, cfg)
        null = eval_objective(data, np.zeros((3, 2)), grouping, cfg)
        assert res.objective <= null + 1e-8


def test_convexity_certificate(rng):
    data, _ = make_problem(rng, n=35, p=3, K=3)
    grouping = default_grouping(3)
    cfg = build_penalty_config(data, grouping, WeightScheme(), lam=0.2,
                               alpha=0.5)
    res = fit(data, grouping, cfg, SolverOptions(eps_abs=1e-8, eps_rel=1e-8))
    base = eval_objective(data, res.beta_std, grouping, cfg)
    for _ in range(100):
        delta = rng.standard_normal(res.beta_std.shape)
        delta *= 1e-3 / np.linalg.norm(delta)
        perturbed = eval_objective(data, res.beta_std + delta, grouping, cfg)
        assert perturbed >= base - 1e-9


def test_lagrangian_per_block_descent(rng):
    data, _ = make_problem(rng, n=40, p=4, K=3)
    grouping = default_grouping(3)
    cfg = build_penalty_config(data, grouping, WeightScheme(), lam=0.3,
                               alpha=0.5)
    res = fit(data, grouping, cfg, SolverOptions(log_lagrangian=True))
    log = res.lagrangian_log
    assert log is not None and log.shape[0] == res.iterations
    tol = 1e-10
    assert np.all(log[:, 1] <= log[:, 0] + tol)  # coefficient block
    assert np.all(log[:, 2] <= log[:, 1] + tol)  # group copies
    assert np.all(log[:, 3] <= log[:, 2] + tol)  # fused differences


def test_feasibility_at_convergence(rng):
    data, _ = make_problem(rng, n=40, p=4, K=3)
    grouping = default_grouping(3)
    cfg = build_penalty_config(data, grouping, WeightScheme(), lam=0.2,
                               alpha=0.5)
    opts = SolverOptions()
    res = fit(data, grouping, cfg, opts)
    assert res.converged
    engine = AdmmEngine(data, grouping, cfg, opts)
    state = res.state
    gap_f = engine.F @ state.beta - state.group_copies
    gap_d = engine.D @ state.beta - state.pair_diffs
    scale = np.sqrt(engine.m + engine.e) * opts.eps_abs + opts.eps_rel
    assert max(np.max(np.abs(gap_f)), np.max(np.abs(gap_d))) <= 10 * scale


def test_detect_structure_from_fit(rng):
    data, _ = make_problem(rng, n=50, p=4, K=3, density=0.5)
    grouping = build_grouping(3, [[(0, 1, 2)]])
    cfg = build_penalty_config(data, grouping, WeightScheme(), lam=0.2,
                               alpha=0.5)
    res = fit(data, grouping, cfg)
    support, fused = detect_structure(res)
    # exact zeros and fusions from the polish agree with the splitting reads
    assert np.array_equal(support, res.support[data.active_columns])
    for pi in range(grouping.n_pairs):
        assert np.all(fused[:, pi] >= res.fused[data.active_columns][:, pi])


def test_detect_structure_hand_cases():
    beta = np.array([[1.0, 1.0, 0.5]])

    class Dummy:
        beta_std = beta
        grouping = build_grouping(3, [[(0, 1, 2)]],
                                  fuse_pairs=[(0, 1), (1, 2)])
        polished = True

    support, fused = detect_structure(Dummy(), tol_fuse=1e-6)
    assert support.all()
    assert fused[0].tolist() == [True, False]

    class Zero:
        beta_std = np.zeros((2, 3))
        grouping = Dummy.grouping
        polished = True

    support, fused = detect_structure(Zero())
    assert not support.any() and not fused.any()


def test_engine_rejects_mismatched_weights(rng):
    data, _ = make_problem(rng, n=30, p=3, K=3)
    grouping = default_grouping(3)
    other, _ = make_problem(rng, n=30, p=5, K=3)
    cfg = build_penalty_config(other, grouping, WeightScheme(), lam=0.1)
    with pytest.raises(Exception, match="group_weights"):
        AdmmEngine(data, grouping, cfg)


def test_warm_start_shape_mismatch(rng):
    data, _ = make_problem(rng, n=30, p=3, K=3)
    grouping = default_grouping(3)
    cfg = build_penalty_config(data, grouping, WeightScheme(), lam=0.1)
    first = fit(data, grouping, cfg)

    bigger = build_grouping(3, [[(0, 1, 2)]])
    cfg2 = build_penalty_config(data, bigger, WeightScheme(), lam=0.1)
    with pytest.raises(Exception, match="group_copies|dual|pair_diffs"):
        fit(data, bigger, cfg2, warm_start=first)


def test_cg_breakdown_raises(rng):
    from ogfm import LinearSolveError
    data, _ = make_problem(rng, n=40, p=6, K=3)
    grouping = default_grouping(3)
    cfg = build_penalty_config(data, grouping, WeightScheme(), lam=0.1)
    opts = SolverOptions(solve_method="cg", cg_maxiter=1, cg_tol=1e-14)
    engine = AdmmEngine(data, grouping, cfg, opts)
    state = engine.init_state()
    state.group_copies = rng.standard_normal(engine.m)
    with pytest.raises(LinearSolveError, match="residual"):
        engine.beta_step(state)


def test_eta_zero_reported_as_fusion(rng):
    # strong fused penalty yields exactly-zero difference variables
    data, _ = make_problem(rng, n=40, p=2, K=3, density=1.0)
    grouping = build_grouping(3, [[(0, 1, 2)]])
    cfg = build_penalty_config(data, grouping, WeightScheme(), lam=5.0,
                               alpha=0.98)
    res = fit(data, grouping, cfg)
    eta = res.pair_diffs.reshape(data.p, grouping.n_pairs)
    for j in range(data.p):
        for pi, (l, o) in enumerate(grouping.fuse_pairs):
            if eta[j, pi] == 0.0 and res.support[j, l] and res.support[j, o]:
                assert res.fused[j, pi]
