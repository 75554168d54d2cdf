import itertools

import numpy as np
import pytest

from relayharq import dp
from relayharq.approx import mixed_fail, src_fail
from relayharq.errors import DegeneratePolicyError, DomainError, SolverError
from relayharq.exact import FrozenSampleSet
from relayharq.policy import RatePolicy, random_policy
from relayharq.sampling import TAG_REFINE, TAG_RESTART, derived_rng


def enumerate_minimum(objective, k_max, actions, lam, moments):
    best_val = np.inf
    argmins = []
    n = k_max * (k_max + 1) // 2
    for vec in itertools.product(actions, repeat=n):
        pol = RatePolicy.from_vector(k_max, vec)
        val = objective(pol, lam, moments)
        if val < best_val - 1e-12:
            best_val, argmins = val, [pol]
        elif abs(val - best_val) <= 1e-12:
            argmins.append(pol)
    return best_val, argmins


def test_grid_invariants():
    grid = dp.DpGrid.build(3, rho_max=2.0, rho_step=0.1)
    assert grid.rho_actions[0] == 0.0
    assert grid.rho_step == pytest.approx(0.1)
    grid.check_covers(3)
    with pytest.raises(DomainError):
        grid.check_covers(9)
    with pytest.raises(DomainError):
        dp.DpGrid(rho_actions=[0.1, 0.2], x_grid=[0.0, 1.0], y_grid=[0.0, 1.0])


def test_grid_snapping_nearest():
    grid = dp.DpGrid.build(2, rho_max=1.0, rho_step=0.5)
    assert grid.x_grid[grid.snap_x(0.74)] == pytest.approx(0.5)
    assert grid.x_grid[grid.snap_x(0.76)] == pytest.approx(1.0)
    assert grid.snap_x(99.0) == len(grid.x_grid) - 1


def test_v_tables_zero_multiplier_vanish(moments15):
    grid = dp.DpGrid.build(3, rho_max=1.0, rho_step=0.25)
    vt = dp.solve_v_tables(0.0, grid, moments15, 3)
    for i in (1, 2):
        table = vt.value_table(i)
        assert np.nanmax(np.abs(table)) == 0.0
        ix, iy = np.nonzero(~np.isnan(table))
        assert vt.relay_row(i, ix[0], iy[0]) == [0.0] * (3 - i)


def test_v_tables_last_phase_matches_exhaustive_scan(moments15):
    # on an exact grid the final-phase table is a plain scan over actions
    lam = 0.7
    grid = dp.DpGrid.exact(3, rho_max=1.0, rho_step=0.25)
    vt = dp.solve_v_tables(lam, grid, moments15, 3)
    table = vt.value_table(2)
    ix, iy = np.nonzero(~np.isnan(table))
    for a_idx, b_idx in zip(ix[::3], iy[::3]):
        alpha = grid.x_grid[a_idx]
        beta = grid.y_grid[b_idx]
        p1s = float(src_fail(alpha, beta, moments15.sd, rounds=2))
        best = min(
            rho * p1s + lam * float(mixed_fail(alpha, beta, rho, rho * rho,
                                               moments15.sd, moments15.rd))
            for rho in grid.rho_actions)
        assert table[a_idx, b_idx] == pytest.approx(best, abs=1e-12)


def test_v_tables_nonincreasing_in_alpha(moments15):
    grid = dp.DpGrid.build(3, rho_max=1.0, rho_step=0.2, n_y=21)
    vt = dp.solve_v_tables(0.8, grid, moments15, 3, restrict_reachable=False)
    for i in (1, 2):
        table = vt.value_table(i)
        assert np.all(np.diff(table, axis=0) <= 1e-12)


def test_dual_2d_zero_multiplier_degenerate(moments15):
    grid = dp.DpGrid.build(2, rho_max=1.0, rho_step=0.25)
    sol = dp.solve_dual_2d(0.0, grid, moments15, 2)
    assert sol.degenerate
    assert sol.j_value == 0.0
    assert all(v == 0.0 for v in sol.policy.as_vector())


def test_dual_2d_large_multiplier_nondegenerate(moments15):
    grid = dp.DpGrid.exact(2, rho_max=2.0, rho_step=0.5)
    lam = 10.0 * 2 * 2.0
    sol = dp.solve_dual_2d(lam, grid, moments15, 2)
    assert not sol.degenerate
    best, argmins = enumerate_minimum(dp.dual_objective_2d, 2, grid.rho_actions,
                                      lam, moments15)
    assert sol.j_value == pytest.approx(best, abs=1e-12)


@pytest.mark.parametrize("lam", [0.0, 0.15, 0.4, 0.9, 3.0])
def test_dual_2d_matches_enumeration_k2(moments15, lam):
    grid = dp.DpGrid.exact(2, rho_max=2.0, rho_step=0.4)
    sol = dp.solve_dual_2d(lam, grid, moments15, 2)
    best, argmins = enumerate_minimum(dp.dual_objective_2d, 2, grid.rho_actions,
                                      lam, moments15)
    assert sol.j_value == pytest.approx(best, abs=1e-12)
    assert any(sol.policy == p for p in argmins)
    # forward extraction reproduces the backward value exactly on exact grids
    assert dp.dual_objective_2d(sol.policy, lam, moments15) == \
        pytest.approx(sol.j_value, abs=1e-12)


@pytest.mark.parametrize("lam", [0.0, 0.15, 0.4, 0.9, 3.0])
def test_dual_1d_matches_enumeration_k2(moments15, lam):
    grid = dp.DpGrid.exact(2, rho_max=2.0, rho_step=0.4)
    sol = dp.solve_dual_1d(lam, grid, moments15, 2)
    best, argmins = enumerate_minimum(dp.dual_objective_1d, 2, grid.rho_actions,
                                      lam, moments15)
    assert sol.j_value == pytest.approx(best, abs=1e-12)
    assert any(sol.policy == p for p in argmins)
    assert dp.dual_objective_1d(sol.policy, lam, moments15) == \
        pytest.approx(sol.j_value, abs=1e-12)


def test_dual_solvers_match_enumeration_k3(moments15):
    grid = dp.DpGrid.exact(3, rho_max=1.5, rho_step=0.5)
    for lam in (0.3, 1.0):
        sol2 = dp.solve_dual_2d(lam, grid, moments15, 3)
        best2, _ = enumerate_minimum(dp.dual_objective_2d, 3, grid.rho_actions,
                                     lam, moments15)
        assert sol2.j_value == pytest.approx(best2, abs=1e-12)
        sol1 = dp.solve_dual_1d(lam, grid, moments15, 3)
        best1, _ = enumerate_minimum(dp.dual_objective_1d, 3, grid.rho_actions,
                                     lam, moments15)
        assert sol1.j_value == pytest.approx(best1, abs=1e-12)


def test_objectives_coincide_on_single_round_policies(moments15):
    # one nonzero entry per accumulation makes sqrt(Y) = X exact
    pol = RatePolicy(2, (0.8, 0.0), ((0.5,),))
    for lam in (0.2, 1.1):
        assert dp.dual_objective_1d(pol, lam, moments15) == pytest.approx(
            dp.dual_objective_2d(pol, lam, moments15), abs=1e-12)


def test_single_round_dual_solvers_agree(moments15):
    grid = dp.DpGrid.build(1, rho_max=2.0, rho_step=0.05)
    for lam in (0.5, 1.5):
        s2 = dp.solve_dual_2d(lam, grid, moments15, 1)
        s1 = dp.solve_dual_1d(lam, grid, moments15, 1)
        assert s2.j_value == pytest.approx(s1.j_value, abs=1e-12)
        assert s2.policy == s1.policy


def test_bisection_bracket_and_determinism(moments15):
    grid = dp.DpGrid.build(2, rho_max=2.0, rho_step=0.1)
    first = dp.bisect_lambda("2d", grid, moments15, 2, tol=1e-3)
    second = dp.bisect_lambda("2d", grid, moments15, 2, tol=1e-3)
    assert first.lambda_th == second.lambda_th
    assert first.policy == second.policy
    assert first.lambda_th - first.lambda_lo <= 1e-3
    assert not first.solution.degenerate
    lo_sol = dp.solve_dual_2d(first.lambda_lo, grid, moments15, 2)
    assert lo_sol.degenerate
    # degeneracy is monotone along the trace
    for lam_a, deg_a in first.trace:
        for lam_b, deg_b in first.trace:
            if lam_a < lam_b and deg_b:
                assert deg_a, "degenerate region must be an interval at the origin"


def test_bisection_rejects_bad_args(moments15):
    grid = dp.DpGrid.build(2, rho_max=2.0, rho_step=0.5)
    with pytest.raises(DomainError):
        dp.bisect_lambda("3d", grid, moments15, 2)
    with pytest.raises(DomainError):
        dp.bisect_lambda("2d", grid, moments15, 2, tol=0.0)


def test_bisection_cap_error_in_deep_fade():
    from relayharq.channel import RelayTopology, TopologyMoments

    # at -30 dB the threshold multiplier is enormous; a low cap must error out
    moments = TopologyMoments.from_topology(RelayTopology.from_db(-30.0))
    grid = dp.DpGrid.build(2, rho_max=2.0, rho_step=0.5)
    with pytest.raises(SolverError):
        dp.bisect_lambda("2d", grid, moments, 2, lambda_cap=0.5)


def test_threshold_consistent_with_throughput_oracle(topo15, moments15):
    # 1/lambda_th tracks the best exact throughput over grid policies
    grid = dp.DpGrid.build(2, rho_max=2.0, rho_step=0.1)
    res = dp.bisect_lambda("2d", grid, moments15, 2, tol=1e-3)
    frozen = FrozenSampleSet.draw(topo15, 2, 5 * 10**4, seed=5, tag=TAG_REFINE)
    eta_dp = frozen.eta(res.policy)
    assert abs(eta_dp * res.lambda_th - 1.0) <= 0.10
    coarse = 0.2 * np.arange(11)
    best = max(frozen.eta(RatePolicy.from_vector(2, vec))
               for vec in itertools.product(coarse, repeat=3))
    assert best <= eta_dp * 1.10 + 0.05
    assert abs(best * res.lambda_th - 1.0) <= 0.15


def test_refine_never_decreases(topo15, moments15):
    rng = derived_rng(31)
    frozen = FrozenSampleSet.draw(topo15, 2, 3 * 10**4, seed=9, tag=TAG_REFINE)
    for _ in range(3):
        start = random_policy(2, 2.0, rng, rho_min=0.1)
        out = dp.refine_policy(start, topo15, frozen=frozen, seed=9)
        assert out.eta_refined >= out.eta_start
        assert out.eta_refined == pytest.approx(frozen.eta(out.policy), abs=1e-12)
        assert all(v >= 0.0 for v in out.policy.as_vector())


def test_refine_single_round_matches_grid_scan(topo15):
    frozen = FrozenSampleSet.draw(topo15, 1, 10**5, seed=13, tag=TAG_REFINE)
    out = dp.refine_policy(RatePolicy(1, (0.6,), ()), topo15, frozen=frozen, seed=13)
    rhos = np.linspace(0.05, 2.0, 1000)
    scan_best = max(frozen.eta(RatePolicy(1, (float(r),), ())) for r in rhos)
    assert out.eta_refined >= scan_best - 1e-3


def test_refine_fixed_point_stays_put(topo15):
    frozen = FrozenSampleSet.draw(topo15, 1, 10**5, seed=14, tag=TAG_REFINE)
    first = dp.refine_policy(RatePolicy(1, (0.5,), ()), topo15, frozen=frozen)
    again = dp.refine_policy(first.policy, topo15, frozen=frozen)
    assert again.eta_refined == pytest.approx(first.eta_refined, abs=2e-4)


def test_refine_rejects_degenerate_start(topo15):
    with pytest.raises(DegeneratePolicyError):
        dp.refine_policy(RatePolicy(2, (0.0, 0.0), ((0.1,),)), topo15,
                         n_samples=10**4)


def test_restart_study_single_start_equals_one_refine(topo15):
    study = dp.random_restart_study(1, 17, topo15, 2, rho_max=2.0,
                                    n_samples=2 * 10**4)
    rng = derived_rng(17, TAG_RESTART)
    start = random_policy(2, 2.0, rng, rho_min=1e-6)
    frozen = FrozenSampleSet.draw(topo15, 2, 2 * 10**4, 17, TAG_REFINE)
    direct = dp.refine_policy(start, topo15, frozen=frozen, seed=17)
    assert study.etas[0] == pytest.approx(direct.eta_refined, abs=1e-12)
    assert study.best_policy == direct.policy


def test_restart_study_histogram(topo15):
    study = dp.random_restart_study(4, 18, topo15, 2, rho_max=2.0,
                                    n_samples=2 * 10**4)
    counts, edges = study.histogram(bins=5)
    assert counts.sum() == 4
    assert len(edges) == 6


def test_v_table_csv_dump(moments15):
    grid = dp.DpGrid.build(2, rho_max=0.5, rho_step=0.25)
    vt = dp.solve_v_tables(0.4, grid, moments15, 2)
    csv = vt.to_csv()
    assert csv.splitlines()[0] == "phase,x,y,value"
    assert len(csv.splitlines()) > 1
