"""Cross-module consistency checks.

Each check pits two independent routes against each other (closed-form
assembly vs protocol simulator, dynamic program vs brute-force enumeration,
simplex refinement vs its starting point, ...) and reports a pass/fail with
detail. The acceptance test suite runs them at full scale; the service and
CLI expose a configurable-scale runner.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, replace

import numpy as np
from scipy import integrate

from . import bounds, dp, exact, sim
from .approx import (AccumState1D, AccumState2D, approx_p1_1d, approx_p1_2d,
                     approx_p3_1d, approx_p3_2d, q_function)
from .channel import RelayTopology, TopologyMoments, capacity_cdf
from .errors import ConfigError
from .exact import FrozenSampleSet
from .policy import RatePolicy, from_fixed_rate, random_policy
from .sampling import TAG_REFINE, derived_rng


@dataclass(frozen=True)
class CheckResult:
    criterion: int
    name: str
    passed: bool
    detail: str
    runtime_s: float = 0.0


@dataclass(frozen=True)
class ValidationScale:
    """Workload knobs; the full profile matches the acceptance suite."""

    eval_samples: int = 10**6
    agreement_policies: int = 20
    completeness_policies: int = 50
    identity_episodes: int = 10**5
    opt_samples: int = 5 * 10**4
    hd_samples: int = 3000
    ordering_snr_db: tuple = (0.0, 4.0, 8.0, 12.0, 16.0, 20.0)
    distance_grid: tuple = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
    restart_count: int = 50
    rho_step: float = 0.1
    rho_max: float = 4.0
    lambda_tol: float = 1e-3
    seed: int = 0
    se_band: float = 3.0


FULL_SCALE = ValidationScale()
QUICK_SCALE = ValidationScale(
    eval_samples=10**5,
    agreement_policies=8,
    completeness_policies=12,
    identity_episodes=2 * 10**4,
    opt_samples=3 * 10**4,
    hd_samples=1000,
    ordering_snr_db=(5.0, 15.0),
    distance_grid=(0.1, 0.3, 0.5, 0.7, 0.9),
    restart_count=10,
)


def scale_for_profile(profile) -> ValidationScale:
    if profile == "full":
        return FULL_SCALE
    if profile == "quick":
        return QUICK_SCALE
    raise ConfigError(f"unknown validation profile {profile!r}")


def _timed(criterion, name, fn):
    t0 = time.perf_counter()
    passed, detail = fn()
    return CheckResult(criterion=criterion, name=name, passed=passed, detail=detail,
                       runtime_s=time.perf_counter() - t0)


# --------------------------------------------------------------------------
# 1. Closed-form assembly vs protocol simulator on random policies
# --------------------------------------------------------------------------


def check_formula_vs_simulator(scale: ValidationScale = FULL_SCALE) -> CheckResult:
    def run():
        rng = derived_rng(scale.seed, 1001)
        worst = 0.0
        worst_at = ""
        for idx in range(scale.agreement_policies):
            k_max = 1 + idx % 4
            snr_db = 5.0 if (idx // 4) % 2 == 0 else 15.0
            topo = RelayTopology.from_db(snr_db, d=0.5, nu=4.0)
            pol = random_policy(k_max, 2.0, rng, rho_min=0.2)
            rep = exact.throughput(pol, topo, n_samples=scale.eval_samples,
                                   seed=scale.seed + idx)
            cam = sim.run_campaign(pol, topo, n_episodes=scale.eval_samples,
                                   seed=scale.seed + idx)
            se = float(np.hypot(rep.eta_se, cam.eta_se))
            z = abs(rep.eta - cam.eta) / se if se > 0 else np.inf
            if z > worst:
                worst = z
                worst_at = f"K={k_max} snr={snr_db}dB"
        return worst <= scale.se_band, \
            f"worst |eta_formula - eta_sim| = {worst:.2f} se ({worst_at})"

    return _timed(1, "formula_vs_simulator", run)


# --------------------------------------------------------------------------
# 2. Event completeness
# --------------------------------------------------------------------------


def check_event_completeness(scale: ValidationScale = FULL_SCALE,
                             tol=1e-12) -> CheckResult:
    def run():
        rng = derived_rng(scale.seed, 1002)
        worst = 0.0
        for idx in range(scale.completeness_policies):
            k_max = 1 + idx % 4
            topo = RelayTopology.from_db(float(rng.uniform(0.0, 20.0)), d=0.5, nu=4.0)
            pol = random_policy(k_max, 3.0, rng)
            tables = exact.estimate_tables(pol, topo, n_samples=10**4,
                                           seed=scale.seed + idx)
            total = sum(exact.event_probabilities(tables).values())
            worst = max(worst, abs(total - 1.0))
        return worst <= tol, f"worst |sum(event probs) - 1| = {worst:.3e}"

    return _timed(2, "event_completeness", run)


# --------------------------------------------------------------------------
# 3. Per-episode channel-use identity
# --------------------------------------------------------------------------


def check_channel_use_identity(scale: ValidationScale = FULL_SCALE) -> CheckResult:
    def run():
        rng_pol = derived_rng(scale.seed, 1003)
        topo = RelayTopology.from_db(5.0, d=0.5, nu=4.0)
        pol = random_policy(4, 1.5, rng_pol, rho_min=0.05)
        rng = derived_rng(scale.seed, 1004)
        bad = 0
        for _ in range(scale.identity_episodes):
            tr = sim.run_episode(pol, topo, rng)
            q = sim.transmitted_channel_uses(pol, tr.rounds_used, tr.phase_switch_round)
            if q != tr.channel_uses:
                bad += 1
        return bad == 0, f"{bad} mismatches in {scale.identity_episodes} episodes"

    return _timed(3, "channel_use_identity", run)


# --------------------------------------------------------------------------
# 4. Small-instance DP optimality vs full enumeration
# --------------------------------------------------------------------------


def enumerate_dual_optimum(objective, k_max, actions, lam, moments):
    """Brute-force minimum of the dual cost over every grid policy."""
    n = k_max * (k_max + 1) // 2
    best_val = np.inf
    best_pols = []
    for vec in itertools.product(actions, repeat=n):
        pol = RatePolicy.from_vector(k_max, vec)
        val = objective(pol, lam, moments)
        if val < best_val - 1e-12:
            best_val = val
            best_pols = [pol]
        elif abs(val - best_val) <= 1e-12:
            best_pols.append(pol)
    return best_val, best_pols


def check_dp_small_optimality(scale: ValidationScale = FULL_SCALE,
                              lams=(0.0, 0.1, 0.3, 0.5, 2.0), tol=1e-12) -> CheckResult:
    def run():
        topo = RelayTopology.from_db(15.0, d=0.5, nu=4.0)
        moments = TopologyMoments.from_topology(topo)
        grid = dp.DpGrid.exact(2, rho_max=2.0, rho_step=0.4)
        actions = grid.rho_actions
        worst = 0.0
        for lam in lams:
            for solver, objective in (("2d", dp.dual_objective_2d),
                                      ("1d", dp.dual_objective_1d)):
                solve = dp.solve_dual_2d if solver == "2d" else dp.solve_dual_1d
                sol = solve(lam, grid, moments, 2)
                enum_val, _ = enumerate_dual_optimum(objective, 2, actions, lam, moments)
                worst = max(worst, abs(sol.j_value - enum_val))
                worst = max(worst, abs(objective(sol.policy, lam, moments) - sol.j_value))
        return worst <= tol, f"worst |dp - enumeration| = {worst:.3e} over {len(lams)} lambdas"

    return _timed(4, "dp_small_optimality", run)


# --------------------------------------------------------------------------
# 5. Degeneracy threshold bracketing
# --------------------------------------------------------------------------


def check_degeneracy_threshold(scale: ValidationScale = FULL_SCALE) -> CheckResult:
    def run():
        topo = RelayTopology.from_db(10.0, d=0.5, nu=4.0)
        moments = TopologyMoments.from_topology(topo)
        grid = dp.DpGrid.build(2, rho_max=2.0, rho_step=scale.rho_step)
        zero = dp.solve_dual_2d(0.0, grid, moments, 2)
        runs = [dp.bisect_lambda("2d", grid, moments, 2, tol=scale.lambda_tol)
                for _ in range(2)]
        r = runs[0]
        lo_sol = dp.solve_dual_2d(r.lambda_lo, grid, moments, 2)
        ok = (zero.degenerate and lo_sol.degenerate and not r.solution.degenerate
              and (r.lambda_th - r.lambda_lo) <= scale.lambda_tol
              and runs[0].lambda_th == runs[1].lambda_th
              and runs[0].policy == runs[1].policy)
        return ok, (f"bracket [{r.lambda_lo:.6f}, {r.lambda_th:.6f}] width "
                    f"{r.lambda_th - r.lambda_lo:.2e}, reproducible={runs[0].lambda_th == runs[1].lambda_th}")

    return _timed(5, "degeneracy_threshold", run)


# --------------------------------------------------------------------------
# 6/7. Ordering chain and refinement monotonicity
# --------------------------------------------------------------------------


@dataclass
class OrderingPoint:
    snr_db: float
    eta0: float
    eta_fr4: float
    fr4_se: float
    eta_vr2: float
    vr2_se: float
    eta_vr4: float
    vr4_se: float
    hd: float
    hd_se: float
    frozen_eta_start: float
    frozen_eta_refined: float


def compute_ordering_points(scale: ValidationScale = FULL_SCALE):
    """Optimize VR K in {2, 4} and the baselines at each SNR point."""
    points = []
    for snr_db in scale.ordering_snr_db:
        topo = RelayTopology.from_db(snr_db, d=0.5, nu=4.0)
        moments = TopologyMoments.from_topology(topo)
        eta0, _ = bounds.direct_lower_bound(topo.mean_snr_sd)
        vr = {}
        frozen_pair = (np.nan, np.nan)
        for k_max in (2, 4):
            grid = dp.DpGrid.build(k_max, rho_max=scale.rho_max,
                                   rho_step=scale.rho_step)
            res = dp.bisect_lambda("2d", grid, moments, k_max, tol=scale.lambda_tol)
            ref = dp.refine_policy(res.policy, topo, n_samples=scale.opt_samples,
                                   seed=scale.seed)
            rep = exact.throughput(ref.policy, topo, n_samples=scale.eval_samples,
                                   seed=scale.seed)
            vr[k_max] = (rep.eta, rep.eta_se)
            if k_max == 4:
                frozen_pair = (ref.eta_start, ref.eta_refined)
        fr = bounds.fixed_rate_optimum(topo, 4, n_samples=scale.opt_samples,
                                       seed=scale.seed, rho_step=scale.rho_step,
                                       rho_max=scale.rho_max)
        fr_rep = exact.throughput(from_fixed_rate(fr.rho_star, 4), topo,
                                  n_samples=scale.eval_samples, seed=scale.seed)
        hd = bounds.hd_ergodic_capacity(topo, "full", n_samples=scale.hd_samples,
                                        seed=scale.seed)
        points.append(OrderingPoint(
            snr_db=snr_db, eta0=eta0, eta_fr4=fr_rep.eta, fr4_se=fr_rep.eta_se,
            eta_vr2=vr[2][0], vr2_se=vr[2][1], eta_vr4=vr[4][0], vr4_se=vr[4][1],
            hd=hd.value, hd_se=hd.std_err,
            frozen_eta_start=frozen_pair[0], frozen_eta_refined=frozen_pair[1]))
    return points


def check_ordering_chain(scale: ValidationScale = FULL_SCALE, points=None) -> CheckResult:
    def run():
        pts = points if points is not None else compute_ordering_points(scale)
        failures = []
        for p in pts:
            slack_fr = scale.se_band * p.fr4_se
            slack_vr4 = scale.se_band * np.hypot(p.fr4_se, p.vr4_se)
            slack_k = scale.se_band * np.hypot(p.vr2_se, p.vr4_se)
            slack_hd = scale.se_band * np.hypot(p.vr4_se, p.hd_se)
            if not p.eta0 <= p.eta_fr4 + slack_fr:
                failures.append(f"snr={p.snr_db}: eta0 {p.eta0:.4f} > fr4 {p.eta_fr4:.4f}")
            if not p.eta_fr4 <= p.eta_vr4 + slack_vr4:
                failures.append(f"snr={p.snr_db}: fr4 {p.eta_fr4:.4f} > vr4 {p.eta_vr4:.4f}")
            if not p.eta_vr2 <= p.eta_vr4 + slack_k:
                failures.append(f"snr={p.snr_db}: vr2 {p.eta_vr2:.4f} > vr4 {p.eta_vr4:.4f}")
            if not p.eta_vr4 <= p.hd + slack_hd:
                failures.append(f"snr={p.snr_db}: vr4 {p.eta_vr4:.4f} > hd {p.hd:.4f}")
        detail = "; ".join(failures) if failures else \
            f"chain eta0 <= fr4 <= vr4 <= hd and vr2 <= vr4 held at {len(pts)} SNR points"
        return not failures, detail

    return _timed(6, "ordering_chain", run)


def check_refinement_monotonicity(scale: ValidationScale = FULL_SCALE,
                                  points=None) -> CheckResult:
    def run():
        pts = points if points is not None else compute_ordering_points(scale)
        bad = [p for p in pts if not p.frozen_eta_refined >= p.frozen_eta_start]
        detail = "; ".join(f"snr={p.snr_db}: {p.frozen_eta_refined:.4f} < "
                           f"{p.frozen_eta_start:.4f}" for p in bad) if bad else \
            f"refined >= start on the frozen set at {len(pts)} points"
        return not bad, detail

    return _timed(7, "refinement_monotonicity", run)


# --------------------------------------------------------------------------
# 8. Relay-position shape
# --------------------------------------------------------------------------


def check_relay_position_shape(scale: ValidationScale = FULL_SCALE) -> CheckResult:
    def run():
        snr_db = 15.0
        vr4 = []
        fr2 = []
        for d in scale.distance_grid:
            topo = RelayTopology.from_db(snr_db, d=d, nu=4.0)
            moments = TopologyMoments.from_topology(topo)
            grid = dp.DpGrid.build(4, rho_max=scale.rho_max, rho_step=scale.rho_step)
            res = dp.bisect_lambda("2d", grid, moments, 4, tol=scale.lambda_tol)
            ref = dp.refine_policy(res.policy, topo, n_samples=scale.opt_samples,
                                   seed=scale.seed)
            rep = exact.throughput(ref.policy, topo, n_samples=scale.eval_samples,
                                   seed=scale.seed)
            vr4.append(rep.eta)
            fr = bounds.fixed_rate_optimum(topo, 2, n_samples=scale.opt_samples,
                                           seed=scale.seed, rho_step=scale.rho_step,
                                           rho_max=scale.rho_max)
            fr2.append(fr.eta)
        ds = np.asarray(scale.distance_grid)
        d_vr = float(ds[int(np.argmax(vr4))])
        d_fr = float(ds[int(np.argmax(fr2))])
        step = float(np.diff(ds).max())
        ok_vr = abs(d_vr - 0.5) <= step + 1e-9
        ok_fr = d_fr < 0.5
        return ok_vr and ok_fr, (f"VR K=4 peak at d={d_vr:g} (want 0.5 +- {step:g}); "
                                 f"FR K=2 peak at d={d_fr:g} (want < 0.5)")

    return _timed(8, "relay_position_shape", run)


# --------------------------------------------------------------------------
# 9. Gaussian-approximation identities
# --------------------------------------------------------------------------


def check_approx_identities(scale: ValidationScale = FULL_SCALE,
                            tol=1e-12, n_q=1000) -> CheckResult:
    def run():
        topo = RelayTopology.from_db(12.0, d=0.5, nu=4.0)
        moments = TopologyMoments.from_topology(topo)
        worst = 0.0
        rng = derived_rng(scale.seed, 1009)
        for rho in rng.uniform(0.05, 3.0, size=25):
            direct = capacity_cdf(moments.sd.mean_snr, 1.0 / rho)
            s2 = AccumState2D(rho, rho * rho)
            s1 = AccumState1D(rho)
            worst = max(worst, abs(approx_p1_2d(s2, moments.sd, first_round_rho=rho) - direct))
            worst = max(worst, abs(approx_p1_1d(s1, moments.sd, first_round_rho=rho) - direct))
            # single nonzero accumulation: sqrt(Y) = X makes 1-D and 2-D match
            worst = max(worst, abs(approx_p1_2d(s2, moments.sd) - approx_p1_1d(s1, moments.sd)))
            worst = max(worst, abs(
                approx_p3_2d(s2, AccumState2D(rho, rho * rho), moments.sd, moments.rd)
                - approx_p3_1d(rho, rho, moments.sd, moments.rd)))
        # oracle: the C library's complementary error function, an independent
        # implementation from the vectorized route used by q_function
        xs = np.linspace(-8.0, 8.0, n_q)
        qs = q_function(xs)
        q_err = max(abs(q - 0.5 * math.erfc(x / math.sqrt(2.0)))
                    for x, q in zip(xs, qs))
        worst = max(worst, q_err)
        # spot cross-check against direct quadrature of the normal density
        for x in np.linspace(-6.0, 6.0, 13):
            oracle, _ = integrate.quad(
                lambda t: np.exp(-t * t / 2.0) / np.sqrt(2.0 * np.pi), x, np.inf,
                epsabs=1e-13)
            worst = max(worst, abs(float(q_function(x)) - oracle))
        return worst <= tol, f"worst identity error {worst:.3e} (Q oracle err {q_err:.3e})"

    return _timed(9, "approx_identities", run)


# --------------------------------------------------------------------------
# 10. Random-restart study
# --------------------------------------------------------------------------


def check_restart_study(scale: ValidationScale = FULL_SCALE) -> CheckResult:
    def run():
        snr_db, k_max = 15.0, 2
        topo = RelayTopology.from_db(snr_db, d=0.5, nu=4.0)
        moments = TopologyMoments.from_topology(topo)
        grid = dp.DpGrid.build(k_max, rho_max=scale.rho_max, rho_step=scale.rho_step)
        res = dp.bisect_lambda("2d", grid, moments, k_max, tol=scale.lambda_tol)
        frozen = FrozenSampleSet.draw(topo, k_max, scale.opt_samples, scale.seed,
                                      TAG_REFINE)
        eta_dp = frozen.eta(res.policy)
        ref = dp.refine_policy(res.policy, topo, seed=scale.seed, frozen=frozen)
        study = dp.random_restart_study(scale.restart_count, scale.seed, topo, k_max,
                                        rho_max=scale.rho_max,
                                        n_samples=scale.opt_samples)
        best = float(study.etas.max())
        se = frozen.eta_se(ref.policy)
        frac = float((study.etas >= eta_dp).mean())
        bounded = best <= ref.eta_refined + scale.se_band * se
        scarce = frac < 0.10
        detail = (f"best-restart bound {'ok' if bounded else 'VIOLATED'} "
                  f"({best:.4f} vs refined {ref.eta_refined:.4f} "
                  f"+ {scale.se_band:g}*se={scale.se_band * se:.4f}); "
                  f"reach fraction {'ok' if scarce else 'VIOLATED'} "
                  f"({100 * frac:.1f}% of starts scored >= the dp seed "
                  f"{eta_dp:.4f}, need < 10%)")
        return bounded and scarce, detail

    return _timed(10, "restart_study", run)


# --------------------------------------------------------------------------
# Runner
# --------------------------------------------------------------------------


def run_validation(scale: ValidationScale = QUICK_SCALE):
    """Run every check; criteria 6 and 7 share one optimization sweep."""
    results = [
        check_formula_vs_simulator(scale),
        check_event_completeness(scale),
        check_channel_use_identity(scale),
        check_dp_small_optimality(scale),
        check_degeneracy_threshold(scale),
    ]
    points = compute_ordering_points(scale)
    results.append(check_ordering_chain(scale, points=points))
    results.append(check_refinement_monotonicity(scale, points=points))
    results.append(check_relay_position_shape(scale))
    results.append(check_approx_identities(scale))
    results.append(check_restart_study(scale))
    return results
