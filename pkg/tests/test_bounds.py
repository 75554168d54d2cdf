import numpy as np
import pytest

from relayharq.bounds import (FixedRateResult, HdCapacityParams,
                              direct_lower_bound, fixed_rate_optimum,
                              hd_capacity_terms, hd_capacity_value,
                              hd_ergodic_capacity, optimize_hd_draws)
from relayharq.channel import RelayTopology, capacity_cdf, link_moments, mutual_info
from relayharq.errors import DomainError
from relayharq.sampling import derived_rng


def test_direct_bound_dominates_single_point():
    eta0, rho0 = direct_lower_bound(1.0)
    single = (1.0 - capacity_cdf(1.0, 1.0)) / 1.0
    assert single == pytest.approx(0.3679, abs=1e-4)
    assert eta0 >= single
    assert rho0 > 0.0


def test_direct_bound_below_ergodic_capacity():
    for snr_db in (0.0, 10.0, 20.0):
        mean = 10.0 ** (snr_db / 10.0)
        eta0, _ = direct_lower_bound(mean)
        assert eta0 <= link_moments(mean).c_mean


def test_direct_bound_matches_fine_grid_scan():
    mean = 10.0 ** 1.5
    eta0, rho0 = direct_lower_bound(mean)
    rhos = np.linspace(0.01, 5.0, 10**4)
    vals = (1.0 - capacity_cdf(mean, 1.0 / rhos)) / rhos
    best = int(np.argmax(vals))
    assert eta0 >= vals[best] - 1e-9
    assert abs(rho0 - rhos[best]) <= 1e-3


def test_direct_bound_rejects_nonpositive():
    with pytest.raises(DomainError):
        direct_lower_bound(0.0)


def test_fixed_rate_k1_matches_direct_bound(topo15):
    eta0, _ = direct_lower_bound(topo15.mean_snr_sd)
    fr = fixed_rate_optimum(topo15, 1, n_samples=10**5, seed=2)
    assert isinstance(fr, FixedRateResult)
    assert abs(fr.eta - eta0) <= 4.0 * fr.eta_se


def test_fixed_rate_estimator_consistent(topo15):
    small = fixed_rate_optimum(topo15, 2, n_samples=5 * 10**4, seed=3)
    large = fixed_rate_optimum(topo15, 2, n_samples=10**5, seed=3)
    se = np.hypot(small.eta_se, large.eta_se)
    assert abs(small.eta - large.eta) <= 3.0 * se


def test_hd_params_validation():
    HdCapacityParams(0.5, 0.0, 1.0)
    with pytest.raises(DomainError):
        HdCapacityParams(1.2, 0.0, 0.5)


def test_hd_terms_zero_relay_reduce_to_direct():
    g_sd = np.array([0.7, 3.0, 20.0])
    zeros = np.zeros_like(g_sd)
    params = HdCapacityParams(alpha=1.0, beta=0.0, kappa=1.0)
    vals = hd_capacity_value(params, zeros, g_sd, zeros)
    assert vals == pytest.approx(mutual_info(g_sd), abs=1e-12)


def test_hd_optimum_zero_relay_equals_direct():
    g_sd = np.array([0.5, 2.0, 31.6])
    zeros = np.zeros_like(g_sd)
    vals = optimize_hd_draws(zeros, g_sd, zeros, variant="full")
    assert np.allclose(vals, mutual_info(g_sd), atol=1e-6)


def test_hd_variant_set_inclusion():
    rng = derived_rng(44)
    g_sr = rng.exponential(500.0, 64)
    g_sd = rng.exponential(31.6, 64)
    g_rd = rng.exponential(500.0, 64)
    full = optimize_hd_draws(g_sr, g_sd, g_rd, variant="full")
    fp = optimize_hd_draws(g_sr, g_sd, g_rd, variant="fixed_power")
    orth = optimize_hd_draws(g_sr, g_sd, g_rd, variant="orthogonal")
    assert np.all(full >= fp - 1e-12)
    assert np.all(full >= orth - 1e-12)


def test_hd_ergodic_capacity_reproducible(topo15):
    a = hd_ergodic_capacity(topo15, "full", n_samples=300, seed=5)
    b = hd_ergodic_capacity(topo15, "full", n_samples=300, seed=5)
    assert a.value == b.value
    assert a.std_err > 0.0
    with pytest.raises(DomainError):
        hd_ergodic_capacity(topo15, "sideways", n_samples=300)


def test_hd_terms_shapes():
    c1, c2 = hd_capacity_terms(0.5, 0.2, 0.4, np.ones(5), np.ones(5), np.ones(5))
    assert c1.shape == (5,) and c2.shape == (5,)
    assert np.all(c1 >= 0.0) and np.all(c2 >= 0.0)
