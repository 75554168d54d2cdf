import numpy as np
import pytest

from relayharq.channel import RelayTopology, capacity_cdf
from relayharq.errors import DegeneratePolicyError, DomainError
from relayharq.exact import (_mutual_info_draws, event_keys,
                             event_probabilities, estimate_tables, throughput)
from relayharq.policy import RatePolicy, from_fixed_rate, random_policy
from relayharq.sampling import TAG_SIM, derived_rng
from relayharq.sim import (_episode, _simulate_block, dump_traces, run_campaign,
                           run_episode, transmitted_channel_uses)

HUGE = 1e12


def test_first_round_success_trace():
    pol = RatePolicy(3, (0.7, 0.5, 0.5), ((0.3, 0.3), (0.2,)))
    tr = _episode(pol, [HUGE] * 3, [0.0] * 3, [0.0] * 3)
    assert tr.delivered and tr.rounds_used == 1
    assert tr.phase_switch_round is None
    assert tr.channel_uses == 0.7


def test_all_fail_trace_spends_all_source_rounds():
    pol = RatePolicy(3, (0.7, 0.5, 0.5), ((0.3, 0.3), (0.2,)))
    tr = _episode(pol, [0.0] * 3, [0.0] * 3, [0.0] * 3)
    assert not tr.delivered
    assert tr.rounds_used == 3
    assert tr.phase_switch_round is None
    assert tr.channel_uses == pytest.approx(0.7 + 0.5 + 0.5)


def test_pure_relaying_trace():
    pol = RatePolicy(3, (0.7, 0.5, 0.5), ((0.3, 0.3), (0.2,)))
    tr = _episode(pol, [0.0] * 3, [HUGE] * 3, [0.0] * 3)
    assert not tr.delivered
    assert tr.phase_switch_round == 1
    assert tr.rounds_used == 3
    assert tr.channel_uses == pytest.approx(0.7 + 0.3 + 0.3)
    assert tr.event_key() == "outage_relayed_1"


def test_relay_decode_at_last_round_triggers_no_relaying():
    pol = RatePolicy(2, (0.5, 0.5), ((0.4,),))
    # relay decodes only on round 2 (= K), destination never does
    tr = _episode(pol, [0.0, 0.0], [0.0, HUGE], [HUGE, HUGE])
    assert not tr.delivered
    assert tr.phase_switch_round is None
    assert tr.event_key() == "outage_direct"


def test_simultaneous_decode_counts_as_direct():
    pol = RatePolicy(2, (5.0, 1.0), ((1.0,),))
    tr = _episode(pol, [1.0, 0.0], [1.0, 0.0], [0.0, 0.0])
    assert tr.delivered and tr.rounds_used == 1 and tr.phase_switch_round is None


def test_channel_use_identity_on_random_episodes(topo5):
    rng_pol = derived_rng(21)
    pol = random_policy(4, 1.5, rng_pol, rho_min=0.05)
    rng = derived_rng(22)
    for _ in range(2000):
        tr = run_episode(pol, topo5, rng)
        assert transmitted_channel_uses(pol, tr.rounds_used,
                                        tr.phase_switch_round) == tr.channel_uses


def test_vectorized_block_matches_episode_loop(topo5):
    rng_pol = derived_rng(23)
    pol = random_policy(4, 1.2, rng_pol, rho_min=0.05)
    c_sd, c_sr, c_rd = _mutual_info_draws(topo5, 4, 5000, 9, 0, TAG_SIM)
    delivered, uses, codes = _simulate_block(pol, c_sd, c_sr, c_rd)
    keys = event_keys(4)
    for i in range(5000):
        tr = _episode(pol,
                      np.exp2(c_sd[i]) - 1.0,
                      np.exp2(c_sr[i]) - 1.0,
                      np.exp2(c_rd[i]) - 1.0)
        assert tr.delivered == delivered[i]
        assert tr.channel_uses == pytest.approx(uses[i], abs=1e-12)
        assert tr.event_key() == keys[codes[i]]


def test_campaign_single_round_matches_closed_form():
    topo = RelayTopology(1.0, 0.5, 4.0)
    rho = 1.3
    pol = RatePolicy(1, (rho,), ())
    cam = run_campaign(pol, topo, n_episodes=10**5, seed=31)
    expected = (1.0 - capacity_cdf(1.0, 1.0 / rho)) / rho
    assert abs(cam.eta - expected) <= 3.0 * cam.eta_se


def test_campaign_event_frequencies_partition(topo15):
    pol = from_fixed_rate(0.3, 3)
    cam = run_campaign(pol, topo15, n_episodes=10**4, seed=32)
    assert sum(cam.event_freqs.values()) == pytest.approx(1.0, abs=1e-12)
    assert set(cam.event_freqs) == set(event_keys(3))


def test_campaign_agrees_with_formula_throughput(topo15):
    rng = derived_rng(24)
    pol = random_policy(3, 1.5, rng, rho_min=0.2)
    rep = throughput(pol, topo15, n_samples=10**5, seed=33)
    cam = run_campaign(pol, topo15, n_episodes=10**5, seed=33)
    se = np.hypot(rep.eta_se, cam.eta_se)
    assert abs(rep.eta - cam.eta) <= 3.0 * se


def test_campaign_event_frequencies_match_formula(topo5):
    rng = derived_rng(25)
    pol = random_policy(3, 1.2, rng, rho_min=0.1)
    tables = estimate_tables(pol, topo5, n_samples=10**5, seed=34)
    probs = event_probabilities(tables)
    cam = run_campaign(pol, topo5, n_episodes=10**5, seed=34)
    for key, p in probs.items():
        if p <= 1e-3:
            continue
        se_formula = np.sqrt(p * (1.0 - p) / tables.n_samples)
        se = np.hypot(se_formula, cam.event_freqs_se[key])
        assert abs(p - cam.event_freqs[key]) <= 3.0 * se, key


def test_campaign_rejects_degenerate(topo5):
    with pytest.raises(DegeneratePolicyError):
        run_campaign(RatePolicy(1, (0.0,), ()), topo5, n_episodes=10**4)


def test_campaign_needs_enough_episodes(topo5):
    with pytest.raises(DomainError):
        run_campaign(from_fixed_rate(0.5, 2), topo5, n_episodes=10)


def test_trace_dump_schema_and_cap(topo5):
    pol = from_fixed_rate(0.5, 2)
    csv = dump_traces(pol, topo5, n_episodes=10**4, seed=2, limit=25)
    lines = csv.strip().splitlines()
    assert lines[0] == "episode,switch_round,rounds_used,delivered,channel_uses"
    assert len(lines) == 26
    first = lines[1].split(",")
    assert first[0] == "0" and first[3] in ("0", "1")


def test_campaign_outage_and_uses_match_formula(topo15):
    rng = derived_rng(26)
    pol = random_policy(2, 1.2, rng, rho_min=0.15)
    rep = throughput(pol, topo15, n_samples=10**5, seed=35)
    tables = estimate_tables(pol, topo15, n_samples=10**5, seed=35)
    cam = run_campaign(pol, topo15, n_episodes=10**5, seed=35)
    se_p = np.hypot(rep.p_out_se, cam.p_out_se)
    assert abs(rep.p_out - cam.p_out) <= max(3.0 * se_p, 1e-4)
    se_u = np.hypot(rep.d_norm_se, cam.mean_channel_uses_se)
    assert abs(rep.d_norm - cam.mean_channel_uses) <= 3.0 * se_u
