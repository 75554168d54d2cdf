"""Event-level simulator of the relaying protocol.

This module replays the protocol round by round: the source broadcasts until
the relay or the destination decodes, then the relay (if it decoded first and
rounds remain) forwards until the destination decodes or the round budget is
spent. It shares no probability machinery with the exact evaluator, and its
sample streams use a different tag, so agreement between the two is a genuine
cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import LN2, RelayTopology
from .errors import DegeneratePolicyError, DomainError
from .exact import _mutual_info_draws, event_keys
from .policy import RatePolicy, ensure_valid
from .sampling import TAG_SIM, TAG_TRACE, block_sizes, derived_rng

MIN_N_EPISODES = 10**4
DEFAULT_BLOCK_SIZE = 10**4

TRACE_CSV_HEADER = "episode,switch_round,rounds_used,delivered,channel_uses"


@dataclass(frozen=True)
class EpisodeTrace:
    """Outcome of one packet transmission."""

    rounds_used: int
    phase_switch_round: int | None
    delivered: bool
    channel_uses: float

    def event_key(self) -> str:
        if self.delivered:
            if self.phase_switch_round is None:
                return f"decode_direct_{self.rounds_used}"
            return f"decode_relayed_{self.phase_switch_round}_{self.rounds_used}"
        if self.phase_switch_round is None:
            return "outage_direct"
        return f"outage_relayed_{self.phase_switch_round}"


def transmitted_channel_uses(policy: RatePolicy, rounds_used, phase_switch_round=None):
    """Channel uses implied by an episode outcome (the renewal cost of its event)."""
    total = 0.0
    if phase_switch_round is None:
        for i in range(rounds_used):
            total += policy.rho_s[i]
        return total
    for i in range(phase_switch_round):
        total += policy.rho_s[i]
    for k in range(phase_switch_round + 1, rounds_used + 1):
        total += policy.rho_relay(phase_switch_round, k)
    return total


def _episode(policy: RatePolicy, g_sd, g_sr, g_rd) -> EpisodeTrace:
    k_max = policy.k_max
    acc_dst = 0.0
    acc_rel = 0.0
    uses = 0.0
    switch = None
    for k in range(1, k_max + 1):
        if switch is None:
            rho = policy.rho_s[k - 1]
            uses += rho
            acc_dst += (math.log1p(g_sd[k - 1]) / LN2) * rho
            acc_rel += (math.log1p(g_sr[k - 1]) / LN2) * rho
            if acc_dst >= 1.0:
                return EpisodeTrace(k, None, True, uses)
            if acc_rel >= 1.0 and k < k_max:
                switch = k
        else:
            rho = policy.rho_relay(switch, k)
            uses += rho
            acc_dst += (math.log1p(g_rd[k - 1]) / LN2) * rho
            if acc_dst >= 1.0:
                return EpisodeTrace(k, switch, True, uses)
    return EpisodeTrace(k_max, switch, False, uses)


def run_episode(policy: RatePolicy, topo: RelayTopology, rng) -> EpisodeTrace:
    """Simulate one packet; draws one SNR per round and link from rng."""
    ensure_valid(policy)
    k = policy.k_max
    g_sd = rng.exponential(topo.mean_snr_sd, size=k)
    g_sr = rng.exponential(topo.mean_snr_sr, size=k)
    g_rd = rng.exponential(topo.mean_snr_rd, size=k)
    return _episode(policy, g_sd, g_sr, g_rd)


@dataclass(frozen=True)
class CampaignResult:
    """Empirical renewal-reward summary over many independent episodes."""

    n_episodes: int
    n_delivered: int
    eta: float
    eta_se: float
    p_out: float
    p_out_se: float
    mean_channel_uses: float
    mean_channel_uses_se: float
    event_freqs: dict
    event_freqs_se: dict


def _event_codes(k_max):
    """Map (outcome) -> canonical event index, mirroring event_keys order."""
    keys = event_keys(k_max)
    return {key: i for i, key in enumerate(keys)}, keys


def _simulate_block(policy: RatePolicy, c_sd, c_sr, c_rd):
    """Vectorized protocol replay on one block of mutual-information draws.

    Returns (delivered, channel_uses, event_code) arrays for the block.
    """
    k_max = policy.k_max
    n = c_sd.shape[0]
    rho_s = np.asarray(policy.rho_s)
    s1 = np.cumsum(c_sd * rho_s, axis=1)
    s2 = np.cumsum(c_sr * rho_s, axis=1)
    ok_d = s1 >= 1.0
    ok_r = s2 >= 1.0
    k_d = np.where(ok_d.any(axis=1), ok_d.argmax(axis=1) + 1, k_max + 1)
    k_r = np.where(ok_r.any(axis=1), ok_r.argmax(axis=1) + 1, k_max + 1)

    prefix_s = np.concatenate([[0.0], np.cumsum(rho_s)])
    delivered = np.zeros(n, dtype=bool)
    uses = np.zeros(n)
    codes = np.zeros(n, dtype=np.int64)

    n_pairs = k_max * (k_max - 1) // 2
    code_direct = 0                       # decode_direct_k -> k - 1
    code_relayed = k_max                  # then the (l, k) pairs in lex order
    code_out_rel = k_max + n_pairs        # outage_relayed_l -> offset + l - 1
    code_out_dir = 2 * k_max + n_pairs - 1

    direct = (k_d <= k_r) & (k_d <= k_max)
    delivered[direct] = True
    uses[direct] = prefix_s[k_d[direct]]
    codes[direct] = code_direct + k_d[direct] - 1

    switched = (k_r < k_d) & (k_r < k_max)
    no_help = ~direct & ~switched
    uses[no_help] = prefix_s[k_max]
    codes[no_help] = code_out_dir

    for l in range(1, k_max):
        mask = switched & (k_r == l)
        if not mask.any():
            continue
        weights = np.asarray(policy.rho_r[l - 1])
        t = s1[mask, l - 1][:, None] + np.cumsum(c_rd[mask, l:] * weights, axis=1)
        ok_t = t >= 1.0
        n_rel = k_max - l
        j_done = np.where(ok_t.any(axis=1), ok_t.argmax(axis=1) + 1, n_rel + 1)
        got = j_done <= n_rel
        j_used = np.minimum(j_done, n_rel)
        prefix_r = np.concatenate([[0.0], np.cumsum(weights)])
        delivered[mask] = got
        uses[mask] = prefix_s[l] + prefix_r[j_used]
        pair_base = code_relayed + (l - 1) * k_max - l * (l - 1) // 2
        rel_codes = np.where(got, pair_base + j_used - 1, code_out_rel + l - 1)
        codes[mask] = rel_codes
    return delivered, uses, codes


def run_campaign(policy: RatePolicy, topo: RelayTopology, n_episodes,
                 seed=0, block_size=DEFAULT_BLOCK_SIZE) -> CampaignResult:
    """Renewal-reward estimates over independent episodes."""
    ensure_valid(policy)
    if policy.is_degenerate():
        raise DegeneratePolicyError("degenerate policy never spends channel uses")
    if n_episodes < MIN_N_EPISODES:
        raise DomainError(f"n_episodes must be at least {MIN_N_EPISODES}")
    k_max = policy.k_max
    _, keys = _event_codes(k_max)
    n_events = len(keys)
    counts = np.zeros(n_events, dtype=np.int64)
    n_delivered = 0
    sum_uses = 0.0
    block_eta, block_uses = [], []
    for b, nb in enumerate(block_sizes(n_episodes, block_size)):
        c_sd, c_sr, c_rd = _mutual_info_draws(topo, k_max, nb, seed, b, TAG_SIM)
        delivered, uses, codes = _simulate_block(policy, c_sd, c_sr, c_rd)
        counts += np.bincount(codes, minlength=n_events)
        n_delivered += int(delivered.sum())
        block_total_uses = float(uses.sum())
        sum_uses += block_total_uses
        block_eta.append(float(delivered.sum()) / block_total_uses if block_total_uses > 0 else 0.0)
        block_uses.append(block_total_uses / nb)
    eta = n_delivered / sum_uses
    p_out = 1.0 - n_delivered / n_episodes
    freqs = counts / n_episodes

    def block_se(values):
        arr = np.asarray(values)
        if len(arr) < 2:
            return 0.0
        return float(arr.std(ddof=1) / np.sqrt(len(arr)))

    freq_se = np.sqrt(np.clip(freqs * (1.0 - freqs), 0.0, None) / n_episodes)
    return CampaignResult(
        n_episodes=int(n_episodes),
        n_delivered=int(n_delivered),
        eta=float(eta),
        eta_se=block_se(block_eta),
        p_out=float(p_out),
        p_out_se=float(np.sqrt(max(p_out * (1.0 - p_out), 0.0) / n_episodes)),
        mean_channel_uses=float(sum_uses / n_episodes),
        mean_channel_uses_se=block_se(block_uses),
        event_freqs={k: float(f) for k, f in zip(keys, freqs)},
        event_freqs_se={k: float(s) for k, s in zip(keys, freq_se)},
    )


def dump_traces(policy: RatePolicy, topo: RelayTopology, n_episodes, seed=0,
                limit=1000) -> str:
    """CSV dump of individual episodes, capped at `limit` rows."""
    ensure_valid(policy)
    rng = derived_rng(seed, TAG_TRACE)
    rows = [TRACE_CSV_HEADER]
    for i in range(min(n_episodes, limit)):
        tr = run_episode(policy, topo, rng)
        switch = "" if tr.phase_switch_round is None else str(tr.phase_switch_round)
        rows.append(f"{i},{switch},{tr.rounds_used},{int(tr.delivered)},{tr.channel_uses!r}")
    return "\n".join(rows) + "\n"
