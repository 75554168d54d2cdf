"""Monte Carlo estimation of the decoding-failure tables and the closed-form
throughput assembled from them.

All table entries for one policy come from a single common sample set, which
makes the event-probability completeness identity exact and the tables
monotone in the round index sample-by-sample.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import LN2, RelayTopology
from .errors import ContractError, DegeneratePolicyError, DomainError
from .policy import RatePolicy, ensure_valid
from .sampling import (LINK_RD, LINK_SD, LINK_SR, TAG_EXACT, block_sizes,
                       derived_rng)

DEFAULT_N_SAMPLES = 10**6
MIN_N_SAMPLES = 10**4
DEFAULT_BLOCK_SIZE = 10**4


@dataclass(frozen=True)
class OutageTables:
    """Estimated failure probabilities p1(k), p2(k), p3(l, k) with standard errors.

    p1(k): destination failure after k source rounds (k = 0..K, p1(0) = 1).
    p2(k): relay failure after k source rounds (k = 0..K-1, p2(0) = 1).
    p3(l, k): destination failure after l source rounds plus k-l relay rounds
    (1 <= l < k <= K); entries outside that triangle are undefined.
    """

    k_max: int
    n_samples: int
    p1_values: np.ndarray
    p2_values: np.ndarray
    p3_values: np.ndarray
    p1_se: np.ndarray = field(repr=False, default=None)
    p2_se: np.ndarray = field(repr=False, default=None)
    p3_se: np.ndarray = field(repr=False, default=None)

    def p1(self, k) -> float:
        if not 0 <= k <= self.k_max:
            raise ContractError(f"p1({k}) outside 0..K")
        return float(self.p1_values[k])

    def p2(self, k) -> float:
        if not 0 <= k <= self.k_max - 1:
            raise ContractError(f"p2({k}) outside 0..K-1")
        return float(self.p2_values[k])

    def p3(self, l, k) -> float:
        if not 1 <= l < k <= self.k_max:
            raise ContractError(f"p3({l},{k}) outside 1 <= l < k <= K")
        return float(self.p3_values[l, k])


def _mutual_info_draws(topo: RelayTopology, k_max, n, seed, block_index, tag):
    """Per-round mutual-information draws (n, K) for the three links of one block."""
    out = []
    for link_id, mean in ((LINK_SD, topo.mean_snr_sd), (LINK_SR, topo.mean_snr_sr),
                          (LINK_RD, topo.mean_snr_rd)):
        rng = derived_rng(seed, tag, link_id, block_index)
        out.append(np.log1p(rng.exponential(mean, size=(n, k_max))) / LN2)
    return out


def _fail_counts(policy: RatePolicy, c_sd, c_sr, c_rd):
    """Failure-indicator counts for every table entry on one block of draws."""
    k_max = policy.k_max
    rho_s = np.asarray(policy.rho_s)
    s1 = np.cumsum(c_sd * rho_s, axis=1)
    s2 = np.cumsum(c_sr * rho_s, axis=1)
    n1 = (s1 < 1.0).sum(axis=0)
    n2 = (s2 < 1.0).sum(axis=0) if k_max > 1 else np.zeros(0, dtype=np.int64)
    n3 = np.zeros((k_max + 1, k_max + 1), dtype=np.int64)
    for l in range(1, k_max):
        weights = np.asarray(policy.rho_r[l - 1])
        t = s1[:, l - 1:l] + np.cumsum(c_rd[:, l:] * weights, axis=1)
        n3[l, l + 1:] = (t < 1.0).sum(axis=0)
    return n1, n2[:k_max - 1], n3


def _tables_from_counts(k_max, n1, n2, n3, n):
    p1 = np.empty(k_max + 1)
    p1[0] = 1.0
    p1[1:] = n1 / n
    p2 = np.empty(k_max)
    p2[0] = 1.0
    if k_max > 1:
        p2[1:] = n2 / n
    p3 = np.full((k_max + 1, k_max + 1), np.nan)
    for l in range(1, k_max):
        p3[l, l + 1:] = n3[l, l + 1:] / n

    def binom_se(p):
        return np.sqrt(np.clip(p * (1.0 - p), 0.0, None) / n)

    se1 = binom_se(p1)
    se1[0] = 0.0
    se2 = binom_se(p2)
    se2[0] = 0.0
    se3 = binom_se(p3)
    return OutageTables(k_max=k_max, n_samples=int(n), p1_values=p1, p2_values=p2,
                        p3_values=p3, p1_se=se1, p2_se=se2, p3_se=se3)


def estimate_tables(policy: RatePolicy, topo: RelayTopology,
                    n_samples=DEFAULT_N_SAMPLES, seed=0,
                    block_size=DEFAULT_BLOCK_SIZE) -> OutageTables:
    """Estimate every table entry from one shared sample set (common random numbers)."""
    ensure_valid(policy)
    if n_samples < MIN_N_SAMPLES:
        raise DomainError(f"n_samples must be at least {MIN_N_SAMPLES}")
    k_max = policy.k_max
    tot1 = np.zeros(k_max, dtype=np.int64)
    tot2 = np.zeros(max(k_max - 1, 0), dtype=np.int64)
    tot3 = np.zeros((k_max + 1, k_max + 1), dtype=np.int64)
    for b, nb in enumerate(block_sizes(n_samples, block_size)):
        c_sd, c_sr, c_rd = _mutual_info_draws(topo, k_max, nb, seed, b, TAG_EXACT)
        n1, n2, n3 = _fail_counts(policy, c_sd, c_sr, c_rd)
        tot1 += n1
        tot2 += n2
        tot3 += n3
    return _tables_from_counts(k_max, tot1, tot2, tot3, n_samples)


def assemble_pout(tables: OutageTables) -> float:
    """Outage probability assembled from the failure tables."""
    k_max = tables.k_max
    if np.isnan(tables.p1_values).any() or np.isnan(tables.p2_values).any():
        raise ContractError("incomplete tables")
    total = tables.p1(k_max) * tables.p2(k_max - 1)
    for i in range(1, k_max):
        total += (tables.p2(i - 1) - tables.p2(i)) * tables.p3(i, k_max)
    return float(total)


def expected_channel_uses(policy: RatePolicy, tables: OutageTables) -> float:
    """Expected channel uses per information bit spent by the protocol."""
    if policy.k_max != tables.k_max:
        raise ContractError("policy and tables disagree on K")
    k_max = policy.k_max
    total = 0.0
    for i in range(1, k_max + 1):
        total += policy.rho_s[i - 1] * tables.p1(i - 1) * tables.p2(i - 1)
    for i in range(1, k_max):
        inner = policy.rho_relay(i, i + 1) * tables.p1(i)
        for l in range(i + 2, k_max + 1):
            inner += policy.rho_relay(i, l) * tables.p3(i, l - 1)
        total += (tables.p2(i - 1) - tables.p2(i)) * inner
    return float(total)


# ---------------------------------------------------------------------------
# Packet-level event taxonomy: decoding can finish at the destination during
# broadcasting or relaying, or fail after relaying from round l, or fail with
# the source transmitting all K rounds. These bins partition every packet.
# ---------------------------------------------------------------------------


def event_keys(k_max):
    keys = [f"decode_direct_{k}" for k in range(1, k_max + 1)]
    for l in range(1, k_max):
        for k in range(l + 1, k_max + 1):
            keys.append(f"decode_relayed_{l}_{k}")
    keys.extend(f"outage_relayed_{l}" for l in range(1, k_max))
    keys.append("outage_direct")
    return keys


def event_probabilities(tables: OutageTables) -> dict:
    """Probability of each packet-level event, from the failure tables."""
    k_max = tables.k_max
    probs = {}
    for k in range(1, k_max + 1):
        probs[f"decode_direct_{k}"] = (tables.p1(k - 1) - tables.p1(k)) * tables.p2(k - 1)
    for l in range(1, k_max):
        gain = tables.p2(l - 1) - tables.p2(l)
        for k in range(l + 1, k_max + 1):
            if k == l + 1:
                tail = tables.p1(k - 1) - tables.p3(l, k)
            else:
                tail = tables.p3(l, k - 1) - tables.p3(l, k)
            probs[f"decode_relayed_{l}_{k}"] = gain * tail
    for l in range(1, k_max):
        probs[f"outage_relayed_{l}"] = (tables.p2(l - 1) - tables.p2(l)) * tables.p3(l, k_max)
    probs["outage_direct"] = tables.p1(k_max) * tables.p2(k_max - 1)
    return probs


@dataclass(frozen=True)
class ThroughputReport:
    """Exact-evaluation summary for one (policy, topology) pair."""

    policy_hash: str
    snr_db: float
    d: float
    nu: float
    k_max: int
    n_samples: int
    p_out: float
    p_out_se: float
    d_norm: float
    d_norm_se: float
    eta: float
    eta_se: float
    event_probs: dict
    event_probs_se: dict

    CSV_HEADER = "policy_hash,snr_db,d,nu,k_max,p_out,d_norm,eta,n_samples"

    def csv_row(self) -> str:
        return ",".join([
            self.policy_hash,
            repr(float(self.snr_db)),
            repr(float(self.d)),
            repr(float(self.nu)),
            str(self.k_max),
            repr(float(self.p_out)),
            repr(float(self.d_norm)),
            repr(float(self.eta)),
            str(self.n_samples),
        ])


def throughput(policy: RatePolicy, topo: RelayTopology, n_samples=DEFAULT_N_SAMPLES,
               seed=0, block_size=DEFAULT_BLOCK_SIZE) -> ThroughputReport:
    """Renewal-reward throughput (1 - p_out) / d_norm with per-block standard errors."""
    ensure_valid(policy)
    if policy.is_degenerate():
        raise DegeneratePolicyError("degenerate policy spends no channel uses")
    if n_samples < MIN_N_SAMPLES:
        raise DomainError(f"n_samples must be at least {MIN_N_SAMPLES}")
    k_max = policy.k_max
    tot1 = np.zeros(k_max, dtype=np.int64)
    tot2 = np.zeros(max(k_max - 1, 0), dtype=np.int64)
    tot3 = np.zeros((k_max + 1, k_max + 1), dtype=np.int64)
    keys = event_keys(k_max)
    block_p_out, block_d_norm, block_eta = [], [], []
    block_events = []
    for b, nb in enumerate(block_sizes(n_samples, block_size)):
        c_sd, c_sr, c_rd = _mutual_info_draws(topo, k_max, nb, seed, b, TAG_EXACT)
        n1, n2, n3 = _fail_counts(policy, c_sd, c_sr, c_rd)
        tot1 += n1
        tot2 += n2
        tot3 += n3
        tb = _tables_from_counts(k_max, n1, n2, n3, nb)
        po = assemble_pout(tb)
        dn = expected_channel_uses(policy, tb)
        block_p_out.append(po)
        block_d_norm.append(dn)
        block_eta.append((1.0 - po) / dn if dn > 0.0 else 0.0)
        ev = event_probabilities(tb)
        block_events.append([ev[k] for k in keys])
    tables = _tables_from_counts(k_max, tot1, tot2, tot3, n_samples)
    p_out = assemble_pout(tables)
    d_norm = expected_channel_uses(policy, tables)
    if d_norm <= 0.0:
        raise DegeneratePolicyError("expected channel uses is zero")
    eta = (1.0 - p_out) / d_norm

    def block_se(values):
        arr = np.asarray(values)
        if arr.shape[0] < 2:
            return np.zeros(arr.shape[1:]) if arr.ndim > 1 else 0.0
        return arr.std(axis=0, ddof=1) / np.sqrt(arr.shape[0])

    ev_pooled = event_probabilities(tables)
    ev_se = block_se(block_events)
    return ThroughputReport(
        policy_hash=policy.policy_hash(),
        snr_db=topo.snr_db,
        d=topo.d,
        nu=topo.nu,
        k_max=k_max,
        n_samples=int(n_samples),
        p_out=p_out,
        p_out_se=float(block_se(block_p_out)),
        d_norm=d_norm,
        d_norm_se=float(block_se(block_d_norm)),
        eta=float(eta),
        eta_se=float(block_se(block_eta)),
        event_probs=ev_pooled,
        event_probs_se={k: float(s) for k, s in zip(keys, np.atleast_1d(ev_se))},
    )


class FrozenSampleSet:
    """One fixed set of mutual-information draws reused across many policies.

    Local search over the exact throughput needs a noise-free comparison
    between candidate policies, so every candidate is scored on the same
    draws. The draws are held as (K, n) float32 blocks: this surface exists
    only to rank candidates, and the cheap layout makes the thousands of
    rescoring passes affordable. Reported results always come from the
    float64 evaluator in throughput().
    """

    def __init__(self, c_sd, c_sr, c_rd, k_max):
        self.c_sd = np.ascontiguousarray(np.transpose(c_sd)).astype(np.float32)
        self.c_sr = np.ascontiguousarray(np.transpose(c_sr)).astype(np.float32)
        self.c_rd = np.ascontiguousarray(np.transpose(c_rd)).astype(np.float32)
        self.k_max = k_max
        self.n_samples = self.c_sd.shape[1]

    @classmethod
    def draw(cls, topo: RelayTopology, k_max, n_samples, seed, tag) -> "FrozenSampleSet":
        c_sd, c_sr, c_rd = _mutual_info_draws(topo, k_max, n_samples, seed, 0, tag)
        return cls(c_sd, c_sr, c_rd, k_max)

    def _p_arrays(self, policy: RatePolicy):
        k_max = policy.k_max
        rho = np.asarray(policy.rho_s, dtype=np.float32)[:, None]
        s1 = np.cumsum(self.c_sd * rho, axis=0)
        s2 = np.cumsum(self.c_sr * rho, axis=0)
        p1 = np.empty(k_max + 1)
        p1[0] = 1.0
        p1[1:] = (s1 < 1.0).mean(axis=1)
        p2 = np.empty(k_max)
        p2[0] = 1.0
        if k_max > 1:
            p2[1:] = (s2[:k_max - 1] < 1.0).mean(axis=1)
        p3 = {}
        for l in range(1, k_max):
            weights = np.asarray(policy.rho_r[l - 1], dtype=np.float32)[:, None]
            t = s1[l - 1][None, :] + np.cumsum(self.c_rd[l:] * weights, axis=0)
            p3[l] = (t < 1.0).mean(axis=1)  # index j -> p3(l, l+1+j)
        return p1, p2, p3

    def tables(self, policy: RatePolicy) -> OutageTables:
        p1, p2, p3 = self._p_arrays(policy)
        n = self.n_samples
        n1 = np.rint(p1[1:] * n).astype(np.int64)
        n2 = np.rint(p2[1:] * n).astype(np.int64)
        n3 = np.zeros((policy.k_max + 1, policy.k_max + 1), dtype=np.int64)
        for l, vals in p3.items():
            n3[l, l + 1:] = np.rint(vals * n).astype(np.int64)
        return _tables_from_counts(policy.k_max, n1, n2, n3, n)

    def eta(self, policy: RatePolicy) -> float:
        """Throughput on the frozen draws; a policy spending nothing scores 0."""
        k_max = policy.k_max
        rho = np.asarray(policy.rho_s)
        p1, p2, p3 = self._p_arrays(policy)
        p_out = p1[k_max] * p2[k_max - 1]
        for i in range(1, k_max):
            p_out += (p2[i - 1] - p2[i]) * p3[i][k_max - i - 1]
        d_norm = float(np.sum(rho * p1[:k_max] * p2[:k_max]))
        for i in range(1, k_max):
            row = np.asarray(policy.rho_r[i - 1])
            inner = row[0] * p1[i]
            if k_max >= i + 2:
                inner += float(np.dot(row[1:], p3[i][:k_max - i - 1]))
            d_norm += (p2[i - 1] - p2[i]) * inner
        if d_norm <= 0.0:
            return 0.0
        return float((1.0 - p_out) / d_norm)

    def eta_se(self, policy: RatePolicy, n_blocks=50) -> float:
        """Block-resampled standard error of eta on the frozen draws."""
        bounds = np.linspace(0, self.n_samples, n_blocks + 1).astype(int)
        etas = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            if hi <= lo:
                continue
            sub = FrozenSampleSet(self.c_sd[:, lo:hi].T, self.c_sr[:, lo:hi].T,
                                  self.c_rd[:, lo:hi].T, self.k_max)
            etas.append(sub.eta(policy))
        arr = np.asarray(etas)
        return float(arr.std(ddof=1) / np.sqrt(len(arr)))
