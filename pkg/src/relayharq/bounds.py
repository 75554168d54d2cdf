"""Throughput baselines and ceilings: single-shot direct transmission, the
best fixed-rate policy, and the listen/forward time-division capacity of the
half-duplex relay channel (a channel-state-aware ceiling: the split is
re-optimized for every fading draw before averaging).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import LN2, RelayTopology, capacity_cdf
from .errors import DomainError
from .exact import FrozenSampleSet
from .policy import from_fixed_rate
from .sampling import (LINK_RD, LINK_SD, LINK_SR, TAG_FIXED_RATE, TAG_HD_BOUND,
                       derived_rng)

_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0

VARIANTS = ("full", "fixed_power", "orthogonal")


def _golden_max(f, lo, hi, iters=60):
    a, b = float(lo), float(hi)
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc < fd:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
        else:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
    x = 0.5 * (a + b)
    return x, f(x)


def direct_lower_bound(mean_snr_sd, rho_lo=1e-3, rho_hi=1e3, n_scan=601):
    """Best single-transmission throughput max_rho (1 - cdf(1/rho))/rho.

    Returns (eta0, rho_star).
    """
    if mean_snr_sd <= 0.0:
        raise DomainError("mean_snr_sd must be positive")

    def objective(rho):
        return (1.0 - capacity_cdf(mean_snr_sd, 1.0 / rho)) / rho

    scan = np.geomspace(rho_lo, rho_hi, n_scan)
    values = (1.0 - capacity_cdf(mean_snr_sd, 1.0 / scan)) / scan
    best = int(np.argmax(values))
    lo = scan[max(best - 1, 0)]
    hi = scan[min(best + 1, n_scan - 1)]
    rho_star, eta0 = _golden_max(objective, lo, hi, iters=80)
    return float(eta0), float(rho_star)


@dataclass(frozen=True)
class FixedRateResult:
    rho_star: float
    eta: float
    eta_se: float
    n_samples: int


def fixed_rate_optimum(topo: RelayTopology, k_max, n_samples=10**5, seed=0,
                       rho_step=0.05, rho_max=4.0) -> FixedRateResult:
    """Best throughput when every round reuses one redundancy value.

    Scans the action grid on frozen draws, then polishes the best point with a
    golden-section pass on the same draws.
    """
    if k_max < 1:
        raise DomainError("k_max must be at least 1")
    frozen = FrozenSampleSet.draw(topo, k_max, n_samples, seed, TAG_FIXED_RATE)

    def objective(rho):
        return frozen.eta(from_fixed_rate(rho, k_max))

    candidates = rho_step * np.arange(1, int(round(rho_max / rho_step)) + 1)
    etas = np.array([objective(r) for r in candidates])
    best = int(np.argmax(etas))
    lo = candidates[best] - rho_step if best > 0 else rho_step * 0.1
    hi = candidates[best] + rho_step
    rho_star, eta = _golden_max(objective, max(lo, rho_step * 1e-3), hi, iters=40)
    if eta < etas[best]:
        rho_star, eta = float(candidates[best]), float(etas[best])
    eta_se = frozen.eta_se(from_fixed_rate(rho_star, k_max))
    return FixedRateResult(rho_star=float(rho_star), eta=float(eta),
                           eta_se=float(eta_se), n_samples=int(n_samples))


# ---------------------------------------------------------------------------
# Half-duplex time-division ergodic capacity
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HdCapacityParams:
    """Listen fraction alpha, combining weight beta, source energy split kappa."""

    alpha: float
    beta: float
    kappa: float

    def __post_init__(self):
        for name in ("alpha", "beta", "kappa"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise DomainError(f"{name} must lie in [0, 1]")


def _rate_term(frac, snr_arg):
    """frac * C(snr_arg / frac); the slot contributes nothing when frac == 0."""
    frac = np.asarray(frac, dtype=float)
    snr_arg = np.asarray(snr_arg, dtype=float)
    safe = np.where(frac > 0.0, frac, 1.0)
    out = np.where(frac > 0.0, frac * np.log1p(snr_arg / safe) / LN2, 0.0)
    return out


def hd_capacity_terms(alpha, beta, kappa, g_sr, g_sd, g_rd):
    """The two rate expressions whose minimum the time-division scheme achieves."""
    a_bar = 1.0 - np.asarray(alpha, dtype=float)
    b_bar = 1.0 - np.asarray(beta, dtype=float)
    k_bar = 1.0 - np.asarray(kappa, dtype=float)
    c1 = (_rate_term(alpha, kappa * (g_sr + g_sd))
          + _rate_term(a_bar, b_bar * k_bar * g_sr))
    coherent = 2.0 * np.sqrt(np.asarray(beta) * k_bar * g_sd * g_rd)
    c2 = (_rate_term(a_bar, k_bar * g_sd + g_rd + coherent)
          + _rate_term(alpha, kappa * g_sd))
    return c1, c2


def hd_capacity_value(params: HdCapacityParams, g_sr, g_sd, g_rd):
    c1, c2 = hd_capacity_terms(params.alpha, params.beta, params.kappa,
                               g_sr, g_sd, g_rd)
    return np.minimum(c1, c2)


def _min_rate(alpha, beta, kappa, g_sr, g_sd, g_rd):
    c1, c2 = hd_capacity_terms(alpha, beta, kappa, g_sr, g_sd, g_rd)
    return np.minimum(c1, c2)


def _grid_search(g_sr, g_sd, g_rd, variant, n_grid):
    grid = np.linspace(0.0, 1.0, n_grid)
    n = len(g_sd)
    best_v = np.full(n, -np.inf)
    best_a = np.zeros(n)
    best_b = np.zeros(n)
    best_k = np.zeros(n)
    for a in grid:
        if variant == "full":
            bb, kk = np.meshgrid(grid, grid, indexing="ij")
            bb = bb.reshape(-1, 1)
            kk = kk.reshape(-1, 1)
        elif variant == "fixed_power":
            bb = grid.reshape(-1, 1)
            kk = np.full_like(bb, a)
        elif variant == "orthogonal":
            kk = grid.reshape(-1, 1)
            bb = np.zeros_like(kk)
        else:
            raise DomainError(f"unknown variant {variant!r}")
        vals = _min_rate(a, bb, kk, g_sr[None, :], g_sd[None, :], g_rd[None, :])
        rows = np.argmax(vals, axis=0)
        v = vals[rows, np.arange(n)]
        better = v > best_v
        best_v = np.where(better, v, best_v)
        best_a = np.where(better, a, best_a)
        best_b = np.where(better, bb[rows, 0], best_b)
        best_k = np.where(better, kk[rows, 0], best_k)
    return best_v, best_a, best_b, best_k


def _golden_coord(evalfn, center, half, iters):
    """Vectorized golden-section maximization on [center-half, center+half] in [0, 1]."""
    a = np.clip(center - half, 0.0, 1.0)
    b = np.clip(center + half, 0.0, 1.0)
    for _ in range(iters):
        c = b - _INVPHI * (b - a)
        d = a + _INVPHI * (b - a)
        take_right = evalfn(d) > evalfn(c)
        a = np.where(take_right, c, a)
        b = np.where(take_right, b, d)
    x = 0.5 * (a + b)
    return x, evalfn(x)


def _refine(g_sr, g_sd, g_rd, variant, best_v, a, b, k, half, iters, sweeps):
    for _ in range(sweeps):
        if variant in ("full", "fixed_power"):
            def fa(x):
                kk = x if variant == "fixed_power" else k
                return _min_rate(x, b, kk, g_sr, g_sd, g_rd)

            xa, va = _golden_coord(fa, a, half, iters)
            better = va > best_v
            a = np.where(better, xa, a)
            if variant == "fixed_power":
                k = np.where(better, xa, k)
            best_v = np.where(better, va, best_v)
        if variant in ("full", "fixed_power"):
            xb, vb = _golden_coord(lambda x: _min_rate(a, x, k, g_sr, g_sd, g_rd),
                                   b, half, iters)
            better = vb > best_v
            b = np.where(better, xb, b)
            best_v = np.where(better, vb, best_v)
        if variant in ("full", "orthogonal"):
            xk, vk = _golden_coord(lambda x: _min_rate(a, b, x, g_sr, g_sd, g_rd),
                                   k, half, iters)
            better = vk > best_v
            k = np.where(better, xk, k)
            best_v = np.where(better, vk, best_v)
        if variant == "orthogonal":
            xa, va = _golden_coord(lambda x: _min_rate(x, b, k, g_sr, g_sd, g_rd),
                                   a, half, iters)
            better = va > best_v
            a = np.where(better, xa, a)
            best_v = np.where(better, va, best_v)
        half *= 0.5
    return best_v, a, b, k


def optimize_hd_draws(g_sr, g_sd, g_rd, variant="full", n_grid=21,
                      refine_iters=25, refine_sweeps=2):
    """Per-draw maximized min-rate for one variant of the time-division scheme.

    The full variant's feasible set contains both restricted variants, so its
    search is additionally seeded with their solutions; set inclusion then
    holds draw by draw.
    """
    g_sr = np.asarray(g_sr, dtype=float)
    g_sd = np.asarray(g_sd, dtype=float)
    g_rd = np.asarray(g_rd, dtype=float)
    if variant not in VARIANTS:
        raise DomainError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    half = 1.0 / (n_grid - 1)
    best_v, a, b, k = _grid_search(g_sr, g_sd, g_rd, variant, n_grid)
    best_v, a, b, k = _refine(g_sr, g_sd, g_rd, variant, best_v, a, b, k,
                              half, refine_iters, refine_sweeps)
    if variant == "full":
        for sub in ("fixed_power", "orthogonal"):
            sub_v, sa, sb, sk = _grid_search(g_sr, g_sd, g_rd, sub, n_grid)
            sub_v, sa, sb, sk = _refine(g_sr, g_sd, g_rd, sub, sub_v, sa, sb, sk,
                                        half, refine_iters, refine_sweeps)
            better = sub_v > best_v
            best_v = np.where(better, sub_v, best_v)
            a = np.where(better, sa, a)
            b = np.where(better, sb, b)
            k = np.where(better, sk, k)
        # one polishing sweep in the full set from the merged seeds
        best_v, a, b, k = _refine(g_sr, g_sd, g_rd, "full", best_v, a, b, k,
                                  half, refine_iters, 1)
    return best_v


@dataclass(frozen=True)
class HdCapacityResult:
    variant: str
    value: float
    std_err: float
    n_samples: int


def hd_ergodic_capacity(topo: RelayTopology, variant="full", n_samples=4000,
                        seed=0, n_grid=21) -> HdCapacityResult:
    """Ergodic mean of the per-draw optimized time-division min-rate."""
    if n_samples < 2:
        raise DomainError("n_samples must be at least 2")
    g_sr = derived_rng(seed, TAG_HD_BOUND, LINK_SR).exponential(topo.mean_snr_sr, n_samples)
    g_sd = derived_rng(seed, TAG_HD_BOUND, LINK_SD).exponential(topo.mean_snr_sd, n_samples)
    g_rd = derived_rng(seed, TAG_HD_BOUND, LINK_RD).exponential(topo.mean_snr_rd, n_samples)
    values = optimize_hd_draws(g_sr, g_sd, g_rd, variant=variant, n_grid=n_grid)
    return HdCapacityResult(variant=variant, value=float(values.mean()),
                            std_err=float(values.std(ddof=1) / np.sqrt(n_samples)),
                            n_samples=int(n_samples))
