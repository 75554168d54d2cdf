"""Closed-form Gaussian approximations of the decoding-failure probabilities.

The accumulated mutual information after several rounds is treated as normal,
so a failure probability collapses to a Q-function of the accumulated
redundancy state: the 2-D state keeps (sum rho, sum rho^2), the 1-D
simplification keeps only the sum and replaces sqrt(Y) by X. A single
transmitted round is special-cased with the exact Rayleigh cdf.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .channel import LinkMoments, capacity_cdf
from .errors import ContractError, DomainError

SQRT2 = float(np.sqrt(2.0))

STD_SUM = "std_sum"
VAR_SUM = "var_sum"


def q_function(x):
    """Upper-tail probability of the standard normal distribution."""
    arr = np.asarray(x, dtype=float)
    out = 0.5 * erfc(arr / SQRT2)
    return float(out) if arr.ndim == 0 else out


@dataclass(frozen=True)
class AccumState2D:
    """Accumulated redundancy state: x = sum rho, y = sum rho^2."""

    x: float
    y: float

    def __post_init__(self):
        if self.x < 0.0 or self.y < 0.0:
            raise DomainError("accumulated state components must be nonnegative")
        if self.y > self.x * self.x * (1.0 + 1e-12) + 1e-15:
            raise DomainError("y cannot exceed x^2 for nonnegative redundancies")


@dataclass(frozen=True)
class AccumState1D:
    """Accumulated redundancy sum only."""

    x: float

    def __post_init__(self):
        if self.x < 0.0:
            raise DomainError("accumulated state must be nonnegative")


def _ratio_q(num, den):
    """Q(num/den) with the zero-spread limits: no spread means a hard threshold."""
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        arg = num / den
    out = np.where(den > 0.0, q_function(np.where(den > 0.0, arg, 0.0)),
                   np.where(num < 0.0, 1.0, np.where(num > 0.0, 0.0, 0.5)))
    return float(out) if out.ndim == 0 else out


def approx_p1_2d(state: AccumState2D, link: LinkMoments, first_round_rho=None):
    """Failure probability on one link under the 2-D state.

    Pass first_round_rho when exactly one round has been transmitted so far;
    that case uses the exact Rayleigh cdf instead of the normal tail.
    """
    if first_round_rho is not None:
        rho = float(first_round_rho)
        if rho < 0.0:
            raise DomainError("first-round redundancy must be nonnegative")
        if abs(state.x - rho) > 1e-9 * max(1.0, rho) or abs(state.y - rho * rho) > 1e-9 * max(1.0, rho * rho):
            raise ContractError("single-round state must equal (rho, rho^2)")
        return capacity_cdf(link.mean_snr, np.inf if rho == 0.0 else 1.0 / rho)
    return _ratio_q(link.c_mean * state.x - 1.0, link.c_std * np.sqrt(state.y))


def approx_p3_2d(src_state: AccumState2D, relay_state: AccumState2D,
                 sd: LinkMoments, rd: LinkMoments, combine=STD_SUM):
    """Failure probability after source rounds plus relay rounds, 2-D states.

    The default spread combiner adds the two standard deviations, matching the
    closed form this package targets; combine="var_sum" switches to the
    root-sum-of-variances alternative for sensitivity studies.
    """
    if src_state.x == 0.0 and src_state.y == 0.0 and relay_state.x == 0.0 and relay_state.y == 0.0:
        raise ContractError("both accumulations empty: probability undefined")
    num = sd.c_mean * src_state.x + rd.c_mean * relay_state.x - 1.0
    if combine == STD_SUM:
        den = sd.c_std * np.sqrt(src_state.y) + rd.c_std * np.sqrt(relay_state.y)
    elif combine == VAR_SUM:
        den = np.sqrt(sd.c_std**2 * src_state.y + rd.c_std**2 * relay_state.y)
    else:
        raise DomainError(f"unknown spread combiner {combine!r}")
    return _ratio_q(num, den)


def approx_p1_1d(state: AccumState1D, link: LinkMoments, first_round_rho=None):
    """1-D variant of approx_p1_2d: the spread term uses X itself."""
    if first_round_rho is not None:
        rho = float(first_round_rho)
        if rho < 0.0:
            raise DomainError("first-round redundancy must be nonnegative")
        if abs(state.x - rho) > 1e-9 * max(1.0, rho):
            raise ContractError("single-round state must equal rho")
        return capacity_cdf(link.mean_snr, np.inf if rho == 0.0 else 1.0 / rho)
    return _ratio_q(link.c_mean * state.x - 1.0, link.c_std * state.x)


def approx_p3_1d(x_src, x_relay, sd: LinkMoments, rd: LinkMoments):
    """1-D variant of approx_p3_2d."""
    x_src = float(x_src)
    x_relay = float(x_relay)
    if x_src < 0.0 or x_relay < 0.0:
        raise DomainError("accumulated sums must be nonnegative")
    if x_src == 0.0 and x_relay == 0.0:
        raise ContractError("both accumulations empty: probability undefined")
    num = sd.c_mean * x_src + rd.c_mean * x_relay - 1.0
    den = sd.c_std * x_src + rd.c_std * x_relay
    return _ratio_q(num, den)


# ---------------------------------------------------------------------------
# Vectorized internals used by the dynamic programs. Empty accumulations mean
# zero information, hence certain failure; round counts key the single-round
# exact-cdf branch.
# ---------------------------------------------------------------------------


def src_fail(x, y, link: LinkMoments, rounds):
    """Failure probability from source-only accumulation (x, y) after `rounds` rounds."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if rounds == 0:
        out = np.ones_like(x)
        return float(out) if out.ndim == 0 else out
    if rounds == 1:
        with np.errstate(divide="ignore"):
            thr = np.where(x > 0.0, 1.0 / np.where(x > 0.0, x, 1.0), np.inf)
        out = capacity_cdf(link.mean_snr, thr)
        return out
    return _ratio_q(link.c_mean * x - 1.0, link.c_std * np.sqrt(y))


def mixed_fail(x_src, y_src, x_rel, y_rel, sd: LinkMoments, rd: LinkMoments):
    """Q-form failure probability mixing source and relay accumulations (2-D)."""
    num = sd.c_mean * np.asarray(x_src, float) + rd.c_mean * np.asarray(x_rel, float) - 1.0
    den = sd.c_std * np.sqrt(np.asarray(y_src, float)) + rd.c_std * np.sqrt(np.asarray(y_rel, float))
    return _ratio_q(num, den)


def src_fail_1d(x, link: LinkMoments, rounds):
    """1-D counterpart of src_fail."""
    x = np.asarray(x, dtype=float)
    if rounds == 0:
        out = np.ones_like(x)
        return float(out) if out.ndim == 0 else out
    if rounds == 1:
        with np.errstate(divide="ignore"):
            thr = np.where(x > 0.0, 1.0 / np.where(x > 0.0, x, 1.0), np.inf)
        return capacity_cdf(link.mean_snr, thr)
    return _ratio_q(link.c_mean * x - 1.0, link.c_std * x)


def mixed_fail_1d(x_src, x_rel, sd: LinkMoments, rd: LinkMoments):
    """1-D counterpart of mixed_fail."""
    num = sd.c_mean * np.asarray(x_src, float) + rd.c_mean * np.asarray(x_rel, float) - 1.0
    den = sd.c_std * np.asarray(x_src, float) + rd.c_std * np.asarray(x_rel, float)
    return _ratio_q(num, den)
