"""Rayleigh block-fading links: topology, mutual information, and link moments.

SNR is handled in linear units everywhere inside the package; dB conversion
belongs to the CLI/service boundary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import DomainError, NumericsError
from .sampling import derived_rng

LN2 = float(np.log(2.0))


def db_to_linear(snr_db):
    return float(10.0 ** (snr_db / 10.0))


def linear_to_db(snr):
    if snr <= 0.0:
        raise DomainError("SNR must be positive for a dB conversion")
    return float(10.0 * np.log10(snr))


def mutual_info(snr):
    """Per-channel-use mutual information of a Gaussian-input link, log2(1 + snr)."""
    arr = np.asarray(snr, dtype=float)
    if np.any(arr < 0.0):
        raise DomainError("SNR must be nonnegative")
    out = np.log1p(arr) / LN2
    return float(out) if arr.ndim == 0 else out


def capacity_cdf(mean_snr, c):
    """Pr{C < c} on a Rayleigh link with the given mean SNR: 1 - exp(-(2^c - 1)/mean_snr)."""
    if mean_snr <= 0.0:
        raise DomainError("mean_snr must be positive")
    carr = np.asarray(c, dtype=float)
    if np.any(carr < 0.0):
        raise DomainError("capacity threshold must be nonnegative")
    with np.errstate(over="ignore"):
        out = -np.expm1(-(np.exp2(carr) - 1.0) / mean_snr)
    return float(out) if carr.ndim == 0 else out


@dataclass(frozen=True)
class LinkMoments:
    """Mean and standard deviation of C = log2(1 + snr) on one Rayleigh link."""

    mean_snr: float
    c_mean: float
    c_std: float

    def cdf(self, c):
        return capacity_cdf(self.mean_snr, c)


def _moment_quadrature(mean_snr, power):
    # Integrate C(g)^power against the exponential SNR density. The SNR is
    # first normalized by its mean (t = g/mean) and then mapped to the finite
    # domain via u = t/(1+t); the normalization keeps the integrand shape
    # independent of the mean, so the quadrature stays well conditioned from
    # deep fades to very strong links.
    def integrand(u):
        t = u / (1.0 - u)
        c = np.log1p(mean_snr * t) / LN2
        weight = np.exp(-t) / (1.0 - u) ** 2
        return (c**power) * weight

    result = integrate.quad(integrand, 0.0, 1.0, epsabs=1e-10, epsrel=1e-10,
                            limit=200, full_output=True)
    if len(result) > 3:
        value, abserr = result[0], result[1]
        raise NumericsError(
            f"link-moment quadrature did not converge (power={power}, "
            f"mean_snr={mean_snr}, value={value}, abserr={abserr}): {result[3]}"
        )
    return result[0]


def link_moments(mean_snr) -> LinkMoments:
    """First two moments of the per-use mutual information, by adaptive quadrature."""
    if mean_snr <= 0.0:
        raise DomainError("mean_snr must be positive")
    m1 = _moment_quadrature(mean_snr, 1)
    m2 = _moment_quadrature(mean_snr, 2)
    var = max(m2 - m1 * m1, 0.0)
    return LinkMoments(mean_snr=float(mean_snr), c_mean=float(m1), c_std=float(np.sqrt(var)))


def link_moments_of(link) -> LinkMoments:
    """Moments for any fading law exposing pdf(snr) and a mean_snr scale.

    Lets non-Rayleigh links plug into the same machinery; the built-in
    Rayleigh path keeps its closed-form-validated fast route.
    """
    scale = float(getattr(link, "mean_snr", 1.0))
    if scale <= 0.0:
        raise DomainError("link must expose a positive mean_snr scale")

    def moment(power):
        def integrand(u):
            t = u / (1.0 - u)
            g = scale * t
            c = np.log1p(g) / LN2
            weight = link.pdf(g) * scale / (1.0 - u) ** 2
            return (c**power) * weight

        result = integrate.quad(integrand, 0.0, 1.0, epsabs=1e-10, epsrel=1e-10,
                                limit=200, full_output=True)
        if len(result) > 3:
            raise NumericsError(f"moment quadrature failed for {link!r}: {result[3]}")
        return result[0]

    m1 = moment(1)
    var = max(moment(2) - m1 * m1, 0.0)
    return LinkMoments(mean_snr=scale, c_mean=float(m1), c_std=float(np.sqrt(var)))


@dataclass(frozen=True)
class RelayTopology:
    """Line topology: source-destination mean SNR, relay position d, path-loss exponent nu.

    The relay sits on the unit-length source-destination segment, so the
    derived gains are mean_snr_sd / d^nu towards the relay and
    mean_snr_sd / (1-d)^nu from the relay onward.
    """

    mean_snr_sd: float
    d: float = 0.5
    nu: float = 4.0

    def __post_init__(self):
        if self.mean_snr_sd <= 0.0:
            raise DomainError("mean_snr_sd must be positive")
        if not 0.0 < self.d < 1.0:
            raise DomainError("relay position d must lie strictly inside (0, 1)")
        if self.nu <= 0.0:
            raise DomainError("path-loss exponent nu must be positive")

    @property
    def mean_snr_sr(self) -> float:
        return self.mean_snr_sd / self.d**self.nu

    @property
    def mean_snr_rd(self) -> float:
        return self.mean_snr_sd / (1.0 - self.d) ** self.nu

    @property
    def snr_db(self) -> float:
        return linear_to_db(self.mean_snr_sd)

    @classmethod
    def from_db(cls, snr_db, d=0.5, nu=4.0) -> "RelayTopology":
        return cls(mean_snr_sd=db_to_linear(snr_db), d=d, nu=nu)


def derive_topology(topo: RelayTopology):
    """The three mean link gains (SD, SR, RD) implied by the line topology."""
    return topo.mean_snr_sd, topo.mean_snr_sr, topo.mean_snr_rd


@dataclass(frozen=True)
class TopologyMoments:
    """Link moments for all three links of a relay topology."""

    sd: LinkMoments
    sr: LinkMoments
    rd: LinkMoments

    @classmethod
    def from_topology(cls, topo: RelayTopology) -> "TopologyMoments":
        return cls(
            sd=link_moments(topo.mean_snr_sd),
            sr=link_moments(topo.mean_snr_sr),
            rd=link_moments(topo.mean_snr_rd),
        )


class RayleighLink:
    """Rayleigh fading law for one link, exposing pdf/cdf/sampler.

    Other fading laws can be plugged in anywhere a link object is accepted by
    providing the same three members.
    """

    def __init__(self, mean_snr):
        if mean_snr <= 0.0:
            raise DomainError("mean_snr must be positive")
        self.mean_snr = float(mean_snr)

    def pdf(self, snr):
        arr = np.asarray(snr, dtype=float)
        out = np.where(arr < 0.0, 0.0, np.exp(-arr / self.mean_snr) / self.mean_snr)
        return float(out) if arr.ndim == 0 else out

    def cdf(self, snr):
        arr = np.asarray(snr, dtype=float)
        out = np.where(arr < 0.0, 0.0, -np.expm1(-arr / self.mean_snr))
        return float(out) if arr.ndim == 0 else out

    def sampler(self, seed) -> "SnrSampler":
        return SnrSampler(self.mean_snr, seed)


class SnrSampler:
    """Seeded i.i.d. exponential SNR stream; identical seeds give identical streams."""

    def __init__(self, mean_snr, seed):
        if mean_snr <= 0.0:
            raise DomainError("mean_snr must be positive")
        self.mean_snr = float(mean_snr)
        self.seed = int(seed)
        self._rng = derived_rng(self.seed)

    def draw(self, n):
        return self._rng.exponential(self.mean_snr, size=n)
