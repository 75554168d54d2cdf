"""Redundancy sets for truncated variable-rate incremental-redundancy HARQ.

A policy holds one source redundancy per round plus, for every possible
relay-decode round l, the redundancies the relay would use for the remaining
rounds; K(K+1)/2 entries in total for K rounds.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, PolicyParseError

# Entries below the default optimizer action step are indistinguishable from
# zero for the discretized solvers, so this is the degeneracy threshold.
DEFAULT_RHO_MIN = 0.05

_FORMAT_HEADER = "# rate-policy v1"


@dataclass(frozen=True)
class RatePolicy:
    """Immutable redundancy set {rho_s[k], rho_r[l][k]} in channel uses per info bit."""

    k_max: int
    rho_s: tuple = ()
    rho_r: tuple = ()

    def __post_init__(self):
        if self.k_max < 1:
            raise DomainError("k_max must be at least 1")
        rho_s = tuple(float(v) for v in self.rho_s)
        rho_r = tuple(tuple(float(v) for v in row) for row in self.rho_r)
        if len(rho_s) != self.k_max:
            raise DomainError(f"expected {self.k_max} source entries, got {len(rho_s)}")
        if len(rho_r) != self.k_max - 1:
            raise DomainError(f"expected {self.k_max - 1} relay rows, got {len(rho_r)}")
        for l, row in enumerate(rho_r, start=1):
            if len(row) != self.k_max - l:
                raise DomainError(
                    f"relay row l={l} must have {self.k_max - l} entries, got {len(row)}"
                )
        object.__setattr__(self, "rho_s", rho_s)
        object.__setattr__(self, "rho_r", rho_r)

    @property
    def n_entries(self) -> int:
        return self.k_max * (self.k_max + 1) // 2

    def rho_relay(self, l, k) -> float:
        """Relay redundancy for round k after a relay decode at round l."""
        if not 1 <= l < k <= self.k_max:
            raise DomainError(f"relay entry (l={l}, k={k}) outside 1 <= l < k <= K")
        return self.rho_r[l - 1][k - l - 1]

    def is_degenerate(self, rho_min=DEFAULT_RHO_MIN) -> bool:
        return all(v < rho_min for v in self.rho_s)

    def as_vector(self) -> np.ndarray:
        flat = list(self.rho_s)
        for row in self.rho_r:
            flat.extend(row)
        return np.asarray(flat, dtype=float)

    @classmethod
    def from_vector(cls, k_max, vec) -> "RatePolicy":
        vec = [float(v) for v in vec]
        want = k_max * (k_max + 1) // 2
        if len(vec) != want:
            raise DomainError(f"expected {want} entries for K={k_max}, got {len(vec)}")
        rho_s = vec[:k_max]
        rows = []
        pos = k_max
        for l in range(1, k_max):
            rows.append(tuple(vec[pos:pos + k_max - l]))
            pos += k_max - l
        return cls(k_max=k_max, rho_s=tuple(rho_s), rho_r=tuple(rows))

    def to_text(self) -> str:
        lines = [_FORMAT_HEADER, f"k_max {self.k_max}"]
        for k, v in enumerate(self.rho_s, start=1):
            lines.append(f"S 0 {k} {v!r}")
        for l, row in enumerate(self.rho_r, start=1):
            for j, v in enumerate(row):
                lines.append(f"R {l} {l + 1 + j} {v!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text) -> "RatePolicy":
        return parse_policy_text(text)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_text())

    @classmethod
    def load(cls, path) -> "RatePolicy":
        with open(path, "r", encoding="utf-8") as fh:
            return parse_policy_text(fh.read())

    def policy_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()[:12]


@dataclass(frozen=True)
class PolicyCheck:
    """Result of validate(): ok means no invariant violations; degeneracy is advisory."""

    ok: bool
    n_entries: int
    degenerate: bool
    violations: tuple = field(default=())


def validate(policy: RatePolicy, rho_min=DEFAULT_RHO_MIN) -> PolicyCheck:
    """Report every invariant violation; never raises."""
    violations = []
    for k, v in enumerate(policy.rho_s, start=1):
        if not np.isfinite(v):
            violations.append(f"non-finite redundancy at source round {k}")
        elif v < 0.0:
            violations.append(f"negative redundancy at source round {k}")
    for l, row in enumerate(policy.rho_r, start=1):
        for j, v in enumerate(row):
            k = l + 1 + j
            if not np.isfinite(v):
                violations.append(f"non-finite redundancy at relay entry (l={l}, k={k})")
            elif v < 0.0:
                violations.append(f"negative redundancy at relay entry (l={l}, k={k})")
    return PolicyCheck(
        ok=not violations,
        n_entries=policy.n_entries,
        degenerate=policy.is_degenerate(rho_min),
        violations=tuple(violations),
    )


def ensure_valid(policy: RatePolicy) -> None:
    check = validate(policy)
    if not check.ok:
        raise DomainError("invalid policy: " + "; ".join(check.violations))


def from_fixed_rate(rho, k_max) -> RatePolicy:
    """Policy with every source and relay entry equal to rho."""
    if rho <= 0.0:
        raise DomainError("fixed redundancy must be positive")
    rho = float(rho)
    rows = tuple(tuple([rho] * (k_max - l)) for l in range(1, k_max))
    return RatePolicy(k_max=k_max, rho_s=tuple([rho] * k_max), rho_r=rows)


def random_policy(k_max, rho_max, rng, rho_min=0.0) -> RatePolicy:
    """Uniform random entries in [rho_min, rho_max]; used by studies and tests."""
    n = k_max * (k_max + 1) // 2
    vec = rng.uniform(rho_min, rho_max, size=n)
    return RatePolicy.from_vector(k_max, vec)


def parse_policy_text(text) -> RatePolicy:
    k_max = None
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if fields[0] == "k_max":
            if len(fields) != 2:
                raise PolicyParseError(f"line {lineno}: malformed k_max record {raw!r}")
            try:
                k_max = int(fields[1])
            except ValueError:
                raise PolicyParseError(f"line {lineno}: k_max is not an integer in {raw!r}")
            continue
        if len(fields) != 4:
            raise PolicyParseError(
                f"line {lineno}: expected 'phase l k value', got {raw!r}"
            )
        phase, l_s, k_s, v_s = fields
        if phase not in ("S", "R"):
            raise PolicyParseError(f"line {lineno}: unknown phase {phase!r} in {raw!r}")
        try:
            l, k, v = int(l_s), int(k_s), float(v_s)
        except ValueError:
            raise PolicyParseError(f"line {lineno}: malformed record {raw!r}")
        key = (phase, l, k)
        if key in entries:
            raise PolicyParseError(f"line {lineno}: duplicate record for {key} in {raw!r}")
        entries[key] = v
    if k_max is None:
        raise PolicyParseError("missing k_max record")
    if k_max < 1:
        raise PolicyParseError(f"k_max must be at least 1, got {k_max}")
    rho_s = []
    for k in range(1, k_max + 1):
        key = ("S", 0, k)
        if key not in entries:
            raise PolicyParseError(f"missing record for source round k={k}")
        rho_s.append(entries.pop(key))
    rows = []
    for l in range(1, k_max):
        row = []
        for k in range(l + 1, k_max + 1):
            key = ("R", l, k)
            if key not in entries:
                raise PolicyParseError(f"missing record for relay entry (l={l}, k={k})")
            row.append(entries.pop(key))
        rows.append(tuple(row))
    if entries:
        stray = ", ".join(str(k) for k in sorted(entries))
        raise PolicyParseError(f"records outside the K={k_max} policy: {stray}")
    return RatePolicy(k_max=k_max, rho_s=tuple(rho_s), rho_r=tuple(rows))
