"""Pydantic request/response models for the service."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict

from ..channel import RelayTopology
from ..policy import RatePolicy


class Topology(BaseModel):
    """Relay topology; SNR enters in dB at this boundary."""

    model_config = ConfigDict(extra="forbid")

    snr_db: float
    d: float = 0.5
    nu: float = 4.0

    def to_core(self) -> RelayTopology:
        return RelayTopology.from_db(self.snr_db, d=self.d, nu=self.nu)


class Policy(BaseModel):
    model_config = ConfigDict(extra="forbid")

    k_max: int
    rho_s: list[float]
    rho_r: list[list[float]] = []

    def to_core(self) -> RatePolicy:
        return RatePolicy(k_max=self.k_max, rho_s=tuple(self.rho_s),
                          rho_r=tuple(tuple(r) for r in self.rho_r))

    @classmethod
    def from_core(cls, policy: RatePolicy) -> "Policy":
        return cls(k_max=policy.k_max, rho_s=list(policy.rho_s),
                   rho_r=[list(r) for r in policy.rho_r])


class SolverSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    rho_step: float = 0.05
    rho_max: float = 4.0
    lambda_tol: float = 1e-3


class EvaluateRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    policy: Policy
    topology: Topology
    n_samples: int = 10**6
    seed: int = 0


class EvaluateResponse(BaseModel):
    policy_hash: str
    eta: float
    eta_se: float
    p_out: float
    p_out_se: float
    d_norm: float
    d_norm_se: float
    n_samples: int
    event_probs: dict[str, float]
    csv_header: str
    csv_row: str


class SimulateRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    policy: Policy
    topology: Topology
    n_episodes: int = 10**6
    seed: int = 0
    trace_limit: int = 0


class SimulateResponse(BaseModel):
    eta: float
    eta_se: float
    p_out: float
    p_out_se: float
    mean_channel_uses: float
    n_episodes: int
    n_delivered: int
    event_freqs: dict[str, float]
    traces_csv: Optional[str] = None


class OptimizeRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    topology: Topology
    k_max: int
    solver: SolverSettings = SolverSettings()
    n_samples: int = 10**6
    opt_samples: int = 10**5
    seed: int = 0


class PolicyArtifact(BaseModel):
    method: str
    lambda_th: float
    policy: Policy
    policy_text: str
    policy_file: str
    eta: float
    eta_se: float
    p_out: float
    d_norm: float


class OptimizeResponse(BaseModel):
    artifacts: list[PolicyArtifact]
    summary_csv: str


class BoundsRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    snr_db_list: list[float]
    d: float = 0.5
    nu: float = 4.0
    hd_samples: int = 4000
    seed: int = 0


class BoundRow(BaseModel):
    snr_db: float
    variant: str
    value: float
    std_err: float


class BoundsResponse(BaseModel):
    rows: list[BoundRow]
    csv: str


class SweepSnrRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    snr_db_list: list[float]
    d: float = 0.5
    nu: float = 4.0
    k_list: list[int] = [2, 4]
    solver: SolverSettings = SolverSettings()
    n_samples: int = 10**6
    opt_samples: int = 10**5
    hd_samples: int = 4000
    seed: int = 0


class SweepSnrRow(BaseModel):
    snr_db: float
    method: str
    k_max: Optional[int] = None
    eta: float
    eta_se: float
    p_out: Optional[float] = None


class SweepSnrResponse(BaseModel):
    rows: list[SweepSnrRow]
    csv: str


class SweepDistanceRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    d_list: list[float]
    snr_db: float = 15.0
    nu: float = 4.0
    k_list: list[int] = [2, 4]
    solver: SolverSettings = SolverSettings()
    n_samples: int = 10**6
    opt_samples: int = 10**5
    seed: int = 0


class SweepDistanceRow(BaseModel):
    d: float
    method: str
    k_max: int
    eta: float
    eta_se: float


class SweepDistanceResponse(BaseModel):
    rows: list[SweepDistanceRow]
    csv: str


class RestartStudyRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    topology: Topology
    k_max: int = 2
    n_starts: int = 50
    solver: SolverSettings = SolverSettings()
    opt_samples: int = 10**5
    seed: int = 0


class RestartStudyResponse(BaseModel):
    etas: list[float]
    converged: list[bool]
    eta_dp_seed: float
    eta_refined: float
    fraction_reaching_dp: float
    hist_counts: list[int]
    hist_edges: list[float]
    csv: str


class ValidateRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    profile: Literal["quick", "full"] = "quick"
    se_band: float = 3.0


class CheckOutcome(BaseModel):
    criterion: int
    name: str
    passed: bool
    detail: str
    runtime_s: float


class ValidateResponse(BaseModel):
    passed: bool
    checks: list[CheckOutcome]


class ErrorBody(BaseModel):
    error: str
    kind: str
