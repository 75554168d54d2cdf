"""Experiment orchestration: sweep configs, per-point optimization pipelines,
and plot-ready CSV emission.

Configs are plain key=value text (comma-separated lists); CLI flags override
file values. Every run is deterministic given the config, including the seed,
so reruns produce byte-identical outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import bounds, dp, exact, sim
from .channel import RelayTopology, TopologyMoments
from .errors import ConfigError
from .exact import FrozenSampleSet
from .policy import RatePolicy, from_fixed_rate
from .sampling import TAG_REFINE

# Emitted CSV schemas are versioned as a set: any column change bumps this.
SCHEMA_VERSION = "v1"

OPTIMIZE_SUMMARY_HEADER = ("snr_db,d,nu,k_max,method,lambda_th,policy_file,"
                           "policy_hash,eta,eta_se,p_out,d_norm,n_samples")
SWEEP_SNR_HEADER = "snr_db,method,k_max,eta,p_out"
SWEEP_DISTANCE_HEADER = "d,method,k_max,eta"
BOUNDS_HEADER = "snr_db,variant,value,std_err"
RESTART_HEADER = "start,eta,converged"


def _fmt(x) -> str:
    return repr(float(x))


@dataclass(frozen=True)
class ExperimentConfig:
    """Sweep definition plus solver and sampling knobs."""

    snr_db_list: tuple = (0.0, 5.0, 10.0, 15.0, 20.0)
    d_list: tuple = (0.5,)
    nu: float = 4.0
    k_list: tuple = (2, 4)
    rho_step: float = 0.05
    rho_max: float = 4.0
    n_samples: int = 10**6
    opt_samples: int = 10**5
    hd_samples: int = 4000
    seed: int = 0
    lambda_tol: float = 1e-3
    out_dir: str = "."

    def check(self) -> None:
        if not self.snr_db_list:
            raise ConfigError("snr_db list must not be empty")
        if not self.d_list:
            raise ConfigError("d list must not be empty")
        if not self.k_list:
            raise ConfigError("k list must not be empty")
        # endpoints are tolerated in configs (distance sweeps drop them); the
        # topology itself rejects them wherever a point is actually solved
        if any(not 0.0 <= d <= 1.0 for d in self.d_list):
            raise ConfigError("relay positions must lie inside [0, 1]")
        if any(k < 1 for k in self.k_list):
            raise ConfigError("k values must be at least 1")
        if self.nu <= 0.0:
            raise ConfigError("nu must be positive")
        if self.rho_step <= 0.0 or self.rho_max < self.rho_step:
            raise ConfigError("need 0 < rho_step <= rho_max")
        if self.n_samples < exact.MIN_N_SAMPLES or self.opt_samples < exact.MIN_N_SAMPLES:
            raise ConfigError(f"sample counts must be at least {exact.MIN_N_SAMPLES}")
        if self.hd_samples < 2:
            raise ConfigError("hd_samples must be at least 2")
        if self.lambda_tol <= 0.0:
            raise ConfigError("lambda_tol must be positive")

    def grid(self, k_max) -> dp.DpGrid:
        return dp.DpGrid.build(k_max, rho_max=self.rho_max, rho_step=self.rho_step)

    def topology(self, snr_db, d) -> RelayTopology:
        return RelayTopology.from_db(snr_db, d=d, nu=self.nu)


_LIST_FLOAT_KEYS = {"snr_db": "snr_db_list", "d": "d_list"}
_LIST_INT_KEYS = {"k": "k_list"}
_FLOAT_KEYS = {"nu", "rho_step", "rho_max", "lambda_tol"}
_INT_KEYS = {"n_samples", "opt_samples", "hd_samples", "seed"}
_STR_KEYS = {"out_dir"}


def parse_config_text(text) -> dict:
    """Parse the key=value config format into override fields."""
    fields = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        try:
            if key in _LIST_FLOAT_KEYS:
                fields[_LIST_FLOAT_KEYS[key]] = tuple(float(v) for v in value.split(","))
            elif key in _LIST_INT_KEYS:
                fields[_LIST_INT_KEYS[key]] = tuple(int(v) for v in value.split(","))
            elif key in _FLOAT_KEYS:
                fields[key] = float(value)
            elif key in _INT_KEYS:
                fields[key] = int(value)
            elif key in _STR_KEYS:
                fields[key] = value
            else:
                raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        except ConfigError:
            raise
        except ValueError:
            raise ConfigError(f"line {lineno}: malformed value for {key!r}: {value!r}")
    return fields


def build_config(file_text=None, overrides=None) -> ExperimentConfig:
    fields = parse_config_text(file_text) if file_text else {}
    if overrides:
        fields.update(overrides)
    cfg = replace(ExperimentConfig(), **fields)
    cfg.check()
    return cfg


# ---------------------------------------------------------------------------
# Single-point optimization pipeline
# ---------------------------------------------------------------------------


@dataclass
class OptimizedPoint:
    snr_db: float
    d: float
    nu: float
    k_max: int
    lambda_2d: float
    lambda_1d: float
    policies: dict
    reports: dict
    frozen_eta_start: float
    frozen_eta_refined: float


def optimize_point(cfg: ExperimentConfig, snr_db, d, k_max,
                   methods=("dp2d", "dp1d", "refined")) -> OptimizedPoint:
    """Solve one (snr, d, K) point: 2-D and 1-D duals, then exact refinement."""
    topo = cfg.topology(snr_db, d)
    moments = TopologyMoments.from_topology(topo)
    grid = cfg.grid(k_max)
    res2 = dp.bisect_lambda("2d", grid, moments, k_max, tol=cfg.lambda_tol)
    policies = {"dp2d": res2.policy}
    lambda_1d = float("nan")
    if "dp1d" in methods:
        res1 = dp.bisect_lambda("1d", grid, moments, k_max, tol=cfg.lambda_tol)
        policies["dp1d"] = res1.policy
        lambda_1d = res1.lambda_th
    eta_start = eta_refined = float("nan")
    if "refined" in methods:
        ref = dp.refine_policy(res2.policy, topo, n_samples=cfg.opt_samples,
                               seed=cfg.seed)
        policies["refined"] = ref.policy
        eta_start, eta_refined = ref.eta_start, ref.eta_refined
    reports = {name: exact.throughput(pol, topo, n_samples=cfg.n_samples, seed=cfg.seed)
               for name, pol in policies.items()}
    return OptimizedPoint(snr_db=float(snr_db), d=float(d), nu=cfg.nu, k_max=k_max,
                          lambda_2d=res2.lambda_th, lambda_1d=lambda_1d,
                          policies=policies, reports=reports,
                          frozen_eta_start=eta_start, frozen_eta_refined=eta_refined)


def _policy_filename(method, snr_db, d, k_max) -> str:
    return f"policy_{method}_snr{snr_db:g}_d{d:g}_K{k_max}.txt"


@dataclass
class OptimizeOutput:
    points: list
    summary_csv: str
    policy_files: dict


def run_optimize(cfg: ExperimentConfig) -> OptimizeOutput:
    cfg.check()
    points = []
    rows = [OPTIMIZE_SUMMARY_HEADER]
    files = {}
    for snr_db in cfg.snr_db_list:
        for d in cfg.d_list:
            for k_max in cfg.k_list:
                pt = optimize_point(cfg, snr_db, d, k_max)
                points.append(pt)
                for method in ("dp2d", "dp1d", "refined"):
                    pol = pt.policies[method]
                    rep = pt.reports[method]
                    fname = _policy_filename(method, snr_db, d, k_max)
                    files[fname] = pol.to_text()
                    lam = {"dp2d": pt.lambda_2d, "dp1d": pt.lambda_1d,
                           "refined": pt.lambda_2d}[method]
                    rows.append(",".join([
                        _fmt(snr_db), _fmt(d), _fmt(cfg.nu), str(k_max), method,
                        _fmt(lam), fname, rep.policy_hash, _fmt(rep.eta),
                        _fmt(rep.eta_se), _fmt(rep.p_out), _fmt(rep.d_norm),
                        str(rep.n_samples),
                    ]))
    return OptimizeOutput(points=points, summary_csv="\n".join(rows) + "\n",
                          policy_files=files)


# ---------------------------------------------------------------------------
# Bounds and sweeps
# ---------------------------------------------------------------------------


def run_bounds(cfg: ExperimentConfig):
    """Direct-transmission bound and the time-division capacity variants."""
    cfg.check()
    rows = []
    for snr_db in cfg.snr_db_list:
        for d in cfg.d_list:
            topo = cfg.topology(snr_db, d)
            eta0, _ = bounds.direct_lower_bound(topo.mean_snr_sd)
            rows.append({"snr_db": snr_db, "variant": "eta0", "value": eta0,
                         "std_err": 0.0})
            for variant, label in (("full", "hd_full"),
                                   ("fixed_power", "hd_fixed_power"),
                                   ("orthogonal", "hd_orthogonal")):
                r = bounds.hd_ergodic_capacity(topo, variant,
                                               n_samples=cfg.hd_samples, seed=cfg.seed)
                rows.append({"snr_db": snr_db, "variant": label, "value": r.value,
                             "std_err": r.std_err})
    csv = "\n".join([BOUNDS_HEADER] + [
        ",".join([_fmt(r["snr_db"]), r["variant"], _fmt(r["value"]), _fmt(r["std_err"])])
        for r in rows]) + "\n"
    return rows, csv


def _sweep_row(snr_db, method, k_max, eta, p_out) -> str:
    return ",".join([
        _fmt(snr_db), method, "" if k_max is None else str(k_max),
        _fmt(eta), "" if p_out is None else _fmt(p_out),
    ])


def run_sweep_snr(cfg: ExperimentConfig):
    """Throughput vs SNR for the optimized variable-rate scheme, the fixed-rate
    baseline, the single-shot bound, and the capacity ceilings."""
    cfg.check()
    d = cfg.d_list[0]
    rows = []
    lines = [SWEEP_SNR_HEADER]
    for snr_db in cfg.snr_db_list:
        topo = cfg.topology(snr_db, d)
        for k_max in cfg.k_list:
            pt = optimize_point(cfg, snr_db, d, k_max, methods=("dp2d", "refined"))
            rep = pt.reports["refined"]
            rows.append({"snr_db": snr_db, "method": "vr", "k_max": k_max,
                         "eta": rep.eta, "eta_se": rep.eta_se, "p_out": rep.p_out})
            fr = bounds.fixed_rate_optimum(topo, k_max, n_samples=cfg.opt_samples,
                                           seed=cfg.seed, rho_step=cfg.rho_step,
                                           rho_max=cfg.rho_max)
            fr_rep = exact.throughput(from_fixed_rate(fr.rho_star, k_max), topo,
                                      n_samples=cfg.n_samples, seed=cfg.seed)
            rows.append({"snr_db": snr_db, "method": "fr", "k_max": k_max,
                         "eta": fr_rep.eta, "eta_se": fr_rep.eta_se,
                         "p_out": fr_rep.p_out})
        eta0, _ = bounds.direct_lower_bound(topo.mean_snr_sd)
        rows.append({"snr_db": snr_db, "method": "eta0", "k_max": 1, "eta": eta0,
                     "eta_se": 0.0, "p_out": None})
        hd = bounds.hd_ergodic_capacity(topo, "full", n_samples=cfg.hd_samples,
                                        seed=cfg.seed)
        rows.append({"snr_db": snr_db, "method": "hd_erg", "k_max": None,
                     "eta": hd.value, "eta_se": hd.std_err, "p_out": None})
        hd0 = bounds.hd_ergodic_capacity(topo, "orthogonal", n_samples=cfg.hd_samples,
                                         seed=cfg.seed)
        rows.append({"snr_db": snr_db, "method": "hd_erg_beta0", "k_max": None,
                     "eta": hd0.value, "eta_se": hd0.std_err, "p_out": None})
    for r in rows:
        lines.append(_sweep_row(r["snr_db"], r["method"], r["k_max"], r["eta"],
                                r["p_out"]))
    return rows, "\n".join(lines) + "\n"


def run_sweep_distance(cfg: ExperimentConfig):
    """Throughput vs relay position at the first configured SNR.

    The endpoints d = 0 and d = 1 are outside the topology domain and are
    dropped from the grid automatically.
    """
    cfg.check()
    snr_db = cfg.snr_db_list[0]
    d_values = [d for d in cfg.d_list if 0.0 < d < 1.0]
    if not d_values:
        raise ConfigError("distance grid contains no points strictly inside (0, 1)")
    rows = []
    lines = [SWEEP_DISTANCE_HEADER]
    for d in d_values:
        topo = cfg.topology(snr_db, d)
        for k_max in cfg.k_list:
            pt = optimize_point(cfg, snr_db, d, k_max, methods=("dp2d", "refined"))
            rep = pt.reports["refined"]
            rows.append({"d": d, "method": "vr", "k_max": k_max, "eta": rep.eta,
                         "eta_se": rep.eta_se})
            fr = bounds.fixed_rate_optimum(topo, k_max, n_samples=cfg.opt_samples,
                                           seed=cfg.seed, rho_step=cfg.rho_step,
                                           rho_max=cfg.rho_max)
            fr_rep = exact.throughput(from_fixed_rate(fr.rho_star, k_max), topo,
                                      n_samples=cfg.n_samples, seed=cfg.seed)
            rows.append({"d": d, "method": "fr", "k_max": k_max, "eta": fr_rep.eta,
                         "eta_se": fr_rep.eta_se})
    for r in rows:
        lines.append(",".join([_fmt(r["d"]), r["method"], str(r["k_max"]),
                               _fmt(r["eta"])]))
    return rows, "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Restart study
# ---------------------------------------------------------------------------


@dataclass
class RestartOutput:
    etas: np.ndarray
    converged: np.ndarray
    eta_dp: float
    eta_refined: float
    fraction_reaching_dp: float
    csv: str
    hist_counts: list = field(default_factory=list)
    hist_edges: list = field(default_factory=list)


def run_restart_study(cfg: ExperimentConfig, n_starts, k_max=None,
                      snr_db=None, d=None) -> RestartOutput:
    """Local search from random starts, compared against the solver seed."""
    cfg.check()
    snr_db = cfg.snr_db_list[0] if snr_db is None else snr_db
    d = cfg.d_list[0] if d is None else d
    k_max = cfg.k_list[0] if k_max is None else k_max
    topo = cfg.topology(snr_db, d)
    moments = TopologyMoments.from_topology(topo)
    grid = cfg.grid(k_max)
    res = dp.bisect_lambda("2d", grid, moments, k_max, tol=cfg.lambda_tol)
    frozen = FrozenSampleSet.draw(topo, k_max, cfg.opt_samples, cfg.seed, TAG_REFINE)
    eta_dp = frozen.eta(res.policy)
    ref = dp.refine_policy(res.policy, topo, seed=cfg.seed, frozen=frozen)
    study = dp.random_restart_study(n_starts, cfg.seed, topo, k_max,
                                    rho_max=cfg.rho_max, n_samples=cfg.opt_samples)
    frac = float((study.etas >= eta_dp).mean())
    lines = [RESTART_HEADER]
    for i, (eta, conv) in enumerate(zip(study.etas, study.converged)):
        lines.append(f"{i},{_fmt(eta)},{int(conv)}")
    counts, edges = study.histogram(bins=20)
    return RestartOutput(etas=study.etas, converged=study.converged,
                         eta_dp=float(eta_dp), eta_refined=float(ref.eta_refined),
                         fraction_reaching_dp=frac, csv="\n".join(lines) + "\n",
                         hist_counts=[int(c) for c in counts],
                         hist_edges=[float(e) for e in edges])


# ---------------------------------------------------------------------------
# Single-policy evaluation commands
# ---------------------------------------------------------------------------


def evaluate_policy(policy: RatePolicy, topo: RelayTopology, n_samples, seed):
    return exact.throughput(policy, topo, n_samples=n_samples, seed=seed)


def simulate_policy(policy: RatePolicy, topo: RelayTopology, n_episodes, seed,
                    trace_limit=0):
    result = sim.run_campaign(policy, topo, n_episodes=n_episodes, seed=seed)
    traces = sim.dump_traces(policy, topo, n_episodes, seed=seed,
                             limit=trace_limit) if trace_limit > 0 else None
    return result, traces
