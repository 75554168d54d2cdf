"""FastAPI service wrapping the optimization, evaluation and simulation core.

The service is stateless: every request carries its full parameters (seeds
included) and responses embed plot-ready CSV payloads, so clients own all
file I/O and identical requests produce identical responses.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__, experiments, validation
from ..errors import (ConfigError, ContractError, DegeneratePolicyError,
                      DomainError, NumericsError, PolicyParseError, SolverError)
from . import schemas

app = FastAPI(title="relayharq", version=__version__)

_BAD_REQUEST = (DomainError, ConfigError, ContractError, DegeneratePolicyError,
                PolicyParseError)
_NUMERIC = (NumericsError, SolverError)


@app.exception_handler(Exception)
async def _error_handler(request: Request, exc: Exception):
    if isinstance(exc, _BAD_REQUEST):
        return JSONResponse(status_code=400,
                            content={"error": str(exc), "kind": "config"})
    if isinstance(exc, _NUMERIC):
        return JSONResponse(status_code=500,
                            content={"error": str(exc), "kind": "numeric"})
    raise exc


@app.get("/health")
def health():
    return {"status": "ok", "version": __version__,
            "csv_schema": experiments.SCHEMA_VERSION}


@app.post("/evaluate", response_model=schemas.EvaluateResponse)
def evaluate(req: schemas.EvaluateRequest):
    rep = experiments.evaluate_policy(req.policy.to_core(), req.topology.to_core(),
                                      n_samples=req.n_samples, seed=req.seed)
    return schemas.EvaluateResponse(
        policy_hash=rep.policy_hash, eta=rep.eta, eta_se=rep.eta_se,
        p_out=rep.p_out, p_out_se=rep.p_out_se, d_norm=rep.d_norm,
        d_norm_se=rep.d_norm_se, n_samples=rep.n_samples,
        event_probs=rep.event_probs, csv_header=rep.CSV_HEADER, csv_row=rep.csv_row())


@app.post("/simulate", response_model=schemas.SimulateResponse)
def simulate(req: schemas.SimulateRequest):
    result, traces = experiments.simulate_policy(
        req.policy.to_core(), req.topology.to_core(), n_episodes=req.n_episodes,
        seed=req.seed, trace_limit=req.trace_limit)
    return schemas.SimulateResponse(
        eta=result.eta, eta_se=result.eta_se, p_out=result.p_out,
        p_out_se=result.p_out_se, mean_channel_uses=result.mean_channel_uses,
        n_episodes=result.n_episodes, n_delivered=result.n_delivered,
        event_freqs=result.event_freqs, traces_csv=traces)


def _config_from(req, **kw) -> experiments.ExperimentConfig:
    return experiments.build_config(overrides=kw)


@app.post("/optimize", response_model=schemas.OptimizeResponse)
def optimize(req: schemas.OptimizeRequest):
    cfg = _config_from(
        req, snr_db_list=(req.topology.snr_db,), d_list=(req.topology.d,),
        nu=req.topology.nu, k_list=(req.k_max,), rho_step=req.solver.rho_step,
        rho_max=req.solver.rho_max, lambda_tol=req.solver.lambda_tol,
        n_samples=req.n_samples, opt_samples=req.opt_samples, seed=req.seed)
    out = experiments.run_optimize(cfg)
    pt = out.points[0]
    artifacts = []
    for method in ("dp2d", "dp1d", "refined"):
        pol = pt.policies[method]
        rep = pt.reports[method]
        lam = pt.lambda_2d if method != "dp1d" else pt.lambda_1d
        fname = experiments._policy_filename(method, pt.snr_db, pt.d, pt.k_max)
        artifacts.append(schemas.PolicyArtifact(
            method=method, lambda_th=lam, policy=schemas.Policy.from_core(pol),
            policy_text=pol.to_text(), policy_file=fname, eta=rep.eta,
            eta_se=rep.eta_se, p_out=rep.p_out, d_norm=rep.d_norm))
    return schemas.OptimizeResponse(artifacts=artifacts, summary_csv=out.summary_csv)


@app.post("/bounds", response_model=schemas.BoundsResponse)
def bounds_endpoint(req: schemas.BoundsRequest):
    cfg = _config_from(req, snr_db_list=tuple(req.snr_db_list), d_list=(req.d,),
                       nu=req.nu, hd_samples=req.hd_samples, seed=req.seed)
    rows, csv = experiments.run_bounds(cfg)
    return schemas.BoundsResponse(rows=[schemas.BoundRow(**r) for r in rows], csv=csv)


@app.post("/sweep/snr", response_model=schemas.SweepSnrResponse)
def sweep_snr(req: schemas.SweepSnrRequest):
    cfg = _config_from(
        req, snr_db_list=tuple(req.snr_db_list), d_list=(req.d,), nu=req.nu,
        k_list=tuple(req.k_list), rho_step=req.solver.rho_step,
        rho_max=req.solver.rho_max, lambda_tol=req.solver.lambda_tol,
        n_samples=req.n_samples, opt_samples=req.opt_samples,
        hd_samples=req.hd_samples, seed=req.seed)
    rows, csv = experiments.run_sweep_snr(cfg)
    return schemas.SweepSnrResponse(
        rows=[schemas.SweepSnrRow(**r) for r in rows], csv=csv)


@app.post("/sweep/distance", response_model=schemas.SweepDistanceResponse)
def sweep_distance(req: schemas.SweepDistanceRequest):
    cfg = _config_from(
        req, snr_db_list=(req.snr_db,), d_list=tuple(req.d_list), nu=req.nu,
        k_list=tuple(req.k_list), rho_step=req.solver.rho_step,
        rho_max=req.solver.rho_max, lambda_tol=req.solver.lambda_tol,
        n_samples=req.n_samples, opt_samples=req.opt_samples, seed=req.seed)
    rows, csv = experiments.run_sweep_distance(cfg)
    return schemas.SweepDistanceResponse(
        rows=[schemas.SweepDistanceRow(**r) for r in rows], csv=csv)


@app.post("/restart-study", response_model=schemas.RestartStudyResponse)
def restart_study(req: schemas.RestartStudyRequest):
    cfg = _config_from(
        req, snr_db_list=(req.topology.snr_db,), d_list=(req.topology.d,),
        nu=req.topology.nu, k_list=(req.k_max,), rho_step=req.solver.rho_step,
        rho_max=req.solver.rho_max, lambda_tol=req.solver.lambda_tol,
        opt_samples=req.opt_samples, seed=req.seed)
    out = experiments.run_restart_study(cfg, n_starts=req.n_starts)
    return schemas.RestartStudyResponse(
        etas=[float(e) for e in out.etas],
        converged=[bool(c) for c in out.converged],
        eta_dp_seed=out.eta_dp, eta_refined=out.eta_refined,
        fraction_reaching_dp=out.fraction_reaching_dp,
        hist_counts=out.hist_counts, hist_edges=out.hist_edges, csv=out.csv)


@app.post("/validate", response_model=schemas.ValidateResponse)
def validate(req: schemas.ValidateRequest):
    import dataclasses

    if req.se_band <= 0.0:
        raise ConfigError("se_band must be positive")
    scale = dataclasses.replace(validation.scale_for_profile(req.profile),
                                se_band=req.se_band)
    checks = validation.run_validation(scale)
    return schemas.ValidateResponse(
        passed=all(c.passed for c in checks),
        checks=[schemas.CheckOutcome(criterion=c.criterion, name=c.name,
                                     passed=c.passed, detail=c.detail,
                                     runtime_s=c.runtime_s) for c in checks])
