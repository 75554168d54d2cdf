"""Command-line front end; a thin client of the HTTP service.

Without --server the CLI drives the FastAPI app through an in-process
transport, so no running server is needed; with --server URL it talks to a
remote instance with exactly the same payloads. Outputs land in --out-dir,
the RELAYHARQ_OUTDIR environment variable, or the working directory.

Exit codes: 0 ok, 1 config error, 2 numeric/solver error, 3 validation failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .errors import ConfigError, NumericsError, PolicyParseError, RelayHarqError
from .experiments import build_config
from .policy import RatePolicy

OUTDIR_ENV = "RELAYHARQ_OUTDIR"

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERIC = 2
EXIT_VALIDATION = 3


class ServiceClient:
    """POSTs request payloads either in-process or to a remote server."""

    def __init__(self, base_url=None):
        if base_url:
            import httpx

            self._client = httpx.Client(base_url=base_url, timeout=None)
        else:
            import warnings

            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                from fastapi.testclient import TestClient

            from .service.app import app

            self._client = TestClient(app, raise_server_exceptions=False)

    def post(self, path, payload) -> dict:
        resp = self._client.post(path, json=payload)
        if resp.status_code == 200:
            return resp.json()
        try:
            body = resp.json()
        except ValueError:
            body = {"error": resp.text, "kind": "unknown"}
        message = body.get("error") or str(body.get("detail", body))
        if resp.status_code in (400, 422):
            raise ConfigError(message)
        raise NumericsError(message)


def _resolve_out_dir(args) -> Path:
    out = getattr(args, "out_dir", None) or os.environ.get(OUTDIR_ENV) or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")
    print(f"wrote {path}")


def _load_config(args, **extra_overrides):
    file_text = None
    if getattr(args, "config", None):
        try:
            file_text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config file {args.config}: {exc}")
    overrides = {}
    mapping = {
        "snr_db": "snr_db_list",
        "d": "d_list",
        "k": "k_list",
        "nu": "nu",
        "rho_step": "rho_step",
        "rho_max": "rho_max",
        "samples": "n_samples",
        "opt_samples": "opt_samples",
        "hd_samples": "hd_samples",
        "seed": "seed",
        "lambda_tol": "lambda_tol",
    }
    for arg_name, field in mapping.items():
        value = getattr(args, arg_name, None)
        if value is not None:
            overrides[field] = tuple(value) if isinstance(value, list) else value
    overrides.update(extra_overrides)
    return build_config(file_text=file_text, overrides=overrides)


def _load_policy(path) -> RatePolicy:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read policy file {path}: {exc}")
    return RatePolicy.from_text(text)


def _policy_payload(policy: RatePolicy) -> dict:
    return {"k_max": policy.k_max, "rho_s": list(policy.rho_s),
            "rho_r": [list(r) for r in policy.rho_r]}


def _topology_payload(args) -> dict:
    return {"snr_db": args.snr_db, "d": args.d, "nu": args.nu}


def _solver_payload(cfg) -> dict:
    return {"rho_step": cfg.rho_step, "rho_max": cfg.rho_max,
            "lambda_tol": cfg.lambda_tol}


# ---------------------------------------------------------------------------
# Subcommand handlers
# ---------------------------------------------------------------------------


def cmd_optimize(args, client: ServiceClient) -> int:
    cfg = _load_config(args)
    out_dir = _resolve_out_dir(args)
    summary_lines = None
    for snr_db in cfg.snr_db_list:
        for d in cfg.d_list:
            for k_max in cfg.k_list:
                body = client.post("/optimize", {
                    "topology": {"snr_db": snr_db, "d": d, "nu": cfg.nu},
                    "k_max": k_max,
                    "solver": _solver_payload(cfg),
                    "n_samples": cfg.n_samples,
                    "opt_samples": cfg.opt_samples,
                    "seed": cfg.seed,
                })
                for art in body["artifacts"]:
                    _write(out_dir / art["policy_file"], art["policy_text"])
                lines = body["summary_csv"].splitlines()
                if summary_lines is None:
                    summary_lines = lines
                else:
                    summary_lines.extend(lines[1:])
    _write(out_dir / "optimize_summary.csv", "\n".join(summary_lines) + "\n")
    return EXIT_OK


def cmd_evaluate(args, client: ServiceClient) -> int:
    policy = _load_policy(args.policy)
    body = client.post("/evaluate", {
        "policy": _policy_payload(policy),
        "topology": _topology_payload(args),
        "n_samples": args.samples,
        "seed": args.seed,
    })
    print(body["csv_header"])
    print(body["csv_row"])
    if args.out:
        _write(Path(args.out), body["csv_header"] + "\n" + body["csv_row"] + "\n")
    return EXIT_OK


def cmd_simulate(args, client: ServiceClient) -> int:
    policy = _load_policy(args.policy)
    body = client.post("/simulate", {
        "policy": _policy_payload(policy),
        "topology": _topology_payload(args),
        "n_episodes": args.episodes,
        "seed": args.seed,
        "trace_limit": args.trace_limit,
    })
    print("eta,eta_se,p_out,mean_channel_uses,n_episodes")
    print(",".join([repr(body["eta"]), repr(body["eta_se"]), repr(body["p_out"]),
                    repr(body["mean_channel_uses"]), str(body["n_episodes"])]))
    if body.get("traces_csv"):
        _write(_resolve_out_dir(args) / "traces.csv", body["traces_csv"])
    return EXIT_OK


def cmd_bounds(args, client: ServiceClient) -> int:
    cfg = _load_config(args)
    body = client.post("/bounds", {
        "snr_db_list": list(cfg.snr_db_list),
        "d": cfg.d_list[0],
        "nu": cfg.nu,
        "hd_samples": cfg.hd_samples,
        "seed": cfg.seed,
    })
    _write(_resolve_out_dir(args) / "bounds.csv", body["csv"])
    return EXIT_OK


def cmd_sweep_snr(args, client: ServiceClient) -> int:
    cfg = _load_config(args)
    body = client.post("/sweep/snr", {
        "snr_db_list": list(cfg.snr_db_list),
        "d": cfg.d_list[0],
        "nu": cfg.nu,
        "k_list": list(cfg.k_list),
        "solver": _solver_payload(cfg),
        "n_samples": cfg.n_samples,
        "opt_samples": cfg.opt_samples,
        "hd_samples": cfg.hd_samples,
        "seed": cfg.seed,
    })
    _write(_resolve_out_dir(args) / "sweep_snr.csv", body["csv"])
    return EXIT_OK


def cmd_sweep_distance(args, client: ServiceClient) -> int:
    cfg = _load_config(args)
    body = client.post("/sweep/distance", {
        "d_list": list(cfg.d_list),
        "snr_db": cfg.snr_db_list[0],
        "nu": cfg.nu,
        "k_list": list(cfg.k_list),
        "solver": _solver_payload(cfg),
        "n_samples": cfg.n_samples,
        "opt_samples": cfg.opt_samples,
        "seed": cfg.seed,
    })
    _write(_resolve_out_dir(args) / "sweep_distance.csv", body["csv"])
    return EXIT_OK


def cmd_restart_study(args, client: ServiceClient) -> int:
    cfg = _load_config(args)
    body = client.post("/restart-study", {
        "topology": {"snr_db": cfg.snr_db_list[0], "d": cfg.d_list[0], "nu": cfg.nu},
        "k_max": cfg.k_list[0],
        "n_starts": args.starts,
        "solver": _solver_payload(cfg),
        "opt_samples": cfg.opt_samples,
        "seed": cfg.seed,
    })
    print(f"dp seed eta: {body['eta_dp_seed']:.6f}  refined: {body['eta_refined']:.6f}")
    print(f"best restart: {max(body['etas']):.6f}  "
          f"fraction reaching dp seed: {body['fraction_reaching_dp']:.4f}")
    _write(_resolve_out_dir(args) / "restarts.csv", body["csv"])
    return EXIT_OK


def cmd_validate(args, client: ServiceClient) -> int:
    body = client.post("/validate", {"profile": args.profile,
                                     "se_band": args.se_band})
    for check in body["checks"]:
        status = "PASS" if check["passed"] else "FAIL"
        print(f"[{status}] criterion {check['criterion']:>2} {check['name']}: "
              f"{check['detail']} ({check['runtime_s']:.1f}s)")
    if not body["passed"]:
        print("validation FAILED")
        return EXIT_VALIDATION
    print("validation passed")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_config_args(p, with_k=True):
    p.add_argument("--config", help="key=value config file; flags override it")
    p.add_argument("--snr-db", dest="snr_db", type=float, nargs="+")
    p.add_argument("--d", type=float, nargs="+")
    if with_k:
        p.add_argument("-K", "--k", dest="k", type=int, nargs="+")
    p.add_argument("--nu", type=float)
    p.add_argument("--rho-step", dest="rho_step", type=float)
    p.add_argument("--rho-max", dest="rho_max", type=float)
    p.add_argument("--samples", type=int)
    p.add_argument("--opt-samples", dest="opt_samples", type=int)
    p.add_argument("--hd-samples", dest="hd_samples", type=int)
    p.add_argument("--lambda-tol", dest="lambda_tol", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", dest="out_dir")


def _add_policy_args(p):
    p.add_argument("--policy", required=True, help="policy file path")
    p.add_argument("--snr-db", dest="snr_db", type=float, required=True)
    p.add_argument("--d", type=float, default=0.5)
    p.add_argument("--nu", type=float, default=4.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", dest="out_dir")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relayharq",
        description="Variable-rate relay-HARQ policy optimization and evaluation")
    parser.add_argument("--server", help="service URL; defaults to in-process")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("optimize", help="solve policies over a sweep config")
    _add_config_args(p)
    p.set_defaults(handler=cmd_optimize)

    p = sub.add_parser("evaluate", help="exact throughput of a policy file")
    _add_policy_args(p)
    p.add_argument("--samples", type=int, default=10**6)
    p.add_argument("--out", help="optional CSV output path")
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("simulate", help="protocol-simulator campaign for a policy file")
    _add_policy_args(p)
    p.add_argument("--episodes", type=int, default=10**6)
    p.add_argument("--trace-limit", dest="trace_limit", type=int, default=0)
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("bounds", help="direct bound and capacity ceilings")
    _add_config_args(p, with_k=False)
    p.set_defaults(handler=cmd_bounds)

    p = sub.add_parser("sweep-snr", help="throughput vs SNR sweep")
    _add_config_args(p)
    p.set_defaults(handler=cmd_sweep_snr)

    p = sub.add_parser("sweep-distance", help="throughput vs relay position sweep")
    _add_config_args(p)
    p.set_defaults(handler=cmd_sweep_distance)

    p = sub.add_parser("restart-study", help="random-restart comparison study")
    _add_config_args(p)
    p.add_argument("--starts", type=int, default=50)
    p.set_defaults(handler=cmd_restart_study)

    p = sub.add_parser("validate", help="run the cross-module check suite")
    p.add_argument("--profile", choices=("quick", "full"), default="quick")
    p.add_argument("--se-band", dest="se_band", type=float, default=3.0,
                   help="width of the agreement bands in standard errors")
    p.set_defaults(handler=cmd_validate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        client = ServiceClient(args.server)
        return args.handler(args, client)
    except (ConfigError, PolicyParseError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RelayHarqError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except Exception as exc:  # pragma: no cover - defensive
        print(f"unexpected error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
