import numpy as np
import pytest

from relayharq.cli import main
from relayharq.policy import RatePolicy, from_fixed_rate


@pytest.fixture()
def policy_file(tmp_path):
    path = tmp_path / "pol.txt"
    from_fixed_rate(0.4, 2).save(path)
    return path


def test_evaluate_prints_report(policy_file, capsys):
    code = main(["evaluate", "--policy", str(policy_file), "--snr-db", "10",
                 "--samples", "20000", "--seed", "1"])
    assert code == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "policy_hash,snr_db,d,nu,k_max,p_out,d_norm,eta,n_samples"
    assert len(out[1].split(",")) == 9


def test_evaluate_missing_policy_file(tmp_path, capsys):
    code = main(["evaluate", "--policy", str(tmp_path / "nope.txt"),
                 "--snr-db", "10"])
    assert code == 1
    assert "config error" in capsys.readouterr().err


def test_evaluate_corrupted_policy_file(tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text("k_max 2\nS 0 1 0.5\nR 1 2 oops\n")
    code = main(["evaluate", "--policy", str(bad), "--snr-db", "10"])
    assert code == 1
    err = capsys.readouterr().err
    assert "line 3" in err and "oops" in err


def test_simulate_writes_traces(policy_file, tmp_path, capsys):
    out_dir = tmp_path / "results"
    code = main(["simulate", "--policy", str(policy_file), "--snr-db", "10",
                 "--episodes", "20000", "--trace-limit", "5",
                 "--out-dir", str(out_dir)])
    assert code == 0
    traces = (out_dir / "traces.csv").read_text()
    assert traces.splitlines()[0] == "episode,switch_round,rounds_used,delivered,channel_uses"
    assert len(traces.strip().splitlines()) == 6


def test_bounds_deterministic_outputs(tmp_path):
    args = ["bounds", "--snr-db", "5", "--hd-samples", "300", "--seed", "2"]
    code = main(args + ["--out-dir", str(tmp_path / "a")])
    assert code == 0
    code = main(args + ["--out-dir", str(tmp_path / "b")])
    assert code == 0
    assert (tmp_path / "a" / "bounds.csv").read_bytes() == \
        (tmp_path / "b" / "bounds.csv").read_bytes()


def test_outdir_env_var(policy_file, tmp_path, monkeypatch):
    out_dir = tmp_path / "envout"
    monkeypatch.setenv("RELAYHARQ_OUTDIR", str(out_dir))
    code = main(["simulate", "--policy", str(policy_file), "--snr-db", "10",
                 "--episodes", "20000", "--trace-limit", "2"])
    assert code == 0
    assert (out_dir / "traces.csv").exists()


def test_optimize_writes_policies_and_summary(tmp_path):
    out_dir = tmp_path / "opt"
    code = main(["optimize", "--snr-db", "15", "--d", "0.5", "-K", "2",
                 "--rho-step", "0.2", "--rho-max", "2.0", "--lambda-tol", "0.01",
                 "--samples", "20000", "--opt-samples", "10000", "--seed", "3",
                 "--out-dir", str(out_dir)])
    assert code == 0
    summary = (out_dir / "optimize_summary.csv").read_text().strip().splitlines()
    assert summary[0].startswith("snr_db,d,nu,k_max,method")
    assert len(summary) == 4
    for method in ("dp2d", "dp1d", "refined"):
        pol_file = out_dir / f"policy_{method}_snr15_d0.5_K2.txt"
        pol = RatePolicy.load(pol_file)
        assert pol.k_max == 2
        assert not pol.is_degenerate()


def test_config_file_with_flag_overrides(tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("snr_db = 5\nd = 0.3\nk = 2\nrho_step = 0.2\nrho_max = 2.0\n"
                   "n_samples = 20000\nopt_samples = 10000\nhd_samples = 300\n"
                   "lambda_tol = 0.01\nseed = 4\n")
    out_dir = tmp_path / "sweep"
    code = main(["sweep-snr", "--config", str(cfg), "--snr-db", "10",
                 "--out-dir", str(out_dir)])
    assert code == 0
    rows = (out_dir / "sweep_snr.csv").read_text().strip().splitlines()
    assert rows[0] == "snr_db,method,k_max,eta,p_out"
    # the flag override replaced the config's SNR list
    assert all(r.startswith("10.0,") for r in rows[1:])
    methods = {r.split(",")[1] for r in rows[1:]}
    assert methods == {"vr", "fr", "eta0", "hd_erg", "hd_erg_beta0"}


def test_sweep_snr_vr_dominates_fr(tmp_path):
    out_dir = tmp_path / "sweep2"
    code = main(["sweep-snr", "--snr-db", "15", "--d", "0.5", "-K", "2",
                 "--rho-step", "0.1", "--rho-max", "2.0", "--lambda-tol", "0.01",
                 "--samples", "50000", "--opt-samples", "20000",
                 "--hd-samples", "500", "--seed", "5", "--out-dir", str(out_dir)])
    assert code == 0
    rows = (out_dir / "sweep_snr.csv").read_text().strip().splitlines()[1:]
    cells = {r.split(",")[1]: r.split(",") for r in rows}
    eta = {m: float(c[3]) for m, c in cells.items()}
    assert eta["vr"] >= eta["fr"] - 0.05
    assert eta["vr"] <= eta["hd_erg"] + 0.2
    assert eta["hd_erg_beta0"] <= eta["hd_erg"] + 1e-9
    assert cells["eta0"][2] == "1"
    assert cells["hd_erg"][4] == ""


def test_bad_config_key_exits_one(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("snr_db = 5\nwibble = 3\n")
    code = main(["sweep-snr", "--config", str(cfg)])
    assert code == 1
    assert "wibble" in capsys.readouterr().err


def test_empty_snr_list_rejected(tmp_path, capsys):
    cfg = tmp_path / "empty.cfg"
    cfg.write_text("snr_db =\n")
    code = main(["bounds", "--config", str(cfg)])
    assert code == 1


def test_validate_unknown_profile_rejected():
    assert main(["validate", "--profile", "bogus"]) == 1


def test_sweep_distance_drops_endpoints(tmp_path):
    out_dir = tmp_path / "dist"
    code = main(["sweep-distance", "--snr-db", "10", "--d", "0", "0.5", "1",
                 "-K", "2", "--rho-step", "0.2", "--rho-max", "2.0",
                 "--lambda-tol", "0.01", "--samples", "20000",
                 "--opt-samples", "10000", "--seed", "7",
                 "--out-dir", str(out_dir)])
    assert code == 0
    rows = (out_dir / "sweep_distance.csv").read_text().strip().splitlines()[1:]
    assert {r.split(",")[0] for r in rows} == {"0.5"}


def test_validate_exit_codes(monkeypatch, capsys):
    from relayharq import validation

    def fake_run(scale):
        return [validation.CheckResult(criterion=2, name="stub", passed=False,
                                       detail="broken", runtime_s=0.0)]

    monkeypatch.setattr(validation, "run_validation", fake_run)
    code = main(["validate", "--profile", "quick"])
    assert code == 3
    out = capsys.readouterr().out
    assert "[FAIL]" in out and "broken" in out

    def fake_ok(scale):
        return [validation.CheckResult(criterion=2, name="stub", passed=True,
                                       detail="fine", runtime_s=0.0)]

    monkeypatch.setattr(validation, "run_validation", fake_ok)
    assert main(["validate", "--profile", "quick", "--se-band", "2.5"]) == 0


def test_optimize_reruns_are_byte_identical(tmp_path):
    args = ["optimize", "--snr-db", "12", "--d", "0.5", "-K", "2",
            "--rho-step", "0.25", "--rho-max", "1.5", "--lambda-tol", "0.01",
            "--samples", "20000", "--opt-samples", "10000", "--seed", "9"]
    assert main(args + ["--out-dir", str(tmp_path / "r1")]) == 0
    assert main(args + ["--out-dir", str(tmp_path / "r2")]) == 0
    for name in ("optimize_summary.csv", "policy_refined_snr12_d0.5_K2.txt"):
        assert (tmp_path / "r1" / name).read_bytes() == \
            (tmp_path / "r2" / name).read_bytes()


def test_optimize_k4_emits_ten_entry_policy(tmp_path):
    out_dir = tmp_path / "k4"
    code = main(["optimize", "--snr-db", "15", "--d", "0.5", "-K", "4",
                 "--rho-step", "0.2", "--rho-max", "2.0", "--lambda-tol", "0.01",
                 "--samples", "20000", "--opt-samples", "10000", "--seed", "11",
                 "--out-dir", str(out_dir)])
    assert code == 0
    pol = RatePolicy.load(out_dir / "policy_dp2d_snr15_d0.5_K4.txt")
    assert pol.n_entries == 10
    assert pol.k_max == 4
