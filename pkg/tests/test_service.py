import warnings

import pytest

with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    from fastapi.testclient import TestClient

from relayharq.service.app import app


@pytest.fixture(scope="module")
def client():
    return TestClient(app, raise_server_exceptions=False)


POLICY = {"k_max": 2, "rho_s": [0.4, 0.3], "rho_r": [[0.2]]}
TOPOLOGY = {"snr_db": 10.0, "d": 0.5, "nu": 4.0}


def test_health(client):
    body = client.get("/health").json()
    assert body["status"] == "ok"


def test_evaluate_roundtrip(client):
    req = {"policy": POLICY, "topology": TOPOLOGY, "n_samples": 2 * 10**4, "seed": 1}
    resp = client.post("/evaluate", json=req)
    assert resp.status_code == 200
    body = resp.json()
    assert body["eta"] == pytest.approx((1.0 - body["p_out"]) / body["d_norm"])
    assert body["csv_header"].startswith("policy_hash,")
    assert sum(body["event_probs"].values()) == pytest.approx(1.0, abs=1e-9)


def test_evaluate_deterministic(client):
    req = {"policy": POLICY, "topology": TOPOLOGY, "n_samples": 2 * 10**4, "seed": 1}
    a = client.post("/evaluate", json=req)
    b = client.post("/evaluate", json=req)
    assert a.content == b.content


def test_simulate_matches_evaluate(client):
    req = {"policy": POLICY, "topology": TOPOLOGY, "n_samples": 5 * 10**4, "seed": 2}
    ev = client.post("/evaluate", json=req).json()
    sm = client.post("/simulate", json={"policy": POLICY, "topology": TOPOLOGY,
                                        "n_episodes": 5 * 10**4, "seed": 2,
                                        "trace_limit": 3}).json()
    se = (ev["eta_se"] ** 2 + sm["eta_se"] ** 2) ** 0.5
    assert abs(ev["eta"] - sm["eta"]) <= 3.0 * se
    assert sm["traces_csv"].splitlines()[0] == \
        "episode,switch_round,rounds_used,delivered,channel_uses"
    assert len(sm["traces_csv"].strip().splitlines()) == 4


def test_degenerate_policy_maps_to_400(client):
    req = {"policy": {"k_max": 1, "rho_s": [0.0], "rho_r": []},
           "topology": TOPOLOGY, "n_samples": 10**4}
    resp = client.post("/evaluate", json=req)
    assert resp.status_code == 400
    assert resp.json()["kind"] == "config"


def test_unknown_field_rejected(client):
    req = {"policy": POLICY, "topology": TOPOLOGY, "n_sample": 10}
    assert client.post("/evaluate", json=req).status_code == 422


def test_optimize_small_instance(client):
    req = {"topology": {"snr_db": 15.0}, "k_max": 2,
           "solver": {"rho_step": 0.2, "rho_max": 2.0, "lambda_tol": 1e-2},
           "n_samples": 2 * 10**4, "opt_samples": 10**4, "seed": 3}
    resp = client.post("/optimize", json=req)
    assert resp.status_code == 200
    body = resp.json()
    methods = {a["method"] for a in body["artifacts"]}
    assert methods == {"dp2d", "dp1d", "refined"}
    for art in body["artifacts"]:
        assert art["policy_text"].startswith("# rate-policy v1")
        assert art["lambda_th"] > 0.0
    lines = body["summary_csv"].strip().splitlines()
    assert lines[0].startswith("snr_db,d,nu,k_max,method")
    assert len(lines) == 4


def test_bounds_endpoint_schema(client):
    resp = client.post("/bounds", json={"snr_db_list": [5.0], "hd_samples": 300,
                                        "seed": 4})
    assert resp.status_code == 200
    body = resp.json()
    variants = [r["variant"] for r in body["rows"]]
    assert variants == ["eta0", "hd_full", "hd_fixed_power", "hd_orthogonal"]
    assert body["csv"].splitlines()[0] == "snr_db,variant,value,std_err"


def test_restart_study_endpoint(client):
    req = {"topology": {"snr_db": 15.0}, "k_max": 2, "n_starts": 2,
           "solver": {"rho_step": 0.2, "rho_max": 2.0, "lambda_tol": 1e-2},
           "opt_samples": 10**4, "seed": 5}
    resp = client.post("/restart-study", json=req)
    assert resp.status_code == 200
    body = resp.json()
    assert len(body["etas"]) == 2
    assert body["csv"].splitlines()[0] == "start,eta,converged"
    assert 0.0 <= body["fraction_reaching_dp"] <= 1.0


def test_sweep_distance_endpoint(client):
    req = {"d_list": [0.3, 0.7], "snr_db": 10.0, "k_list": [2],
           "solver": {"rho_step": 0.2, "rho_max": 2.0, "lambda_tol": 1e-2},
           "n_samples": 2 * 10**4, "opt_samples": 10**4, "seed": 6}
    resp = client.post("/sweep/distance", json=req)
    assert resp.status_code == 200
    body = resp.json()
    assert body["csv"].splitlines()[0] == "d,method,k_max,eta"
    assert {r["method"] for r in body["rows"]} == {"vr", "fr"}
    assert {r["d"] for r in body["rows"]} == {0.3, 0.7}


def test_validate_endpoint_wiring(client, monkeypatch):
    from relayharq import validation

    canned = [validation.CheckResult(criterion=1, name="stub", passed=True,
                                     detail="ok", runtime_s=0.1)]
    seen = {}

    def fake_run(scale):
        seen["band"] = scale.se_band
        return canned

    monkeypatch.setattr(validation, "run_validation", fake_run)
    resp = client.post("/validate", json={"profile": "quick", "se_band": 2.0})
    assert resp.status_code == 200
    body = resp.json()
    assert body["passed"] is True
    assert body["checks"][0]["name"] == "stub"
    assert seen["band"] == 2.0
    assert client.post("/validate", json={"profile": "quick", "se_band": -1}).status_code == 400
    assert client.post("/validate", json={"profile": "huge"}).status_code == 422
