import pytest
from fastapi.testclient import TestClient

from config import TOOL_VERSION
from health_check import check_health
from main import app

client = TestClient(app)

PULSED = {"kind": "spdc_pulsed", "g": 1e-3, "tau_s": 1e-9, "repetition_rate_hz": 1e7,
          "eta_trigger": 0.05, "eta_signal": 0.5, "mode_statistics": "poissonian"}


def test_status():
    response = client.get("/status")
    assert response.status_code == 200
    body = response.json()
    assert body["status"] == "ok"
    assert body["version"] == TOOL_VERSION
    assert isinstance(body["recent_runs"], list)


def test_health_check_against_the_app():
    assert check_health(client=client)


def test_closed_form_depth():
    response = client.post("/api/depth", json={"p1": 0.1, "p2plus": 1e-5})
    assert response.status_code == 200
    assert response.json()["depth_db"] == pytest.approx(18.24, abs=0.01)


def test_infinite_depth_is_returned_as_null():
    response = client.post("/api/depth", json={"source": {"kind": "ideal", "eta": 0.6}, "feature": "NC"})
    body = response.json()
    assert body["infinite"] is True
    assert body["depth_db"] is None
    assert body["summary"] == "infinite (verified to 60 dB)"


def test_vacuum_source_depth():
    response = client.post("/api/depth", json={"source": {"kind": "quantum_dot", "eta_col": 0.0}})
    assert response.status_code == 200
    body = response.json()
    assert body["witnessed"] is False
    assert body["depth_db"] == 0.0


def test_model():
    response = client.post("/api/model", json={"source": {"kind": "quantum_dot", "eta_col": 0.2, "lambda_bg": 0.01}})
    assert response.status_code == 200
    body = response.json()
    assert body["p0"] + body["p1"] + body["p2plus"] == pytest.approx(1.0)
    assert body["verdict"]["qng_approx"] is True


def test_trajectory():
    response = client.post("/api/trajectory", json={"source": {"kind": "ideal", "eta": 0.5}, "atten_db": [0, 10]})
    points = response.json()
    assert [pt["p1"] for pt in points] == pytest.approx([0.5, 0.05])


@pytest.mark.parametrize("payload", [
    {"p1": 0.1},
    {"source": {"kind": "ideal", "eta": 1.5}},
    {"p1": 0.1, "p2plus": 1e-5, "fiber_loss_db_per_km": 0.0},
    {"p1": 0.1, "p2plus": 1e-5, "method": "bisection"},
])
def test_bad_depth_requests_are_unprocessable(payload):
    response = client.post("/api/depth", json=payload)
    assert response.status_code == 422


def test_domain_errors_carry_their_module():
    response = client.post("/api/depth", json={"p1": 0.1, "p2plus": 1e-5, "fiber_loss_db_per_km": 0.0})
    assert response.json()["module"] == "witnesses"


def test_compare():
    cw = {"kind": "spdc_cw", "tau_s": 1e-9, "background_rate_hz": 5e3 / 0.999, "eta_trigger": 0.05, "eta_signal": 0.5}
    response = client.post("/api/compare", json={"cw": cw, "pulsed": PULSED})
    assert response.status_code == 200
    assert response.json()["ratio"] == pytest.approx(0.01, rel=0.1)


def test_sweep():
    response = client.post("/api/sweep", json={"spec": {"parameter": "gain", "grid": [1e-3, 1e-2], "fixed": PULSED}})
    body = response.json()
    assert body["best_value"] == 1e-3
    assert len(body["profile"]) == 2
