import pytest
from fastapi.testclient import TestClient

from app.main import app
from tests.conftest import CAMO_DOC, COPS_DOC


@pytest.fixture(scope="module")
def client():
    return TestClient(app)


class TestScenarioEndpoints:
    def test_health(self, client):
        response = client.get("/health")
        assert response.status_code == 200
        assert response.json() == {"status": "healthy"}

    def test_list_presets(self, client):
        response = client.get("/scenarios")
        assert response.status_code == 200
        assert {"cops", "camouflage"} <= set(response.json())

    def test_get_preset(self, client):
        document = client.get("/scenarios/cops").json()
        assert document["kind"] == "cops"
        assert document["goals"] == [[5, 4], [6, 5], [4, 3]]

    def test_unknown_preset(self, client):
        assert client.get("/scenarios/nowhere").status_code == 404


class TestPlanEndpoint:
    def test_plan_preset(self, client):
        response = client.post("/plan", json={"scenario": "cops", "options": {"horizon": 50}})
        assert response.status_code == 200
        summary = response.json()
        assert summary["start"] == [0, 7]
        assert len(summary["start_values"]) == 3
        assert summary["expected_value"] >= summary["nominal_value"]
        assert summary["deception_gain"] == pytest.approx(summary["expected_value"] - summary["nominal_value"])
        assert summary["value_basis"] == "plan"

    def test_no_obs_values_are_labelled(self, client):
        response = client.post("/plan", json={"scenario": "cops", "options": {"horizon": 50, "planner": "no-obs"}})
        assert response.status_code == 200
        summary = response.json()
        assert summary["value_basis"] == "full-observation"
        assert summary["deception_gain"] is None
        assert summary["no_obs_mode"] == "randomized"

    def test_plan_document(self, client):
        response = client.post("/plan", json={"scenario": CAMO_DOC, "options": {"horizon": 20, "planner": "nominal"}})
        assert response.status_code == 200
        summary = response.json()
        # The adversary starts out looking at the agent, and the nominal policy never hides
        assert len(summary["start_values"]) == 25
        assert summary["start_values"][0] == 0.0
        assert summary["expected_value"] == 0.0
        assert summary["deception_gain"] == 0.0

    def test_forbidden_start(self, client):
        response = client.post("/plan", json={"scenario": "cops", "options": {"horizon": 10, "forbidden": [[0, 7]]}})
        assert response.status_code == 409

    def test_invalid_scenario(self, client):
        response = client.post("/plan", json={"scenario": {**COPS_DOC, "true_goal": 5}})
        assert response.status_code == 422

    def test_robust_without_bounds(self, client):
        response = client.post("/plan", json={"scenario": "cops", "options": {"planner": "robust-rewards"}})
        assert response.status_code == 422


class TestSimulateEndpoint:
    def test_camo_nominal(self, client):
        body = {"scenario": "camouflage", "options": {"horizon": 40, "planner": "nominal"}, "runs": 2, "curve_points": 5}
        response = client.post("/simulate", json=body)
        assert response.status_code == 200
        result = response.json()
        assert result["terminal_mean"] == 0.0
        assert result["curve"][0]["t"] == 1
        assert result["curve"][-1]["t"] == 41
        assert len(result["curve"]) == 5

    def test_cops_optimal_stays_in_range(self, client):
        body = {"scenario": "cops", "options": {"horizon": 60}, "runs": 4, "seed": 2}
        result = client.post("/simulate", json=body).json()
        assert all(-10.0 <= point["mean"] <= 10.0 for point in result["curve"])


class TestSweepEndpoint:
    def test_self_comparison(self, client):
        body = {"scenario": "cops", "p_plan": 0.1, "p_grid": [0.1], "horizon": 30, "runs": 2}
        response = client.post("/sweep", json=body)
        assert response.status_code == 200
        assert response.json()["rows"] == [{"p_true": 0.1, "delta": 0.0}]

    def test_needs_cops_scenario(self, client):
        body = {"scenario": "camouflage", "p_grid": [0.1], "horizon": 10, "runs": 1}
        assert client.post("/sweep", json=body).status_code == 422

    def test_empty_grid(self, client):
        assert client.post("/sweep", json={"p_grid": []}).status_code == 422
