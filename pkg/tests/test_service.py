import numpy as np
import pytest
from fastapi.testclient import TestClient

from ddconsensus import collect_data
from ddconsensus.fixtures import sec6_adjacency, sec6_plant
from ddconsensus.service import create_app


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app())


def record_payload(horizon=15, seed=3, input_scale=1.0):
    rec = collect_data(sec6_plant(), horizon, np.random.default_rng(seed),
                       input_scale=input_scale)
    return {"u_minus": rec.u_minus.tolist(), "x": rec.x.tolist()}


class TestHealth:
    def test_health(self, client):
        assert client.get("/health").json() == {"status": "ok"}


class TestGraphEndpoint:
    def test_sec6_analysis(self, client):
        r = client.post("/graph/analyze", json={"adjacency": sec6_adjacency().tolist()})
        assert r.status_code == 200
        body = r.json()
        assert body["n_followers"] == 5
        assert body["has_leader_spanning_tree"]
        assert body["follower_subgraph_undirected"]
        assert body["z"] == 5.0
        assert body["averaging_mu"] == pytest.approx(0.5759310, abs=1e-6)
        assert max(abs(v - 1.0) for v in body["weighted_matrix_eigenvalues_real"]) <= 1.0

    def test_edges_form(self, client):
        r = client.post("/graph/analyze",
                        json={"edges": [[0, 1, 1.0]], "n_nodes": 2})
        assert r.status_code == 200
        assert r.json()["weighted_matrix_eigenvalues_real"] == pytest.approx([0.5])

    def test_invalid_graph_422(self, client):
        r = client.post("/graph/analyze", json={"adjacency": [[0.0, -1.0], [1.0, 0.0]]})
        assert r.status_code == 422


class TestSynthesisEndpoints:
    def test_noiseless(self, client):
        r = client.post("/synthesis/noiseless", json={"record": record_payload()})
        assert r.status_code == 200
        body = r.json()
        assert np.allclose(body["k0"], (-5.0 * sec6_plant().a).tolist(), atol=1e-3)
        assert body["stacked_equation_residual"] <= 1e-8

    def test_noiseless_rank_deficient_409(self, client):
        r = client.post("/synthesis/noiseless",
                        json={"record": record_payload(input_scale=0.0)})
        assert r.status_code == 409

    def test_noisy_feasible(self, client):
        horizon = 45
        bound = {"n11": (0.1 * np.eye(2)).tolist(), "n22": (-np.eye(horizon)).tolist()}
        r = client.post("/synthesis/noisy", json={
            "record": record_payload(horizon=horizon), "bound": bound, "nu": 0.7593})
        assert r.status_code == 200
        assert r.json()["feasible"]
        assert r.json()["gamma"] > 0

    def test_noisy_not_informative_reported(self, client):
        horizon = 15
        bound = {"n11": (1e-9 * np.eye(2)).tolist(), "n22": (-np.eye(horizon)).tolist()}
        plant = sec6_plant()
        rng = np.random.default_rng(5)
        x = np.empty((2, horizon + 1))
        x[:, 0] = rng.uniform(-1, 1, 2)
        u = rng.uniform(-1, 1, (2, horizon))
        for t in range(horizon):
            x[:, t + 1] = plant.a @ x[:, t] + plant.b @ u[:, t] + rng.standard_normal(2)
        r = client.post("/synthesis/noisy", json={
            "record": {"u_minus": u.tolist(), "x": x.tolist()}, "bound": bound, "nu": 0.7593})
        assert r.status_code == 200
        assert not r.json()["feasible"]
        assert r.json()["detail"]

    def test_leader(self, client):
        r = client.post("/synthesis/leader", json={
            "record": record_payload(),
            "graph": {"adjacency": sec6_adjacency().tolist()}})
        assert r.status_code == 200
        body = r.json()
        assert body["feasible"]
        assert body["theta"] == pytest.approx(0.9997, abs=1e-3)
        assert body["ratio"] < body["threshold"]
        assert body["c0"] == pytest.approx(1.0 / body["h0"], rel=1e-9)


class TestExperimentEndpoint:
    def test_full_run(self, client, tmp_path):
        r = client.post("/experiments/run", json={
            "mode": "leader-only", "fixture": "sec6",
            "data": {"seed": 11, "horizon": 15}, "out_dir": str(tmp_path)})
        assert r.status_code == 200
        body = r.json()
        assert body["exit_code"] == 0
        assert body["out_dir"] == str(tmp_path)
        assert (tmp_path / "report.json").exists()

    def test_invalid_config_422(self, client):
        r = client.post("/experiments/run", json={"mode": "noiseless", "data": {"seed": 1}})
        assert r.status_code == 422
