import threading
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from steerbo.service import create_app


@pytest.fixture
def client():
    return TestClient(create_app(test_profile=True))


def new_session(client, **overrides):
    body = {"app_id": "tutorial", "mode": "cooperative", "rng_seed": 3, "q": 4, "n_mc": 64}
    body.update(overrides)
    r = client.post("/sessions", json=body)
    assert r.status_code == 201
    return r.json()["id"]


def evaluate_seeds(client, sid, n=5):
    for _ in range(n):
        snap = client.get(f"/sessions/{sid}").json()
        r = client.post(
            f"/sessions/{sid}/evaluate",
            json={"parameters": snap["current_sliders"], "fidelity": "formal"},
        )
        assert r.status_code == 200
        # park the sliders on the next pending point via a fresh snapshot
        # (seeds are consumed in order; current_sliders starts at seed 0)
        snap = client.get(f"/sessions/{sid}").json()
        if snap["status"] == "seeding":
            # move sliders to an arbitrary in-range point for the next formal
            params = [
                (p["min"] + p["max"]) / 2 + 0.01 * _ for p in snap["app"]["parameters"]
            ]
            client.post(f"/sessions/{sid}/sliders", json={"parameters": params})


class TestSessionRoutes:
    def test_create_and_snapshot(self, client):
        sid = new_session(client)
        snap = client.get(f"/sessions/{sid}").json()
        assert snap["status"] == "seeding"
        assert snap["mode"] == "cooperative"
        assert len(snap["app"]["parameters"]) == 2
        assert len(snap["current_sliders"]) == 2

    def test_invalid_config_400(self, client):
        r = client.post("/sessions", json={"app_id": "nope"})
        assert r.status_code == 400
        assert r.json()["code"] == "invalid_config"
        r = client.post("/sessions", json={"app_id": "app1", "q": 0})
        assert r.status_code == 400

    def test_unknown_session_404(self, client):
        for path in ("/sessions/zzz", "/sessions/zzz/log"):
            assert client.get(path).status_code == 404
        assert client.post("/sessions/zzz/propose", json={"request": ""}).status_code == 404

    def test_propose_during_seeding_409(self, client):
        sid = new_session(client)
        r = client.post(f"/sessions/{sid}/propose", json={"request": ""})
        assert r.status_code == 409
        assert r.json()["code"] == "insufficient_seed"

    def test_designer_led_propose_409(self, client):
        sid = new_session(client, mode="designer_led")
        evaluate_seeds(client, sid)
        r = client.post(f"/sessions/{sid}/propose", json={"request": ""})
        assert r.status_code == 409
        assert r.json()["code"] == "mode_forbids"

    def test_propose_with_empty_request_returns_reason(self, client):
        sid = new_session(client)
        evaluate_seeds(client, sid)
        r = client.post(f"/sessions/{sid}/propose", json={"request": ""})
        assert r.status_code == 200
        body = r.json()
        assert body["reason"]
        assert len(body["parameters"]) == 2
        # suggestion lands on the sliders
        snap = client.get(f"/sessions/{sid}").json()
        assert snap["current_sliders"] == body["parameters"]

    def test_sliders_forbidden_in_bo_led(self, client):
        sid = new_session(client, mode="bo_led")
        snap = client.get(f"/sessions/{sid}").json()
        r = client.post(
            f"/sessions/{sid}/sliders", json={"parameters": snap["current_sliders"]}
        )
        assert r.status_code == 409
        assert r.json()["code"] == "mode_forbids"

    def test_sliders_update_204(self, client):
        sid = new_session(client)
        snap = client.get(f"/sessions/{sid}").json()
        params = [p["min"] for p in snap["app"]["parameters"]]
        r = client.post(f"/sessions/{sid}/sliders", json={"parameters": params})
        assert r.status_code == 204
        snap = client.get(f"/sessions/{sid}").json()
        assert snap["current_sliders"] == params

    def test_out_of_range_parameters_400(self, client):
        sid = new_session(client)
        snap = client.get(f"/sessions/{sid}").json()
        params = [p["max"] * 10 + 1 for p in snap["app"]["parameters"]]
        r = client.post(f"/sessions/{sid}/evaluate", json={"parameters": params, "fidelity": "formal"})
        assert r.status_code == 400
        assert r.json()["code"] == "invalid_parameters"

    def test_immediate_observation_in_test_profile(self, client):
        sid = new_session(client)
        snap = client.get(f"/sessions/{sid}").json()
        r = client.post(
            f"/sessions/{sid}/evaluate",
            json={"parameters": snap["current_sliders"], "fidelity": "informal"},
        )
        assert r.status_code == 200
        body = r.json()
        assert body["status"] == "done"
        assert body["observation"]["fidelity"] == "informal"

    def test_log_stream_grows_with_mutations(self, client):
        sid = new_session(client)
        n0 = len(client.get(f"/sessions/{sid}/log").text.strip().splitlines())
        snap = client.get(f"/sessions/{sid}").json()
        client.post(
            f"/sessions/{sid}/evaluate",
            json={"parameters": snap["current_sliders"], "fidelity": "formal"},
        )
        n1 = len(client.get(f"/sessions/{sid}/log").text.strip().splitlines())
        assert n1 == n0 + 1
        # GET never mutates
        for _ in range(3):
            client.get(f"/sessions/{sid}")
        n2 = len(client.get(f"/sessions/{sid}/log").text.strip().splitlines())
        assert n2 == n1

    def test_pareto_flags_on_formal_only(self, client):
        sid = new_session(client)
        evaluate_seeds(client, sid)
        snap = client.get(f"/sessions/{sid}").json()
        client.post(
            f"/sessions/{sid}/evaluate",
            json={"parameters": snap["current_sliders"], "fidelity": "informal"},
        )
        snap = client.get(f"/sessions/{sid}").json()
        formal = [h for h in snap["history"] if h["fidelity"] == "formal"]
        informal = [h for h in snap["history"] if h["fidelity"] == "informal"]
        assert any(h["pareto"] for h in formal)
        assert all(not h["pareto"] for h in informal)


class TestAsyncEvaluation:
    def test_pending_then_poll(self):
        client = TestClient(create_app(test_profile=False))
        r = client.post(
            "/sessions",
            json={
                "app_id": "tutorial",
                "rng_seed": 1,
                "formal_delay": 0.0,
                "informal_delay": 0.3,
            },
        )
        sid = r.json()["id"]
        snap = client.get(f"/sessions/{sid}").json()
        r = client.post(
            f"/sessions/{sid}/evaluate",
            json={"parameters": snap["current_sliders"], "fidelity": "informal"},
        )
        assert r.status_code == 202
        k = r.json()["evaluation"]
        assert client.get(f"/sessions/{sid}/evaluations/{k}").json()["status"] == "pending"
        deadline = time.time() + 5
        while time.time() < deadline:
            body = client.get(f"/sessions/{sid}/evaluations/{k}").json()
            if body["status"] == "done":
                break
            time.sleep(0.05)
        assert body["status"] == "done"
        assert body["observation"]["fidelity"] == "informal"

    def test_unknown_evaluation_404(self):
        client = TestClient(create_app(test_profile=True))
        sid = new_session(client)
        assert client.get(f"/sessions/{sid}/evaluations/5").status_code == 404


class TestConcurrency:
    def test_racing_mutations_are_serialized(self, client):
        sid = new_session(client)
        snap = client.get(f"/sessions/{sid}").json()
        params = snap["current_sliders"]
        results = []

        def worker():
            r = client.post(
                f"/sessions/{sid}/evaluate",
                json={"parameters": params, "fidelity": "formal"},
            )
            results.append(r.status_code)

        threads = [threading.Thread(target=worker) for _ in range(2)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert results == [200, 200]
        snap = client.get(f"/sessions/{sid}").json()
        # both writes landed, sequentially numbered: no lost update
        assert snap["iteration"] == 2
        iters = [h["iteration"] for h in snap["history"]]
        assert iters == [1, 2]
