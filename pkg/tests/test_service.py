import time

import pytest
from fastapi.testclient import TestClient

from whysim.service import create_app


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app())


def test_list_scenarios(client):
    data = client.get("/scenarios").json()
    assert len(data) == 10
    assert data[0]["id"] == 1
    assert data[0]["prompts"]


def test_scenario_detail_has_geometry(client):
    data = client.get("/scenarios/9").json()
    assert data["layout"]["roads"]
    assert data["layout"]["lanes"]
    assert data["layout"]["obstacles"], "occlusion scenario ships its building"
    assert data["goals"]


def test_unknown_scenario_404(client):
    assert client.get("/scenarios/42").status_code == 404


def test_trajectory_frames(client):
    data = client.get("/scenarios/1/trajectory").json()
    assert data["frames"][0]["tick"] == 0
    assert {a["id"] for a in data["frames"][0]["agents"]} == {0, 1}
    assert data["dt"] == pytest.approx(0.05)


def test_manual_query_remove_omits_vehicle(client):
    data = client.post("/scenarios/2/query", json={"text": "remove(1)"}).json()
    assert data["ok"]
    for frame in data["trajectory"]["frames"]:
        assert all(agent["id"] != 1 for agent in frame["agents"])
    assert "total" in data["reward"]
    assert data["baseline_reward"] is not None


def test_manual_query_bad_arity_reported(client):
    data = client.post("/scenarios/2/query", json={"text": "whatif(1)"}).json()
    assert not data["ok"]
    assert data["stage"] == "parse"
    assert "whatif expects 3" in data["error"]


def test_manual_query_validation_violations(client):
    data = client.post("/scenarios/2/query", json={"text": "remove(9)"}).json()
    assert not data["ok"]
    assert data["stage"] == "validate"
    assert any("UnknownAgent" in v for v in data["violations"])


def test_session_lifecycle_and_events(client):
    response = client.post("/sessions", json={
        "scenario_id": 1,
        "prompt_index": 0,
        "provider": "stub",
        "script": ["remove(1)", "expl-1", "DONE", "final-text"],
    })
    session_id = response.json()["session_id"]
    for _ in range(200):
        doc = client.get(f"/sessions/{session_id}").json()
        if doc["status"] != "running":
            break
        time.sleep(0.05)
    assert doc["status"] == "done"
    assert doc["record"]["final_explanation"] == "final-text"
    kinds = [e["kind"] for e in doc["events"]]
    assert kinds[0] == "context"
    assert "simulation" in kinds and "final" in kinds

    listing = client.get("/sessions").json()
    assert any(s["session_id"] == session_id for s in listing)

    with client.stream("GET", f"/sessions/{session_id}/events") as stream:
        body = "".join(chunk for chunk in stream.iter_text())
    assert "final-text" in body
    assert body.count("data:") >= len(kinds)


def test_grammar_served(client):
    text = client.get("/grammar").text
    assert "whatif" in text
    assert "macrolist" in text
