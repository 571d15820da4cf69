from __future__ import annotations

import socket
import threading
import time
from pathlib import Path

import httpx
import pytest
import uvicorn
from fastapi.testclient import TestClient

from gatetrainer.data import synthetic_dataset, write_dataset
from gatetrainer.serve import create_app
from gatetrainer.train import TrainConfig, artifact_version, train


@pytest.fixture(scope="module")
def artifact(tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp("serve-artifact")
    dataset = root / "train.jsonl"
    write_dataset(synthetic_dataset(rows=120, seed=5), dataset)
    out = root / "model"
    train(TrainConfig(dataset=dataset, out_dir=out, epochs=4, seed=5))
    return out


@pytest.fixture(scope="module")
def client(artifact) -> TestClient:
    return TestClient(create_app(artifact))


def test_healthz_reports_artifact_hash(client, artifact):
    response = client.post("/healthz")
    assert response.status_code == 200
    body = response.json()
    assert body["status"] == "ok"
    assert body["model_version"] == artifact_version(artifact)


def test_empty_batch(client):
    response = client.post("/score", json={"texts": []})
    assert response.status_code == 200
    assert response.json() == {"probabilities": []}


def test_duplicate_texts_score_identically(client):
    response = client.post("/score", json={"texts": ["same text here"] * 2})
    probs = response.json()["probabilities"]
    assert len(probs) == 2 and probs[0] == probs[1]


def test_oversize_text_truncated_and_scored(client):
    response = client.post("/score", json={"texts": ["word " * 3000]})
    assert response.status_code == 200
    (prob,) = response.json()["probabilities"]
    assert 0.0 <= prob <= 1.0


def test_order_preserved(client):
    texts = [
        "Close the `reader` handle, otherwise descriptors leak.",
        "Good job!",
        "Guard `items` against empty input, this crashes on blank batches.",
    ]
    forward = client.post("/score", json={"texts": texts}).json()["probabilities"]
    backward = client.post("/score", json={"texts": texts[::-1]}).json()["probabilities"]
    assert forward == backward[::-1]


def test_malformed_request_is_400_with_reason(client):
    response = client.post("/score", json={"nope": 1})
    assert response.status_code == 400
    assert "error" in response.json()
    response = client.post("/score", content=b"not json")
    assert response.status_code == 400


# --- wire compatibility against the primary component -----------------------------


def _free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


@pytest.fixture(scope="module")
def live_server(artifact):
    port = _free_port()
    config = uvicorn.Config(
        create_app(artifact), host="127.0.0.1", port=port, log_level="warning"
    )
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    base = f"http://127.0.0.1:{port}"
    deadline = time.time() + 15
    while time.time() < deadline:
        try:
            httpx.post(f"{base}/healthz", timeout=1.0)
            break
        except httpx.HTTPError:
            time.sleep(0.05)
    else:
        raise RuntimeError("scorer did not come up")
    yield base
    server.should_exit = True
    thread.join(timeout=5)


def test_primary_wire_contract_suite_passes(live_server):
    reviewflow_gate = pytest.importorskip(
        "reviewflow.gate", reason="primary package not installed"
    )
    assert reviewflow_gate.wire_contract_errors(live_server) == []


def test_primary_remote_classifier_scores_against_live_server(live_server):
    reviewflow_gate = pytest.importorskip(
        "reviewflow.gate", reason="primary package not installed"
    )
    classifier = reviewflow_gate.RemoteClassifier(live_server)
    probabilities = classifier.score_texts(
        ["Validate `offset` bounds before slicing, negative values wrap silently.",
         "Nice work!"]
    )
    assert len(probabilities) == 2
    assert all(0.0 <= p <= 1.0 for p in probabilities)
    health = classifier.health()
    assert health["status"] == "ok"
