"""Serve a trained artifact over the scorer wire protocol.

POST /score  {"texts": [...]} -> {"probabilities": [...]}  (order-preserving)
POST /healthz               -> {"status": "ok", "model_version": <hash>}

Malformed requests get a 400 with a reason. The model loads once and is
read-only at inference, so concurrent requests are safe.
"""

from __future__ import annotations

import json
from pathlib import Path

import torch
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .train import load_artifact

SCORE_BATCH = 64


def create_app(artifact_dir: Path) -> FastAPI:
    model, tokenizer, version = load_artifact(artifact_dir)
    app = FastAPI(title="gatetrainer scorer", version="0.1.0")

    def score_texts(texts: list[str]) -> list[float]:
        out: list[float] = []
        with torch.no_grad():
            for start in range(0, len(texts), SCORE_BATCH):
                chunk = texts[start : start + SCORE_BATCH]
                ids, mask = tokenizer.batch(chunk)
                out.extend(float(p) for p in torch.sigmoid(model(ids, mask)))
        return out

    @app.post("/score")
    async def score(request: Request):
        try:
            payload = json.loads(await request.body())
        except json.JSONDecodeError:
            return JSONResponse({"error": "body must be JSON"}, status_code=400)
        texts = payload.get("texts") if isinstance(payload, dict) else None
        if not isinstance(texts, list) or any(not isinstance(t, str) for t in texts):
            return JSONResponse(
                {"error": "expected {\"texts\": [str, ...]}"}, status_code=400
            )
        return {"probabilities": score_texts(texts)}

    @app.post("/healthz")
    @app.get("/healthz")
    async def healthz():
        return {"status": "ok", "model_version": version}

    return app


def serve(artifact_dir: Path, host: str = "127.0.0.1", port: int = 8500) -> None:
    import uvicorn

    uvicorn.run(create_app(artifact_dir), host=host, port=port, log_level="info")
