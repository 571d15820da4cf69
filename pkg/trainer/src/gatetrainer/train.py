"""Fine-tune the actionability classifier on <comment, resolved?> pairs."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
import torch
from sklearn.metrics import (
    accuracy_score,
    f1_score,
    precision_score,
    recall_score,
    roc_auc_score,
)
from torch import nn

from .data import load_dataset, split_dataset
from .model import HashingTokenizer, TinyEncoderClassifier

logger = logging.getLogger(__name__)

TINY_BASE = "tiny-encoder"


@dataclass(frozen=True)
class TrainConfig:
    dataset: Path
    out_dir: Path
    base_model: str = TINY_BASE
    max_seq_len: int = 8192  # truncation cap
    epochs: int = 8
    learning_rate: float = 1e-3
    batch_size: int = 16
    eval_split: float = 0.2
    seed: int = 7
    vocab_size: int = 4096
    dim: int = 64

    def __post_init__(self) -> None:
        if not 0.0 < self.eval_split < 1.0:
            raise ValueError("eval_split must lie in (0, 1)")
        if self.max_seq_len < 1 or self.epochs < 1:
            raise ValueError("max_seq_len and epochs must be positive")


def _batches(rows, batch_size):
    for start in range(0, len(rows), batch_size):
        yield rows[start : start + batch_size]


def artifact_version(out_dir: Path) -> str:
    digest = hashlib.sha256((Path(out_dir) / "model.pt").read_bytes()).hexdigest()
    return digest[:12]


def train(cfg: TrainConfig) -> dict:
    """Train, evaluate on the held-out split, and write the artifact.

    Returns the metrics report (also written to ``metrics.json``). The split
    is reproducible from the seed; two runs with the same config see the same
    held-out rows.
    """
    if cfg.base_model != TINY_BASE:
        raise ValueError(
            f"unknown base model {cfg.base_model!r}; this build ships {TINY_BASE!r} "
            "(pretrained encoders need locally available weights)"
        )
    rows = load_dataset(cfg.dataset)
    train_rows, eval_rows = split_dataset(rows, cfg.eval_split, cfg.seed)
    logger.info("training on %d rows, evaluating on %d", len(train_rows), len(eval_rows))

    torch.manual_seed(cfg.seed)
    tokenizer = HashingTokenizer(vocab_size=cfg.vocab_size, max_len=cfg.max_seq_len)
    model = TinyEncoderClassifier(vocab_size=cfg.vocab_size, dim=cfg.dim)

    positives = sum(r["label"] for r in train_rows)
    negatives = len(train_rows) - positives
    pos_weight = torch.tensor([negatives / max(positives, 1)], dtype=torch.float32)
    loss_fn = nn.BCEWithLogitsLoss(pos_weight=pos_weight)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)

    model.train()
    for epoch in range(cfg.epochs):
        epoch_loss = 0.0
        for batch in _batches(train_rows, cfg.batch_size):
            ids, mask = tokenizer.batch([r["text"] for r in batch])
            labels = torch.tensor([float(r["label"]) for r in batch])
            optimizer.zero_grad()
            logits = model(ids, mask)
            loss = loss_fn(logits, labels)
            loss.backward()
            optimizer.step()
            epoch_loss += loss.item()
        logger.info("epoch %d loss %.4f", epoch + 1, epoch_loss)

    model.eval()
    with torch.no_grad():
        ids, mask = tokenizer.batch([r["text"] for r in eval_rows])
        probabilities = torch.sigmoid(model(ids, mask)).numpy()
    truth = np.array([r["label"] for r in eval_rows])
    predictions = (probabilities >= 0.5).astype(int)
    metrics = {
        "accuracy": float(accuracy_score(truth, predictions)),
        "precision": float(precision_score(truth, predictions, zero_division=0)),
        "recall": float(recall_score(truth, predictions, zero_division=0)),
        "f1": float(f1_score(truth, predictions, zero_division=0)),
        "roc_auc": (
            float(roc_auc_score(truth, probabilities)) if len(set(truth)) > 1 else None
        ),
        "train_rows": len(train_rows),
        "eval_rows": len(eval_rows),
    }

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    torch.save(model.state_dict(), out_dir / "model.pt")
    config = asdict(cfg)
    config["dataset"] = str(cfg.dataset)
    config["out_dir"] = str(cfg.out_dir)
    (out_dir / "config.json").write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")
    (out_dir / "metrics.json").write_text(
        json.dumps(metrics, indent=2) + "\n", encoding="utf-8"
    )
    metrics["model_version"] = artifact_version(out_dir)
    return metrics


def load_artifact(out_dir: Path) -> tuple[TinyEncoderClassifier, HashingTokenizer, str]:
    out_dir = Path(out_dir)
    config = json.loads((out_dir / "config.json").read_text(encoding="utf-8"))
    tokenizer = HashingTokenizer(
        vocab_size=config["vocab_size"], max_len=config["max_seq_len"]
    )
    model = TinyEncoderClassifier(vocab_size=config["vocab_size"], dim=config["dim"])
    model.load_state_dict(torch.load(out_dir / "model.pt", weights_only=True))
    model.eval()
    return model, tokenizer, artifact_version(out_dir)
