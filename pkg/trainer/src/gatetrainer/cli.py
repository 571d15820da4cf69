"""gatetrainer command line: make-synth, train, serve."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .data import DatasetError, SingleClassDatasetError, synthetic_dataset, write_dataset
from .train import TrainConfig, train


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(prog="gatetrainer", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-synth", help="write the separable synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--rows", type=int, default=200)
    p.add_argument("--seed", type=int, default=7)

    p = sub.add_parser("train", help="train and evaluate; writes the artifact dir")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="artifact output directory")
    p.add_argument("--base", default="tiny-encoder")
    p.add_argument("--max-seq-len", type=int, default=8192)
    p.add_argument("--epochs", type=int, default=8)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--eval-split", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=7)

    p = sub.add_parser("serve", help="serve an artifact over the wire protocol")
    p.add_argument("--artifact", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8500)

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")

    if args.command == "make-synth":
        rows = synthetic_dataset(rows=args.rows, seed=args.seed)
        write_dataset(rows, Path(args.out))
        print(f"wrote {len(rows)} rows to {args.out}")
        return 0
    if args.command == "train":
        try:
            metrics = train(
                TrainConfig(
                    dataset=Path(args.dataset),
                    out_dir=Path(args.out),
                    base_model=args.base,
                    max_seq_len=args.max_seq_len,
                    epochs=args.epochs,
                    learning_rate=args.lr,
                    eval_split=args.eval_split,
                    seed=args.seed,
                )
            )
        except (SingleClassDatasetError, DatasetError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        print(json.dumps(metrics, indent=2))
        return 0
    if args.command == "serve":
        from .serve import serve

        serve(Path(args.artifact), host=args.host, port=args.port)
        return 0
    return 1


if __name__ == "__main__":
    sys.exit(main())
