"""Paired desk-scale runs: the same LSTM trained with and without surprisal feedback.

Both runs share seed, corpus and update budget; the script prints a table of
final smoothed training BPC and validation BPC side by side. At 1 MB and a
few thousand updates the ordering of the two numbers carries no weight; the
full-scale comparison needs ~10^8 bytes and days of GPU time.

    python scripts/paired_feedback_run.py --data text1m.txt --steps 2000 --out runs/
"""
from __future__ import annotations

import argparse
import json
import os
import time
from dataclasses import dataclass

from sfrnn import corpus as C
from sfrnn.model import ModelConfig
from sfrnn.trainer import TrainConfig, train


@dataclass
class RunSummary:
    feedback: bool
    steps: int
    chars_seen: int
    smoothed_train_bpc: float
    valid_bpc: float
    seconds: float


def run_one(data: str, feedback: bool, steps: int, hidden: int = 128, bptt: int = 100, batch: int = 32,
            seed: int = 1, eval_every: int = 500, out_dir: str | None = None, corpus=None) -> RunSummary:
    tag = "fb_on" if feedback else "fb_off"
    ckpt = metrics = None
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        ckpt = os.path.join(out_dir, f"{tag}.ckpt")
        metrics = os.path.join(out_dir, f"{tag}.jsonl")
    cfg = TrainConfig(model=ModelConfig(cell="lstm", N=hidden, S=bptt, feedback=feedback), data=data,
                      batch=batch, steps=steps, eval_every=eval_every, seed=seed, ckpt=ckpt, metrics=metrics)
    t0 = time.perf_counter()
    _, _, records = train(cfg, corpus)
    last = records[-1]
    return RunSummary(feedback, last.step, last.chars_seen, last.smoothed_train_bpc, last.valid_bpc,
                      time.perf_counter() - t0)


def paired(data: str, steps: int, **kw) -> list[RunSummary]:
    corpus = C.load(data)
    return [run_one(data, fb, steps, corpus=corpus, **kw) for fb in (True, False)]


def format_table(rows: list[RunSummary]) -> str:
    lines = ["| model | updates | chars seen | smoothed train BPC | valid BPC | seconds |",
             "|---|---:|---:|---:|---:|---:|"]
    for r in rows:
        name = "LSTM + surprisal feedback" if r.feedback else "LSTM"
        lines.append(f"| {name} | {r.steps} | {r.chars_seen} | {r.smoothed_train_bpc:.4f} | "
                     f"{r.valid_bpc:.4f} | {r.seconds:.0f} |")
    return "\n".join(lines)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--data", required=True)
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--hidden", type=int, default=128)
    ap.add_argument("--bptt", type=int, default=100)
    ap.add_argument("--batch", type=int, default=32)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--eval-every", type=int, default=500)
    ap.add_argument("--out", default=None, help="directory for checkpoints and metrics")
    ap.add_argument("--json", action="store_true")
    a = ap.parse_args()
    rows = paired(a.data, a.steps, hidden=a.hidden, bptt=a.bptt, batch=a.batch, seed=a.seed,
                  eval_every=a.eval_every, out_dir=a.out)
    if a.json:
        print(json.dumps([r.__dict__ for r in rows]))
    else:
        print(format_table(rows))


if __name__ == "__main__":
    main()
