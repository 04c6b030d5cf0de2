"""Command-line interface: ``sfrnn {train,eval,gradcheck,sample} [flags]``.

Exit status: 0 on success, 1 on usage errors, 2 on runtime failures
(diverged training, I/O or format errors, failed gradient check).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import Optional

from . import corpus as C
from .backprop import GRAD_MODES
from .gradcheck import DEFAULT_EPS, DEFAULT_TOL, check, check_all
from .model import ModelConfig
from .tensor import ShapeError
from .trainer import CheckpointError, TrainConfig, TrainingDiverged, evaluate, load_checkpoint, sample, train


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _on_off(token: str) -> bool:
    if token not in ("on", "off"):
        raise argparse.ArgumentTypeError(f"expected on or off, got {token!r}")
    return token == "on"


def _clip(token: str) -> Optional[float]:
    if token == "off":
        return None
    try:
        v = float(token)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive number or off, got {token!r}") from None
    if v <= 0:
        raise argparse.ArgumentTypeError(f"clip must be positive, got {token!r}")
    return v


def _cell(token: str) -> str:
    names = {"lstm": "lstm", "rnn": "simple_rnn", "simple_rnn": "simple_rnn"}
    if token not in names:
        raise argparse.ArgumentTypeError(f"expected lstm or rnn, got {token!r}")
    return names[token]


def _model_flags(p: argparse.ArgumentParser, hidden_default: Optional[int]) -> None:
    p.add_argument("--cell", type=_cell, default="lstm", help="lstm|rnn (default lstm)")
    p.add_argument("--feedback", type=_on_off, default=True, help="surprisal feedback on|off (default on)")
    p.add_argument("--hidden", type=int, default=hidden_default, help=f"hidden units N (default {hidden_default})")
    p.add_argument("--bptt", type=int, default=100, help="BPTT window S (default 100)")
    p.add_argument("--cell-convention", choices=("paper", "standard"), default="paper",
                   help="cell update c=(1-f)c'+iu (paper) or c=fc'+iu (standard); default paper")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="sfrnn", description="Surprisal-feedback recurrent character models.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train a model on a byte corpus")
    t.add_argument("--data", required=True, help="raw byte corpus")
    t.add_argument("--max-bytes", type=int, default=None, help="use only the first N bytes of --data")
    _model_flags(t, 128)
    t.add_argument("--batch", type=int, default=128, help="batch lanes B (default 128)")
    t.add_argument("--seq-len", type=int, default=10000, help="sequence length L per sampled lane (default 10000)")
    t.add_argument("--lr", type=float, default=0.001, help="learning rate (default 0.001)")
    t.add_argument("--decay", type=float, default=0.95, help="squared-gradient EMA decay (default 0.95)")
    t.add_argument("--clip", type=_clip, default=None, help="elementwise gradient clip value or off (default off)")
    t.add_argument("--grad-mode", choices=GRAD_MODES, default="exact", help="surprisal-path gradient (default exact)")
    t.add_argument("--steps", type=int, default=1000, help="number of updates (default 1000)")
    t.add_argument("--eval-every", type=int, default=100, help="validation interval in updates (default 100)")
    t.add_argument("--seed", type=int, default=1, help="random seed (default 1)")
    t.add_argument("--ckpt", default="sfrnn.ckpt", help="checkpoint path (default sfrnn.ckpt)")
    t.add_argument("--metrics", default="metrics.jsonl", help="metrics JSON-lines path (default metrics.jsonl)")
    t.add_argument("--wallclock", type=_on_off, default=False,
                   help="record wallclock_seconds in metrics (default off; on breaks byte-identical reruns)")
    t.add_argument("--print-config", action="store_true", help="print the resolved configuration and exit")

    e = sub.add_parser("eval", help="bits per character of a checkpoint on a split")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--max-bytes", type=int, default=None)
    e.add_argument("--split", choices=("train", "valid", "test"), default="test")
    e.add_argument("--batch", type=int, default=128, help="evaluation shards (default 128)")
    e.add_argument("--hidden", type=int, default=None, help="expected hidden size; mismatch is an error")
    e.add_argument("--print-config", action="store_true")

    g = sub.add_parser("gradcheck", help="finite-difference check of all analytic gradients")
    _model_flags(g, 4)
    g.add_argument("--inputs", type=int, default=5, help="alphabet size M for the check (default 5)")
    g.add_argument("--batch", type=int, default=2)
    g.set_defaults(bptt=4)
    g.add_argument("--grad-mode", choices=GRAD_MODES, default="exact")
    g.add_argument("--eps", type=float, default=DEFAULT_EPS)
    g.add_argument("--tol", type=float, default=DEFAULT_TOL)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--all", action="store_true", help="check all four cell x feedback combinations (health gate)")
    g.add_argument("--json", action="store_true", help="print machine-readable JSON instead of the report")
    g.add_argument("--print-config", action="store_true")

    s = sub.add_parser("sample", help="draw bytes from a checkpoint (inspection aid, not part of the method)")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--length", type=int, default=200)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--print-config", action="store_true")
    return ap


def _train_config(a) -> TrainConfig:
    model = ModelConfig(cell=a.cell, N=a.hidden, feedback=a.feedback, S=a.bptt, convention=a.cell_convention)
    return TrainConfig(model=model, data=a.data, batch=a.batch, seq_len=a.seq_len, steps=a.steps,
                       eval_every=a.eval_every, seed=a.seed, grad_mode=a.grad_mode, lr=a.lr, decay=a.decay,
                       clip=a.clip, ckpt=a.ckpt, metrics=a.metrics, max_bytes=a.max_bytes,
                       record_wallclock=a.wallclock)


def _print_config(d: dict) -> None:
    print(json.dumps(d, sort_keys=True))


def _cmd_train(a) -> int:
    cfg = _train_config(a)
    if a.print_config:
        _print_config(cfg.to_dict())
        return 0
    _, _, records = train(cfg)
    if records:
        r = records[-1]
        print(f"step {r.step} train_bpc {r.train_bpc:.6f} smoothed_train_bpc {r.smoothed_train_bpc:.6f} "
              f"valid_bpc {r.valid_bpc:.6f}")
    else:
        print("step 0 (initial checkpoint only)")
    return 0


def _cmd_eval(a) -> int:
    if a.print_config:
        _print_config(vars(a))
        return 0
    params, _, cfg, _ = load_checkpoint(a.ckpt)
    if a.hidden is not None and a.hidden != cfg.N:
        expect = ModelConfig(cell=cfg.cell, M=cfg.M, N=a.hidden, S=cfg.S)
        load_checkpoint(a.ckpt, expect)  # raises ShapeError naming both shapes
    corpus = C.load(a.data, a.max_bytes)
    print(f"{evaluate(params, cfg, corpus, a.split, a.batch):.6f}")
    return 0


def _cmd_gradcheck(a) -> int:
    if a.print_config:
        _print_config(vars(a))
        return 0
    if a.all:
        reports = check_all(a.seed, a.grad_mode, a.eps, a.tol, M=a.inputs, N=a.hidden, S=a.bptt,
                            batch=a.batch, convention=a.cell_convention)
    else:
        cfg = ModelConfig(cell=a.cell, M=a.inputs, N=a.hidden, S=a.bptt, feedback=a.feedback,
                          convention=a.cell_convention)
        reports = [check(cfg, a.seed, a.grad_mode, a.eps, a.tol, a.batch)]
    for r in reports:
        print(r.to_json() if a.json else r.format())
    ok = all(r.passed for r in reports)
    if a.all and not a.json:
        print("healthy" if ok else "UNHEALTHY")
    return 0 if ok else 2


def _cmd_sample(a) -> int:
    if a.print_config:
        _print_config(vars(a))
        return 0
    params, _, cfg, _ = load_checkpoint(a.ckpt)
    sys.stdout.buffer.write(sample(params, cfg, a.length, a.seed))
    sys.stdout.buffer.write(b"\n")
    sys.stdout.flush()
    return 0


COMMANDS = {"train": _cmd_train, "eval": _cmd_eval, "gradcheck": _cmd_gradcheck, "sample": _cmd_sample}


def run(argv: Optional[list[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "hidden", 1) is not None and getattr(args, "hidden", 1) < 1:
            raise UsageError(f"--hidden must be positive, got {args.hidden}")
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    try:
        return COMMANDS[args.command](args)
    except ValueError as exc:
        # bad flag combinations surface from config validation; corrupt files and shape mismatches too
        if isinstance(exc, (CheckpointError, ShapeError, C.CorpusError)):
            print(f"error: {exc}", file=sys.stderr)
            return 2
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (TrainingDiverged, OSError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    sys.exit(run())


if __name__ == "__main__":
    main()
