import json
import math

import numpy as np
import pytest

from sfrnn import corpus as C
from sfrnn.model import ModelConfig, Params, init_params
from sfrnn.optimizer import OptState
from sfrnn.tensor import ShapeError
from sfrnn.trainer import (CheckpointError, MetricsRecord, TrainConfig, TrainingDiverged, checkpoint_bytes,
                           config_hash, evaluate, load_checkpoint, params_checksum, parse_checkpoint, sample,
                           save_checkpoint, train)


def _cfg(path, tmp_path, **kw):
    model = kw.pop("model", ModelConfig(cell="lstm", N=8, S=10))
    base = dict(model=model, data=path, batch=4, seq_len=50, steps=6, eval_every=3, seed=3,
                ckpt=str(tmp_path / "c.bin"), metrics=str(tmp_path / "m.jsonl"))
    base.update(kw)
    return TrainConfig(**base)


def test_train_config_defaults_follow_protocol():
    cfg = TrainConfig()
    assert (cfg.model.S, cfg.batch, cfg.seq_len, cfg.lr) == (100, 128, 10000, 0.001)
    assert cfg.model.M == 256 and cfg.grad_mode == "exact"
    with pytest.raises(ValueError):
        TrainConfig(seq_len=100)


def test_steps_zero_writes_initial_checkpoint_only(text_small, tmp_path):
    cfg = _cfg(text_small, tmp_path, steps=0)
    params, _, records = train(cfg)
    assert records == []
    loaded, _, mcfg, _ = load_checkpoint(cfg.ckpt)
    assert params_checksum(loaded) == params_checksum(init_params(cfg.model, cfg.seed))
    assert open(cfg.metrics).read() == ""


def test_metrics_stream_fields_and_counters(text_small, tmp_path):
    cfg = _cfg(text_small, tmp_path)
    _, _, records = train(cfg)
    lines = [json.loads(l) for l in open(cfg.metrics)]
    assert len(lines) == 6
    assert all(list(l) == ["step", "chars_seen", "train_bpc", "smoothed_train_bpc", "valid_bpc",
                           "wallclock_seconds"] for l in lines)
    assert [l["step"] for l in lines] == list(range(1, 7))
    assert [l["chars_seen"] for l in lines] == [4 * 10 * k for k in range(1, 7)]
    assert [l["valid_bpc"] is not None for l in lines] == [False, False, True, False, False, True]
    assert all(l["train_bpc"] >= 0 and l["wallclock_seconds"] is None for l in lines)
    # smoothing: EMA 0.99 seeded with the first value
    assert lines[0]["smoothed_train_bpc"] == lines[0]["train_bpc"]
    assert lines[1]["smoothed_train_bpc"] == pytest.approx(0.99 * lines[0]["train_bpc"] + 0.01 * lines[1]["train_bpc"])


def test_training_resamples_and_resets_state(text_small, tmp_path, monkeypatch):
    calls = []
    real = C.resample

    def spy(cursor, corpus, split="train"):
        calls.append(split)
        return real(cursor, corpus, split)

    monkeypatch.setattr(C, "resample", spy)
    train(_cfg(text_small, tmp_path, seq_len=20, steps=6, eval_every=100))
    # L=20, S=10: two windows per sampled sequence
    assert calls == ["train"] * 3


def test_training_is_deterministic(text_small, tmp_path):
    outs = []
    for k in range(2):
        d = tmp_path / str(k)
        d.mkdir()
        cfg = _cfg(text_small, d)
        train(cfg)
        outs.append((open(cfg.metrics, "rb").read(), open(cfg.ckpt, "rb").read()))
    assert outs[0] == outs[1]


def test_wallclock_recording_is_opt_in(text_small, tmp_path):
    cfg = _cfg(text_small, tmp_path, steps=2, record_wallclock=True)
    _, _, records = train(cfg)
    assert all(r.wallclock_seconds is not None and r.wallclock_seconds >= 0 for r in records)


def test_training_reduces_loss(text_small, tmp_path):
    cfg = _cfg(text_small, tmp_path, steps=40, eval_every=40, seq_len=200, lr=0.01)
    _, _, records = train(cfg)
    assert records[-1].valid_bpc < 8.0
    assert np.mean([r.train_bpc for r in records[-5:]]) < np.mean([r.train_bpc for r in records[:5]])


def test_divergence_aborts_and_keeps_last_checkpoint(text_small, tmp_path):
    cfg = _cfg(text_small, tmp_path, steps=6, eval_every=3)
    train(cfg)
    good = open(cfg.ckpt, "rb").read()
    bad = _cfg(text_small, tmp_path, steps=6, eval_every=3, lr=float("nan"))
    with pytest.raises(TrainingDiverged):
        train(bad)
    assert open(cfg.ckpt, "rb").read() == good


# -- evaluation ---------------------------------------------------------------

@pytest.mark.parametrize("split", ["train", "valid", "test"])
def test_zero_model_is_exactly_eight_bits(text_small, split):
    corpus = C.load(text_small)
    cfg = ModelConfig(cell="lstm", N=8, S=10)
    assert evaluate(Params.zeros(cfg), cfg, corpus, split, batch=4) == 8.0


def test_evaluate_is_repeatable_and_pure(text_small):
    corpus = C.load(text_small)
    cfg = ModelConfig(cell="lstm", N=8, S=10)
    p = init_params(cfg, 1)
    before = params_checksum(p)
    a = evaluate(p, cfg, corpus, "valid", batch=4)
    b = evaluate(p, cfg, corpus, "valid", batch=4)
    assert a == b
    assert params_checksum(p) == before


def test_feedback_weights_change_eval_bpc(text_small):
    corpus = C.load(text_small)
    cfg = ModelConfig(cell="lstm", N=8, S=10)
    p = init_params(cfg, 1)
    q = p.copy()
    q.V[...] = 0.0
    assert evaluate(p, cfg, corpus, "valid", 4) != evaluate(q, cfg, corpus, "valid", 4)


def test_evaluate_matches_direct_shard_computation(text_small):
    # shards of len n: each predicts its bytes 1..n-1 from a fresh state, windows of S chained
    from sfrnn.model import CarryState, forward_window
    corpus = C.load(text_small)
    cfg = ModelConfig(cell="simple_rnn", N=6, S=7)
    p = init_params(cfg, 2)
    shards = C.eval_shards(corpus, "test", 3)
    total, count = [], 0
    for lane in range(3):
        seq = shards[lane]
        _, loss, _ = forward_window(p, cfg, CarryState.fresh(cfg, 1), seq[:-1, None], seq[1:, None])
        total.append(loss[0])
        count += len(seq) - 1
    ref = math.fsum(total) / count / math.log(2)
    assert evaluate(p, cfg, corpus, "test", 3) == pytest.approx(ref, rel=1e-12)


# -- checkpoints ---------------------------------------------------------------

def _ckpt_fixture(cell="lstm", N=4, convention="paper"):
    cfg = ModelConfig(cell=cell, M=256, N=N, S=10, convention=convention)
    p = init_params(cfg, 0)
    opt = OptState.fresh(p, decay=0.9, lr=0.002, eps=1e-7)
    for _, a in opt.acc.items():
        a[...] = np.random.default_rng(0).random(a.shape)
    return cfg, p, opt


@pytest.mark.parametrize("cell", ["lstm", "simple_rnn"])
@pytest.mark.parametrize("convention", ["paper", "standard"])
def test_checkpoint_round_trip_is_byte_identical(tmp_path, cell, convention):
    cfg, p, opt = _ckpt_fixture(cell, convention=convention)
    path = str(tmp_path / "a.bin")
    save_checkpoint(p, opt, cfg, path, "paper")
    p2, opt2, cfg2, mode = load_checkpoint(path)
    assert cfg2 == cfg and mode == "paper"
    assert config_hash(cfg2, mode) == config_hash(cfg, "paper")
    assert (opt2.decay, opt2.lr, opt2.eps) == (0.9, 0.002, 1e-7)
    save_checkpoint(p2, opt2, cfg2, str(tmp_path / "b.bin"), mode)
    assert open(path, "rb").read() == open(tmp_path / "b.bin", "rb").read()


def test_checkpoint_header_layout():
    cfg, p, opt = _ckpt_fixture()
    blob = checkpoint_bytes(p, opt, cfg)
    assert blob[:5] == b"SFRN\x01"
    assert blob[5:8] == bytes([1, 1, 0])
    assert int.from_bytes(blob[8:12], "little") == 256
    assert int.from_bytes(blob[12:16], "little") == 4
    assert int.from_bytes(blob[16:20], "little") == 10
    assert np.frombuffer(blob, "<f8", count=1, offset=20)[0] == p.W[0, 0]


def test_checkpoint_rejects_corruption():
    cfg, p, opt = _ckpt_fixture()
    blob = checkpoint_bytes(p, opt, cfg)
    with pytest.raises(CheckpointError, match="magic"):
        parse_checkpoint(b"XFRN" + blob[4:])
    with pytest.raises(CheckpointError, match="version"):
        parse_checkpoint(blob[:4] + b"\x02" + blob[5:])
    with pytest.raises(CheckpointError, match="bytes"):
        parse_checkpoint(blob[:-9])
    with pytest.raises(CheckpointError, match="truncated"):
        parse_checkpoint(blob[:10])


def test_checkpoint_cross_shape_names_both():
    cfg, p, opt = _ckpt_fixture(N=64)
    blob = checkpoint_bytes(p, opt, cfg)
    with pytest.raises(ShapeError) as err:
        parse_checkpoint(blob, ModelConfig(cell="lstm", N=128))
    assert "N=64" in str(err.value) and "N=128" in str(err.value)


# -- sampling ---------------------------------------------------------------------

def test_sample_examples():
    cfg = ModelConfig(cell="lstm", N=4, S=10)
    p = init_params(cfg, 0)
    assert sample(p, cfg, 0, seed=1) == b""
    assert sample(p, cfg, 50, seed=1) == sample(p, cfg, 50, seed=1)
    assert sample(p, cfg, 50, seed=1) != sample(p, cfg, 50, seed=2)


def test_zero_model_samples_uniform_bytes():
    cfg = ModelConfig(cell="simple_rnn", N=2, S=10)
    out = np.frombuffer(sample(Params.zeros(cfg), cfg, 25600, seed=3), dtype=np.uint8)
    counts = np.bincount(out, minlength=256)
    # chi-square with 255 dof; the 0.999 quantile is about 330
    chi2 = ((counts - 100.0) ** 2 / 100.0).sum()
    assert chi2 < 330
