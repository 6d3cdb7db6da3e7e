import json
from pathlib import Path

import numpy as np
import pytest

from gridvla import codec, net, oracle
from gridvla.checkpoint import load_trainer, read_header, save_trainer
from gridvla.codec import ModalityConfig
from gridvla.dataset import load_dataset, save_dataset
from gridvla.errors import CheckpointError, TrainingDiverged, UnsatisfiableConfigError
from gridvla.train import (
    NetOptions,
    TrainConfig,
    flat_step_index,
    make_batch,
    sample_modality,
    train,
)
from gridvla.vocab import VocabConfig, Vocabulary

TINY_NET = NetOptions(d_model=32, n_heads=2, n_layers=2, context_len=96)


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    annotated = [oracle.demo("place_at", 2, s) for s in range(20)]
    save_dataset(root / "annotated.jsonl", annotated, grid_size=8)
    mixed = [
        oracle.demo("place_at", 2, s, annotate_thoughts=(s % 2 == 0)) for s in range(20)
    ]
    save_dataset(root / "mixed.jsonl", mixed, grid_size=8)
    bare = [oracle.demo("place_at", 2, s, annotate_thoughts=False) for s in range(6)]
    save_dataset(root / "bare.jsonl", bare, grid_size=8)
    return root


def small_cfg(data_dir, out_dir, **kw):
    base = dict(
        dataset_path=str(data_dir / "annotated.jsonl"),
        out_dir=str(out_dir),
        net=TINY_NET,
        epochs=2,
        checkpoint_epochs=(2,),
        seed=0,
    )
    base.update(kw)
    return TrainConfig(**base)


# --- modality sampling --------------------------------------------------------

def test_sample_modality_frequencies():
    cfg = ModalityConfig()
    rng = np.random.default_rng(0)
    n = 20_000
    counts = {"act": 0, "think": 0, "follow": 0}
    for _ in range(n):
        counts[sample_modality(cfg, True, rng)] += 1
    assert abs(counts["act"] / n - 0.25) < 0.02
    assert abs(counts["think"] / n - 0.5) < 0.02
    assert abs(counts["follow"] / n - 0.25) < 0.02


def test_sample_modality_degenerate():
    rng = np.random.default_rng(0)
    act_only = ModalityConfig(w_act=1.0, w_think=0.0, w_follow=0.0)
    assert all(sample_modality(act_only, True, rng) == "act" for _ in range(50))
    think_only = ModalityConfig(w_act=0.0, w_think=1.0, w_follow=0.0)
    assert all(sample_modality(think_only, True, rng) == "think" for _ in range(50))


def test_sample_modality_renormalizes_without_thought():
    rng = np.random.default_rng(0)
    think_only = ModalityConfig(w_act=0.0, w_think=1.0, w_follow=0.0)
    assert sample_modality(think_only, False, rng) == "act"
    mixed = ModalityConfig()
    assert all(sample_modality(mixed, False, rng) == "act" for _ in range(50))


# --- batch construction ---------------------------------------------------------

def test_make_batch_deterministic(data_dir, tmp_path):
    cfg = small_cfg(data_dir, tmp_path)
    _, demos = load_dataset(cfg.dataset_path)
    vocab = Vocabulary(VocabConfig(8, 256))
    flat = flat_step_index(demos)
    a = [make_batch(demos, flat, cfg, vocab, np.random.default_rng(5)) for _ in range(3)]
    b = [make_batch(demos, flat, cfg, vocab, np.random.default_rng(5)) for _ in range(3)]
    assert a == b


def test_batch_stream_subsumes_single_modality_assemblers(data_dir, tmp_path):
    """(1,0,0) and (0,1,0) streams equal dedicated assemblers bitwise."""
    _, demos = load_dataset(data_dir / "annotated.jsonl")
    vocab = Vocabulary(VocabConfig(8, 256))
    flat = flat_step_index(demos)

    def dedicated_stream(modality, batches, batch_size=32, seed=5):
        rng = np.random.default_rng(seed)
        mc = ModalityConfig()
        out = []
        for _ in range(batches):
            batch = []
            for _ in range(batch_size):
                e, t = flat[int(rng.integers(len(flat)))]
                batch.append(codec.assemble(demos[e], t, modality, mc, vocab))
            out.append(batch)
        return out

    for weights, modality in (((1.0, 0.0, 0.0), "act"), ((0.0, 1.0, 0.0), "think")):
        cfg = small_cfg(
            data_dir,
            tmp_path,
            modality=ModalityConfig(w_act=weights[0], w_think=weights[1], w_follow=weights[2]),
        )
        rng = np.random.default_rng(5)
        mixed = [make_batch(demos, flat, cfg, vocab, rng) for _ in range(10)]
        dedicated = dedicated_stream(modality, 10)
        # TokenSample equality is exact tuple equality, modality tag aside
        got = [[(s.input, s.target, s.loss_mask) for s in b] for b in mixed]
        want = [[(s.input, s.target, s.loss_mask) for s in b] for b in dedicated]
        assert got == want


def test_partially_annotated_stream(data_dir, tmp_path):
    _, demos = load_dataset(data_dir / "mixed.jsonl")
    vocab = Vocabulary(VocabConfig(8, 256))
    flat = flat_step_index(demos)
    cfg = small_cfg(
        data_dir,
        tmp_path,
        dataset_path=str(data_dir / "mixed.jsonl"),
        modality=ModalityConfig(w_act=0.0, w_think=1.0, w_follow=0.0),
    )
    batch = make_batch(demos, flat, cfg, vocab, np.random.default_rng(0))
    for s in batch:
        assert s.modality in ("act", "think")
    assert {s.modality for s in batch} == {"act", "think"}


def test_unsatisfiable_config_rejected(data_dir, tmp_path):
    cfg = small_cfg(
        data_dir,
        tmp_path,
        dataset_path=str(data_dir / "bare.jsonl"),
        modality=ModalityConfig(w_act=0.0, w_think=1.0, w_follow=0.0),
    )
    with pytest.raises(UnsatisfiableConfigError):
        train(cfg)


def test_train_config_validation(data_dir, tmp_path):
    with pytest.raises(UnsatisfiableConfigError):
        small_cfg(data_dir, tmp_path, epochs=2, checkpoint_epochs=(5,))


# --- training loop ---------------------------------------------------------------

def test_train_writes_checkpoints_metrics_and_manifest(data_dir, tmp_path):
    out = tmp_path / "run"
    cfg = small_cfg(data_dir, out, epochs=2, checkpoint_epochs=(1, 2))
    written = train(cfg)
    assert [Path(p).name for p in written] == [
        "checkpoint_epoch1.ckpt",
        "checkpoint_epoch2.ckpt",
    ]
    records = [
        json.loads(l)
        for l in (out / "metrics.jsonl").read_text().splitlines()
    ]
    assert [r["epoch"] for r in records] == [1, 2]
    for r in records:
        for m in ("act", "think", "follow"):
            assert r[f"samples_{m}"] > 0
            assert np.isfinite(r[f"loss_{m}"])
    assert (out / "vocab.json").exists()
    header = read_header(written[-1])
    assert header["train_meta"]["chunk_size"] == 1


def test_train_deterministic(data_dir, tmp_path):
    cfg1 = small_cfg(data_dir, tmp_path / "a", epochs=1, checkpoint_epochs=(1,))
    cfg2 = small_cfg(data_dir, tmp_path / "b", epochs=1, checkpoint_epochs=(1,))
    (p1,) = train(cfg1)
    (p2,) = train(cfg2)
    s1, _ = load_trainer(p1)
    s2, _ = load_trainer(p2)
    for name in s1.params.names():
        assert np.array_equal(s1.params[name], s2.params[name])


def test_checkpoint_roundtrip_bytes(data_dir, tmp_path):
    cfg = small_cfg(data_dir, tmp_path / "run")
    (path,) = train(cfg)
    raw = Path(path).read_bytes()
    state, header = load_trainer(path)
    again = tmp_path / "again.ckpt"
    save_trainer(
        again,
        state,
        vocab_hash=header["vocab_hash"],
        train_config_digest=header["train_config_digest"],
        train_meta=header["train_meta"],
    )
    assert again.read_bytes() == raw


def test_checkpoint_refuses_wrong_vocab_hash(data_dir, tmp_path):
    cfg = small_cfg(data_dir, tmp_path / "run")
    (path,) = train(cfg)
    with pytest.raises(CheckpointError):
        load_trainer(path, expected_vocab_hash="0" * 64)


def test_checkpoint_refuses_wrong_version(data_dir, tmp_path):
    cfg = small_cfg(data_dir, tmp_path / "run")
    (path,) = train(cfg)
    raw = bytearray(Path(path).read_bytes())
    # bump the version integer inside the JSON header
    idx = raw.find(b'"format_version":1')
    raw[idx : idx + len(b'"format_version":1')] = b'"format_version":9'
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError):
        load_trainer(bad)


def test_resume_matches_uninterrupted_run(data_dir, tmp_path):
    out = tmp_path / "run"
    cfg = small_cfg(data_dir, out, epochs=4, checkpoint_epochs=(2, 4))
    paths = train(cfg)
    final, _ = load_trainer(paths[-1])
    final_params = {k: v.copy() for k, v in final.params.arrays.items()}

    resumed_paths = train(cfg, resume_from=paths[0])
    assert [Path(p).name for p in resumed_paths] == ["checkpoint_epoch4.ckpt"]
    resumed, _ = load_trainer(resumed_paths[-1])
    for name in final.params.names():
        assert np.array_equal(final_params[name], resumed.params[name]), name


def test_resume_refuses_changed_config(data_dir, tmp_path):
    cfg = small_cfg(data_dir, tmp_path / "run", epochs=2, checkpoint_epochs=(1, 2))
    paths = train(cfg)
    changed = small_cfg(
        data_dir, tmp_path / "run", epochs=2, checkpoint_epochs=(1, 2), learning_rate=1e-3
    )
    with pytest.raises(CheckpointError):
        train(changed, resume_from=paths[0])


def test_divergence_aborts_with_last_good_checkpoint(data_dir, tmp_path):
    # a step this large overflows float32 activations into inf/nan
    cfg = small_cfg(
        data_dir, tmp_path / "run", epochs=3, checkpoint_epochs=(1,), learning_rate=1e30
    )
    with np.errstate(all="ignore"):
        with pytest.raises(TrainingDiverged):
            train(cfg)


def test_memorization_sanity(data_dir, tmp_path):
    """5 episodes, 200 epochs: the act-mode training loss memorizes to ~0."""
    demos = [oracle.demo("place_at", 2, s) for s in range(5)]
    path = tmp_path / "tiny.jsonl"
    save_dataset(path, demos, grid_size=8)
    cfg = TrainConfig(
        dataset_path=str(path),
        out_dir=str(tmp_path / "run"),
        net=NetOptions(d_model=48, n_heads=2, n_layers=2, context_len=96),
        learning_rate=1.5e-3,  # overfit fast: 5 episodes is 2 batches/epoch
        epochs=200,
        checkpoint_epochs=(200,),
        seed=1,
    )
    (ckpt,) = train(cfg)
    state, _ = load_trainer(ckpt)
    vocab = Vocabulary(VocabConfig(8, 256))
    mc = cfg.modality
    act_samples = [
        codec.assemble(d, t, "act", mc, vocab)
        for d in demos
        for t in range(len(d.steps))
    ]
    final_act_loss = net.loss(state.params, act_samples, pad_id=vocab.pad_id)
    assert final_act_loss < 0.05, final_act_loss


def test_objective_equivalence_in_expectation(data_dir, tmp_path):
    """The per-sample Monte Carlo draw estimates the weighted per-modality sum."""
    _, demos = load_dataset(data_dir / "annotated.jsonl")
    vocab = Vocabulary(VocabConfig(8, 256))
    mc = ModalityConfig()  # (0.25, 0.5, 0.25)
    net_cfg = net.NetConfig(vocab_size=len(vocab), d_model=32, n_heads=2, n_layers=1,
                            context_len=96, seed=9)
    params = net.init(net_cfg)
    flat = flat_step_index(demos)

    def batched_losses(samples):
        out = []
        for i in range(0, len(samples), 64):
            chunk = samples[i : i + 64]
            tokens, score = net.batch_arrays(chunk, vocab.pad_id, net_cfg.context_len)
            logits, _ = net._forward_batch(params, tokens, need_cache=False)
            _, per, _ = net._nll_and_dlogits(logits, tokens, score, False, True)
            out.extend(per.tolist())
        return np.array(out)

    # exact weighted expectation over every (step, modality) pair
    exact = 0.0
    for modality, w in zip(("act", "think", "follow"), mc.weights):
        samples = [codec.assemble(demos[e], t, modality, mc, vocab) for e, t in flat]
        exact += w * batched_losses(samples).mean()

    # Monte Carlo side: 10^4 independent (step, modality) draws
    rng = np.random.default_rng(123)
    n = 10_000
    drawn = []
    for _ in range(n):
        e, t = flat[int(rng.integers(len(flat)))]
        modality = sample_modality(mc, True, rng)
        drawn.append(codec.assemble(demos[e], t, modality, mc, vocab))
    losses = batched_losses(drawn)
    se = losses.std(ddof=1) / np.sqrt(n)
    assert abs(losses.mean() - exact) < 3 * se, (losses.mean(), exact, se)
