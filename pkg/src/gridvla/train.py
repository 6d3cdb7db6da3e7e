"""Modality-mixture training: per-sample modality draws, Adam loop, checkpoints.

Each batch element is an independent (episode step, modality) draw, so the
mixture weights act as sampling probabilities rather than loss coefficients;
steps without thoughts always fall back to the act modality. Degenerate
weight vectors (1,0,0) / (0,1,0) consume no randomness on the modality draw,
so their batch streams coincide exactly with dedicated single-modality
assemblers over the same step stream.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import codec, net
from .checkpoint import TrainerState, load_trainer, save_trainer
from .codec import ModalityConfig, TokenSample
from .dataset import load_dataset
from .errors import TrainingDiverged, UnsatisfiableConfigError
from .net import NetConfig
from .oracle import Demonstration
from .vocab import VocabConfig, Vocabulary

MODALITIES = ("act", "think", "follow")


@dataclass(frozen=True)
class NetOptions:
    """Architecture knobs; vocab size is derived from the dataset."""

    d_model: int = 128
    n_heads: int = 4
    n_layers: int = 4
    context_len: int = 256
    init_scale: float = 0.02
    tie_embeddings: bool = False
    dtype: str = "float32"


@dataclass(frozen=True)
class TrainConfig:
    dataset_path: str
    out_dir: str
    modality: ModalityConfig = ModalityConfig()
    net: NetOptions = NetOptions()
    batch_size: int = 32
    # desk-scale default; the full-finetuning reference recipe at 3B scale
    # used 2e-5 with the same optimizer
    learning_rate: float = 3e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 10
    checkpoint_epochs: tuple[int, ...] = (5, 7, 10)
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise UnsatisfiableConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        bad = [e for e in self.checkpoint_epochs if not (1 <= e <= self.epochs)]
        if bad:
            raise UnsatisfiableConfigError(
                f"checkpoint_epochs {bad} outside [1, {self.epochs}]"
            )

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["checkpoint_epochs"] = list(self.checkpoint_epochs)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "modality" in d and isinstance(d["modality"], dict):
            d["modality"] = ModalityConfig(**d["modality"])
        if "net" in d and isinstance(d["net"], dict):
            d["net"] = NetOptions(**d["net"])
        if "checkpoint_epochs" in d:
            d["checkpoint_epochs"] = tuple(d["checkpoint_epochs"])
        return cls(**d)

    def digest(self) -> str:
        raw = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(raw.encode("utf-8")).hexdigest()


def sample_modality(cfg: ModalityConfig, has_thought: bool, rng: np.random.Generator) -> str:
    """Categorical draw over (act, think, follow); thoughtless steps are act."""
    if not has_thought:
        return "act"
    # degenerate vectors skip the draw so their streams match dedicated assemblers
    for name, w in zip(MODALITIES, cfg.weights):
        if w == 1.0:
            return name
    u = rng.random()
    if u < cfg.w_act:
        return "act"
    if u < cfg.w_act + cfg.w_think:
        return "think"
    return "follow"


def flat_step_index(demos: list[Demonstration]) -> list[tuple[int, int]]:
    return [(e, t) for e, d in enumerate(demos) for t in range(len(d.steps))]


def make_batch(
    demos: list[Demonstration],
    flat: list[tuple[int, int]],
    cfg: "TrainConfig",
    vocab: Vocabulary,
    rng: np.random.Generator,
) -> list[TokenSample]:
    """batch_size uniform step draws, each with an independent modality draw."""
    samples = []
    for _ in range(cfg.batch_size):
        e, t = flat[int(rng.integers(len(flat)))]
        step = demos[e].steps[t]
        modality = sample_modality(cfg.modality, step.thought is not None, rng)
        samples.append(codec.assemble(demos[e], t, modality, cfg.modality, vocab))
    return samples


def check_satisfiable(demos: list[Demonstration], cfg: TrainConfig) -> None:
    annotated = sum(1 for d in demos for s in d.steps if s.thought is not None)
    if annotated == 0 and cfg.modality.w_act == 0.0:
        raise UnsatisfiableConfigError(
            "w_act = 0 but the dataset has no annotated steps: no sample can be drawn"
        )
    if not demos or all(len(d.steps) == 0 for d in demos):
        raise UnsatisfiableConfigError("dataset has no steps")


def adam_update(state: TrainerState, grads: dict[str, np.ndarray], cfg: TrainConfig) -> None:
    state.adam_step += 1
    t = state.adam_step
    b1, b2, eps, lr = cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, cfg.learning_rate
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for name, g in grads.items():
        m = state.adam_m[name]
        v = state.adam_v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        state.params.arrays[name] -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


def _fresh_state(net_cfg: NetConfig, seed: int) -> TrainerState:
    params = net.init(net_cfg)
    rng = np.random.default_rng(np.random.SeedSequence((seed, 1)))
    return TrainerState(
        params=params,
        adam_m=net.zeros_like_params(params),
        adam_v=net.zeros_like_params(params),
        adam_step=0,
        epoch=0,
        rng_state=rng.bit_generator.state,
        loss_stats={m: {"sum": 0.0, "count": 0} for m in MODALITIES},
    )


def train(cfg: TrainConfig, resume_from: Optional[str] = None) -> list[str]:
    """Run the optimization loop; returns the checkpoint paths written."""
    header, demos = load_dataset(cfg.dataset_path)
    check_satisfiable(demos, cfg)
    vocab = Vocabulary(VocabConfig(header.grid_size, cfg.modality.action_bins))
    net_cfg = NetConfig(vocab_size=len(vocab), seed=cfg.seed, **dataclasses.asdict(cfg.net))

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "vocab.json").write_text(vocab.manifest_json() + "\n", encoding="utf-8")
    train_meta = {
        "chunk_size": cfg.modality.chunk_size,
        "thought_format": cfg.modality.thought_format,
        "grid_size": header.grid_size,
        "action_bins": cfg.modality.action_bins,
        "train_config": cfg.to_dict(),
    }
    (out_dir / "meta.json").write_text(
        json.dumps(train_meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

    if resume_from is not None:
        state, ck_header = load_trainer(
            resume_from,
            expected_vocab_hash=vocab.content_hash(),
            expected_train_digest=cfg.digest(),
        )
        metrics_mode = "a"
    else:
        state = _fresh_state(net_cfg, cfg.seed)
        metrics_mode = "w"

    rng = np.random.default_rng()
    rng.bit_generator.state = state.rng_state

    flat = flat_step_index(demos)
    steps_per_epoch = max(1, math.ceil(len(flat) / cfg.batch_size))
    written: list[str] = []
    metrics_path = out_dir / "metrics.jsonl"

    with open(metrics_path, metrics_mode, encoding="utf-8") as metrics:
        for epoch in range(state.epoch + 1, cfg.epochs + 1):
            t0 = time.perf_counter()
            epoch_stats = {m: [0.0, 0] for m in MODALITIES}
            for _ in range(steps_per_epoch):
                samples = make_batch(demos, flat, cfg, vocab, rng)
                try:
                    value, per_sample, grads = net.loss_and_grad(
                        state.params, samples, pad_id=vocab.pad_id
                    )
                except FloatingPointError as exc:
                    raise TrainingDiverged(
                        f"epoch {epoch}: {exc}; last good checkpoint: "
                        f"{written[-1] if written else 'none'}"
                    ) from exc
                adam_update(state, grads, cfg)
                for s, l in zip(samples, per_sample):
                    epoch_stats[s.modality][0] += float(l)
                    epoch_stats[s.modality][1] += 1
            state.epoch = epoch
            state.rng_state = rng.bit_generator.state
            for m in MODALITIES:
                state.loss_stats[m]["sum"] += epoch_stats[m][0]
                state.loss_stats[m]["count"] += epoch_stats[m][1]

            record = {"epoch": epoch, "adam_step": state.adam_step}
            total_sum = sum(epoch_stats[m][0] for m in MODALITIES)
            total_n = sum(epoch_stats[m][1] for m in MODALITIES)
            record["loss"] = total_sum / total_n
            for m in MODALITIES:
                s, n = epoch_stats[m]
                record[f"loss_{m}"] = (s / n) if n else None
                record[f"samples_{m}"] = n
            record["wall_time_s"] = time.perf_counter() - t0
            metrics.write(json.dumps(record, sort_keys=True) + "\n")
            metrics.flush()

            if epoch in cfg.checkpoint_epochs:
                path = out_dir / f"checkpoint_epoch{epoch}.ckpt"
                save_trainer(
                    path,
                    state,
                    vocab_hash=vocab.content_hash(),
                    train_config_digest=cfg.digest(),
                    train_meta=train_meta,
                )
                written.append(str(path))
    return written
