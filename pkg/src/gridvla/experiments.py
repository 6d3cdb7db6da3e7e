"""Experiment orchestration: dataset building, training sweeps, study runs.

Datasets for the scaling sweep follow the 1:2:1 composition over 2/3/4-object
variants, and smaller sizes are strict prefixes of larger ones (fixed subsets
of the same seeded demo stream), so the sweep varies only the amount of data.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence

from . import oracle
from .codec import ModalityConfig
from .dataset import save_dataset
from .train import NetOptions, TrainConfig, train

# block offsets keep per-variant demo seeds disjoint and prefix-stable
_VARIANT_SEED_OFFSET = {2: 0, 3: 10_000, 4: 20_000}

PARADIGM_WEIGHTS = {
    "mixed": (0.25, 0.5, 0.25),
    "act_only": (1.0, 0.0, 0.0),
    "think_only": (0.0, 1.0, 0.0),
    "follow_only": (0.0, 0.0, 1.0),
}

SWEEP_NET = NetOptions(d_model=64, n_heads=2, n_layers=2, context_len=160)


def mixture_config(paradigm: str, **kw) -> ModalityConfig:
    w = PARADIGM_WEIGHTS[paradigm]
    return ModalityConfig(w_act=w[0], w_think=w[1], w_follow=w[2], **kw)


def build_mixed_dataset(
    path: str | Path,
    family: str,
    total: int,
    seed_start: int = 0,
    grid_size: int = 8,
) -> None:
    """total demos for one family, split 1:2:1 over 2/3/4 objects."""
    counts = {2: total // 4, 3: total // 2, 4: total // 4}
    counts[3] += total - sum(counts.values())
    demos = []
    for n_objects in (2, 3, 4):
        base = seed_start + _VARIANT_SEED_OFFSET[n_objects]
        for i in range(counts[n_objects]):
            demos.append(oracle.demo(family, n_objects, base + i, grid_size=grid_size))
    save_dataset(path, demos, grid_size=grid_size)


def train_paradigm(
    dataset_path: str | Path,
    out_dir: str | Path,
    paradigm: str,
    seed: int,
    net: NetOptions = SWEEP_NET,
    epochs: int = 20,
    learning_rate: float = 3e-4,
    batch_size: int = 32,
) -> list[str]:
    """One training run; hierarchical trains a think-only high-level model
    and a follow-only low-level model under high/ and low/."""
    out_dir = Path(out_dir)
    if paradigm == "hierarchical":
        written = []
        for sub, p in (("high", "think_only"), ("low", "follow_only")):
            written += train_paradigm(
                dataset_path, out_dir / sub, p, seed, net, epochs, learning_rate, batch_size
            )
        return written
    cfg = TrainConfig(
        dataset_path=str(dataset_path),
        out_dir=str(out_dir),
        modality=mixture_config(paradigm),
        net=net,
        batch_size=batch_size,
        learning_rate=learning_rate,
        epochs=epochs,
        checkpoint_epochs=(epochs,),
        seed=seed,
    )
    return train(cfg)


def run_sweep_training(
    root: str | Path,
    sizes: Sequence[int],
    paradigms: Sequence[str],
    seeds: Sequence[int],
    family: str = "place_at",
    net: NetOptions = SWEEP_NET,
    epochs_per_size: Optional[dict[int, int]] = None,
    data_seed_start: int = 0,
    grid_size: int = 8,
    learning_rate: float = 3e-4,
    skip_existing: bool = True,
) -> None:
    """Train the (size, paradigm, seed) grid into the scaling-report layout."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for size in sizes:
        data_path = root / f"demos_{family}_{size}.jsonl"
        if not data_path.exists():
            build_mixed_dataset(data_path, family, size, data_seed_start, grid_size)
        # roughly constant number of optimizer updates across sizes
        if epochs_per_size and size in epochs_per_size:
            epochs = epochs_per_size[size]
        else:
            epochs = max(8, round(6000 / max(size, 1) / 4))
        for paradigm in paradigms:
            for seed in seeds:
                out = root / f"size{size}" / paradigm / f"seed{seed}"
                if skip_existing and _has_checkpoint(out, paradigm):
                    continue
                train_paradigm(
                    data_path, out, paradigm, seed, net=net, epochs=epochs,
                    learning_rate=learning_rate,
                )


def _has_checkpoint(out: Path, paradigm: str) -> bool:
    if paradigm == "hierarchical":
        return any((out / "high").glob("checkpoint_epoch*.ckpt")) and any(
            (out / "low").glob("checkpoint_epoch*.ckpt")
        )
    return any(out.glob("checkpoint_epoch*.ckpt"))
