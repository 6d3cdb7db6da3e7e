"""Episode rollouts per inference mode, metrics tables, substitution study,
scaling report.

The modality is fixed for a whole episode (it is a rollout parameter, not a
step parameter). Episode seeds derive from a base seed plus the episode
index, so every evaluated method sees the identical set of initial scenes.
Malformed generations never crash an episode: they degrade to no-op actions
and are counted.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import codec, net, oracle, world
from .checkpoint import load_trainer
from .errors import ConfigError, PlanningError
from .net import DecodeCache, ModelParameters
from .vocab import VocabConfig, Vocabulary, detokenize

MODES = ("act", "think", "follow", "hierarchical")
THOUGHT_TOKEN_CAP = 48


@dataclass(frozen=True)
class Policy:
    """A loaded checkpoint plus everything needed to talk to it."""

    params: ModelParameters
    vocab: Vocabulary
    chunk_size: int
    thought_format: str
    grid_size: int
    path: str = ""


def load_policy(path: str | Path) -> Policy:
    state, header = load_trainer(path)
    meta = header.get("train_meta", {})
    vocab = Vocabulary(
        VocabConfig(meta.get("grid_size", 8), meta.get("action_bins", 256))
    )
    if vocab.content_hash() != header["vocab_hash"]:
        # the checkpoint was trained against a different token table
        state, header = load_trainer(path, expected_vocab_hash=vocab.content_hash())
    return Policy(
        params=state.params,
        vocab=vocab,
        chunk_size=meta.get("chunk_size", 1),
        thought_format=meta.get("thought_format", "short"),
        grid_size=meta.get("grid_size", 8),
        path=str(path),
    )


@dataclass
class EpisodeResult:
    success: bool
    steps: int
    tokens_generated: int
    wall_time: float
    thought_log: list[tuple[int, str, str]] = field(default_factory=list)
    malformed: int = 0
    decode_steps: int = 0
    first_token_ok: int = 0
    invalid: bool = False


class OracleThoughtTracker:
    """Follows the scripted plan against the live state to supply thoughts."""

    def __init__(self, state: world.WorldState):
        self.plan = oracle.plan(state.task, state)
        self.task_text = state.task.text
        self.k = 0

    def _advance(self, state: world.WorldState) -> None:
        while self.k < len(self.plan) and oracle.subtask_done(state, self.plan[self.k]):
            self.k += 1

    def current(self, state: world.WorldState) -> Optional[oracle.Subtask]:
        self._advance(state)
        if self.k >= len(self.plan):
            return None
        return self.plan[self.k]

    def is_moving(self, state: world.WorldState) -> bool:
        sub = self.current(state)
        return sub is not None and sub.kind in oracle.MOVING_KINDS

    def thought(self, state: world.WorldState) -> Optional[oracle.Thought]:
        sub = self.current(state)
        if sub is None:
            return None
        label = None
        if sub.kind in oracle.MOVING_KINDS:
            target = world.remaining_target(state, sub)
            g = state.gripper_pos
            label = oracle.move_label((target.x - g.x, target.y - g.y))
        return oracle.Thought(subtask_text=sub.text, move_label=label, plan_text=self.task_text)


def _parse_chunk(gen: list[int], vocab: Vocabulary, chunk: int, grip: str):
    """Decoded tokens -> list of actions; failures become no-ops and count."""
    body = [t for t in gen if t != vocab.eos_id]
    actions, malformed = [], 0
    for i in range(chunk):
        triple = body[3 * i : 3 * i + 3]
        try:
            actions.append(vocab.parse_action_tokens(triple))
        except (ValueError, IndexError):
            actions.append(world.Action(0, 0, grip))
            malformed += 1
    return actions, malformed


def rollout(
    policy: Optional[Policy],
    task_family: str,
    n_objects: int,
    seed: int,
    mode: str,
    max_steps: Optional[int] = None,
    oracle_thoughts: bool = False,
    low_policy: Optional[Policy] = None,
    temperature: float = 0.0,
    rng: Optional[np.random.Generator] = None,
    grid_size: Optional[int] = None,
) -> EpisodeResult:
    """One episode under a fixed mode.

    mode "oracle" runs the scripted solver instead of a checkpoint (used for
    the completeness gate and live demos). In think mode with oracle_thoughts,
    the scripted thought replaces the model's own only while the scripted plan
    is in a moving subtask; follow mode consumes the scripted thought at every
    step.
    """
    if mode == "hierarchical" and low_policy is None:
        raise ConfigError("hierarchical mode needs a second (low-level) policy")
    if mode == "follow" and not oracle_thoughts and policy is not None:
        raise ConfigError("batch follow-mode evaluation needs oracle thoughts")

    g = grid_size or (policy.grid_size if policy else 8)
    state = world.reset(task_family, n_objects, seed, g)
    budget = max_steps or 4 * g * n_objects

    tracker = None
    if mode == "oracle" or oracle_thoughts or mode == "follow":
        try:
            tracker = OracleThoughtTracker(state)
        except PlanningError:
            return EpisodeResult(False, 0, 0, 0.0, invalid=True)

    res = EpisodeResult(False, 0, 0, 0.0)
    vocab = policy.vocab if policy else None
    chunk = policy.chunk_size if policy else 1

    while res.steps < budget and not world.check_success(state):
        if mode == "oracle":
            sub = tracker.current(state)
            if sub is None:
                break
            state = world.step(state, oracle.act(state, sub))
            res.steps += 1
            continue

        obs = codec.observe(state, vocab)
        prompt = codec.render_prompt(state.task, vocab)
        actions: list[world.Action] = []
        t0 = time.perf_counter()

        if mode == "act":
            prefix = [vocab.bos_id] + obs + prompt + [vocab.modality_ids["act"]]
            gen = net.decode(
                policy.params, prefix, {vocab.eos_id}, 3 * chunk + 1, temperature, rng
            )
            res.decode_steps += 1
            res.first_token_ok += int(gen[0] in vocab.dx_ids)
            res.tokens_generated += len(gen)
            actions, bad = _parse_chunk(gen, vocab, chunk, state.gripper_state)
            res.malformed += bad

        elif mode in ("think", "hierarchical"):
            thinker = policy
            prefix = [vocab.bos_id] + obs + prompt + [vocab.modality_ids["think"]]
            substitute = (
                mode == "think"
                and oracle_thoughts
                and tracker is not None
                and tracker.is_moving(state)
            )
            if substitute:
                thought = tracker.thought(state)
                thought_ids = codec.render_thought(thought, policy.thought_format, vocab)
                source = "oracle"
            else:
                cache = DecodeCache(thinker.params)
                gen1 = net.decode(
                    thinker.params,
                    prefix,
                    {vocab.sep_id, vocab.eos_id},
                    THOUGHT_TOKEN_CAP,
                    temperature,
                    rng,
                    cache=cache,
                )
                res.decode_steps += 1
                res.first_token_ok += int(gen1[0] in vocab.word_ids)
                res.tokens_generated += len(gen1)
                if not gen1 or gen1[-1] != vocab.sep_id:
                    # never produced the thought/action separator: no-op step
                    res.malformed += 1
                    res.wall_time += time.perf_counter() - t0
                    state = world.step(state, world.Action(0, 0, state.gripper_state))
                    res.steps += 1
                    continue
                thought_ids = gen1[:-1]
                source = "model"
            res.thought_log.append(
                (res.steps, detokenize(vocab.decode(thought_ids)), source)
            )

            if mode == "think":
                if substitute:
                    gen2 = net.decode(
                        policy.params,
                        prefix + thought_ids + [vocab.sep_id],
                        {vocab.eos_id},
                        3 * chunk + 1,
                        temperature,
                        rng,
                    )
                else:
                    gen2 = net.decode(
                        policy.params,
                        [vocab.sep_id],
                        {vocab.eos_id},
                        3 * chunk + 1,
                        temperature,
                        rng,
                        cache=cache,
                    )
            else:  # hierarchical: a second checkpoint executes the thought
                follow_prefix = (
                    [low_policy.vocab.bos_id]
                    + obs
                    + thought_ids
                    + [low_policy.vocab.modality_ids["follow"]]
                )
                gen2 = net.decode(
                    low_policy.params,
                    follow_prefix,
                    {low_policy.vocab.eos_id},
                    3 * chunk + 1,
                    temperature,
                    rng,
                )
            res.tokens_generated += len(gen2)
            actions, bad = _parse_chunk(gen2, vocab, chunk, state.gripper_state)
            res.malformed += bad

        elif mode == "follow":
            thought = tracker.thought(state)
            if thought is None:
                break
            thought_ids = codec.render_thought(thought, policy.thought_format, vocab)
            res.thought_log.append(
                (res.steps, detokenize(vocab.decode(thought_ids)), "oracle")
            )
            prefix = [vocab.bos_id] + obs + thought_ids + [vocab.modality_ids["follow"]]
            gen = net.decode(
                policy.params, prefix, {vocab.eos_id}, 3 * chunk + 1, temperature, rng
            )
            res.decode_steps += 1
            res.first_token_ok += int(gen[0] in vocab.dx_ids)
            res.tokens_generated += len(gen)
            actions, bad = _parse_chunk(gen, vocab, chunk, state.gripper_state)
            res.malformed += bad
        else:
            raise ConfigError(f"unknown mode: {mode}")

        res.wall_time += time.perf_counter() - t0
        for a in actions:
            state = world.step(state, a)
            res.steps += 1
            if world.check_success(state) or res.steps >= budget:
                break

    res.success = world.check_success(state)
    return res


@dataclass(frozen=True)
class EvalConfig:
    mode: str
    checkpoints: tuple[str, ...]
    tasks: tuple[tuple[str, int], ...] = (("place_at", 2),)
    n_episodes: int = 100
    max_steps: Optional[int] = None
    seed_base: int = 100_000
    oracle_substitution: bool = False
    temperature: float = 0.0
    out_csv: Optional[str] = None

    def __post_init__(self):
        if self.mode not in MODES + ("oracle",):
            raise ConfigError(f"unknown mode: {self.mode}")
        if self.mode == "hierarchical" and len(self.checkpoints) != 2:
            raise ConfigError("hierarchical evaluation needs exactly two checkpoints")
        if self.mode == "follow" and not self.oracle_substitution:
            raise ConfigError(
                "follow-mode batch evaluation needs oracle_substitution "
                "(interactive thoughts come from the steering service)"
            )


def stderr(p: float, n: int) -> float:
    return math.sqrt(p * (1.0 - p) / n) if n else 0.0


def summarize(results: list[EpisodeResult]) -> dict:
    valid = [r for r in results if not r.invalid]
    n = len(valid)
    successes = sum(r.success for r in valid)
    total_steps = sum(r.steps for r in valid)
    rate = successes / n if n else 0.0
    decode_steps = sum(r.decode_steps for r in valid)
    return {
        "n": n,
        "successes": successes,
        "success_rate": rate,
        "stderr": stderr(rate, n),
        "mean_steps": total_steps / n if n else 0.0,
        "tokens_per_step": sum(r.tokens_generated for r in valid) / max(total_steps, 1),
        "decode_s_per_step": sum(r.wall_time for r in valid) / max(total_steps, 1),
        "malformed": sum(r.malformed for r in valid),
        "obedience": (
            sum(r.first_token_ok for r in valid) / decode_steps if decode_steps else None
        ),
        "invalid": sum(r.invalid for r in results),
    }


def evaluate(cfg: EvalConfig) -> list[dict]:
    """Metrics rows per (task, mode); identical seeds across methods."""
    policy = low = None
    if cfg.mode != "oracle":
        policy = load_policy(cfg.checkpoints[0])
        if cfg.mode == "hierarchical":
            low = load_policy(cfg.checkpoints[1])
    rows = []
    for family, n_objects in cfg.tasks:
        results = [
            rollout(
                policy,
                family,
                n_objects,
                cfg.seed_base + i,
                cfg.mode,
                max_steps=cfg.max_steps,
                oracle_thoughts=cfg.oracle_substitution or cfg.mode == "follow",
                low_policy=low,
                temperature=cfg.temperature,
            )
            for i in range(cfg.n_episodes)
        ]
        row = {
            "task_family": family,
            "n_objects": n_objects,
            "mode": cfg.mode,
            "checkpoint": cfg.checkpoints[0] if cfg.checkpoints else "",
            "oracle_substitution": cfg.oracle_substitution,
            **summarize(results),
        }
        rows.append(row)
    if cfg.out_csv:
        write_csv(cfg.out_csv, rows)
    return rows


def write_csv(path: str | Path, rows: list[dict]) -> None:
    if not rows:
        Path(path).write_text("", encoding="utf-8")
        return
    keys = list(rows[0].keys())
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.DictWriter(f, fieldnames=keys)
        w.writeheader()
        w.writerows(rows)


# --- oracle-thought substitution study ---------------------------------------

STUDY_CONDITIONS = (
    ("act", False),
    ("think", False),
    ("think", True),
    ("follow", True),
)


def oracle_follow_eval(
    checkpoint: str,
    tasks: tuple[tuple[str, int], ...],
    n_episodes: int = 100,
    seed_base: int = 100_000,
    max_steps: Optional[int] = None,
    out_csv: Optional[str] = None,
) -> list[dict]:
    """Four conditions per task: act, think, think+oracle, follow+oracle."""
    policy = load_policy(checkpoint)
    rows = []
    for family, n_objects in tasks:
        for mode, sub in STUDY_CONDITIONS:
            results = [
                rollout(
                    policy,
                    family,
                    n_objects,
                    seed_base + i,
                    mode,
                    max_steps=max_steps,
                    oracle_thoughts=sub,
                )
                for i in range(n_episodes)
            ]
            condition = mode + ("+oracle" if sub else "")
            rows.append(
                {
                    "task_family": family,
                    "n_objects": n_objects,
                    "condition": condition,
                    **summarize(results),
                }
            )
    if out_csv:
        write_csv(out_csv, rows)
    return rows


# --- scaling report -----------------------------------------------------------

PARADIGM_MODE = {
    "mixed": "act",
    "act_only": "act",
    "think_only": "think",
    "hierarchical": "hierarchical",
}


def find_checkpoint(run_dir: Path) -> Optional[Path]:
    cks = sorted(
        run_dir.glob("checkpoint_epoch*.ckpt"),
        key=lambda p: int(p.stem.removeprefix("checkpoint_epoch")),
    )
    return cks[-1] if cks else None


def scaling_report(
    root: str | Path,
    sizes: list[int],
    paradigms: list[str],
    seeds: list[int],
    tasks: tuple[tuple[str, int], ...],
    n_episodes: int = 50,
    seed_base: int = 100_000,
    max_steps: Optional[int] = None,
    out_csv: Optional[str] = None,
    out_plot: Optional[str] = None,
) -> list[dict]:
    """Success table over (size, paradigm, seed); absent checkpoints are
    reported as absent cells rather than failing the report.

    Expected layout: {root}/size{N}/{paradigm}/seed{S}/checkpoint_epoch*.ckpt
    (hierarchical runs hold high/ and low/ subdirectories).
    """
    root = Path(root)
    rows = []
    for size in sizes:
        for paradigm in paradigms:
            mode = PARADIGM_MODE[paradigm]
            for seed in seeds:
                run_dir = root / f"size{size}" / paradigm / f"seed{seed}"
                base = {"size": size, "paradigm": paradigm, "seed": seed, "mode": mode}
                if paradigm == "hierarchical":
                    hi = find_checkpoint(run_dir / "high")
                    lo = find_checkpoint(run_dir / "low")
                    ck = (str(hi), str(lo)) if hi and lo else None
                else:
                    one = find_checkpoint(run_dir)
                    ck = (str(one),) if one else None
                if ck is None:
                    for family, n_objects in tasks:
                        rows.append(
                            {
                                **base,
                                "task_family": family,
                                "n_objects": n_objects,
                                "status": "absent",
                            }
                        )
                    continue
                policy = load_policy(ck[0])
                low = load_policy(ck[1]) if len(ck) > 1 else None
                for family, n_objects in tasks:
                    results = [
                        rollout(
                            policy,
                            family,
                            n_objects,
                            seed_base + i,
                            mode,
                            max_steps=max_steps,
                            low_policy=low,
                        )
                        for i in range(n_episodes)
                    ]
                    rows.append(
                        {
                            **base,
                            "task_family": family,
                            "n_objects": n_objects,
                            "status": "present",
                            **summarize(results),
                        }
                    )
    if out_csv:
        # union of keys: absent rows lack metric columns
        keys: list[str] = []
        for r in rows:
            for k in r:
                if k not in keys:
                    keys.append(k)
        with open(out_csv, "w", newline="", encoding="utf-8") as f:
            w = csv.DictWriter(f, fieldnames=keys)
            w.writeheader()
            w.writerows(rows)
    if out_plot:
        write_plot_data(out_plot, rows, sizes, paradigms)
    return rows


def write_plot_data(path: str | Path, rows: list[dict], sizes, paradigms) -> None:
    """Aggregated curve per paradigm: pooled success over seeds and tasks."""
    data = {"sizes": list(sizes), "paradigms": {}}
    for paradigm in paradigms:
        means, errs = [], []
        for size in sizes:
            cell = [
                r
                for r in rows
                if r["paradigm"] == paradigm and r["size"] == size and r.get("status") == "present"
            ]
            n = sum(r["n"] for r in cell)
            successes = sum(r["successes"] for r in cell)
            p = successes / n if n else None
            means.append(p)
            errs.append(stderr(p, n) if n else None)
        data["paradigms"][paradigm] = {"success_rate": means, "stderr": errs}
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
