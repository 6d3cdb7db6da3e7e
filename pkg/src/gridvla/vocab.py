"""Closed word-level vocabulary with dense, stable token ids.

Ids depend only on (grid_size, action_bins), so a manifest hash pins the
token table a checkpoint was trained with.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

from .errors import ConfigError, VocabularyError
from .world import COLORS, SHAPES, Action

PAD = "<pad>"
BOS = "<bos>"
EOS = "<eos>"
SEP = "<sep>"
M_ACT = "<act>"
M_THINK = "<think>"
M_FOLLOW = "<follow>"

MODALITY_TOKENS = {"act": M_ACT, "think": M_THINK, "follow": M_FOLLOW}

# every template word used by task prompts, thoughts and the gripper status
_WORDS = (
    "What should the robot do to".split()
    + ["place", "on", "top", "of", "left", "right", "behind", "in", "front",
       "stack", "then", "move", "pick", "up", "carry", "subtask", "plan",
       "forward", "backward", "close", "open", "closed", "none", "the",
       "?", ":", ";"]
    + list(SHAPES)
    + list(COLORS)
)

_PUNCT_ATTACH_LEFT = {":", "?"}  # detokenize without a preceding space


def tokenize_text(text: str) -> list[str]:
    """Whitespace split with :, ; and ? as standalone tokens."""
    for p in (":", ";", "?"):
        text = text.replace(p, f" {p} ")
    return text.split()


def detokenize(words: list[str]) -> str:
    out: list[str] = []
    for w in words:
        if w in _PUNCT_ATTACH_LEFT and out:
            out[-1] += w
        else:
            out.append(w)
    return " ".join(out)


@dataclass(frozen=True)
class VocabConfig:
    grid_size: int = 8
    action_bins: int = 256


class Vocabulary:
    def __init__(self, cfg: VocabConfig):
        if cfg.action_bins < 2:
            raise ConfigError(f"action_bins must be >= 2, got {cfg.action_bins}")
        self.cfg = cfg
        tokens: list[str] = [PAD, BOS, EOS, SEP, M_ACT, M_THINK, M_FOLLOW]
        seen = set(tokens)
        for w in _WORDS:
            if w not in seen:
                tokens.append(w)
                seen.add(w)
        for color in COLORS:
            for shape in SHAPES:
                tokens.append(f"{color}_{shape}")
        g = cfg.grid_size
        tokens += [f"x{i}" for i in range(g)]
        tokens += [f"y{i}" for i in range(g)]
        tokens += [f"l{i}" for i in range(g)]
        tokens += [f"dx_{d}" for d in (-1, 0, 1)]
        tokens += [f"dy_{d}" for d in (-1, 0, 1)]
        tokens += ["grip_open", "grip_closed"]
        tokens += [f"bin_{i}" for i in range(cfg.action_bins)]

        self.id_to_token: tuple[str, ...] = tuple(tokens)
        self.token_to_id: dict[str, int] = {t: i for i, t in enumerate(tokens)}
        assert len(self.token_to_id) == len(self.id_to_token), "duplicate token strings"

        self.pad_id = self.token_to_id[PAD]
        self.bos_id = self.token_to_id[BOS]
        self.eos_id = self.token_to_id[EOS]
        self.sep_id = self.token_to_id[SEP]
        self.modality_ids = {m: self.token_to_id[t] for m, t in MODALITY_TOKENS.items()}
        self.action_token_ids = frozenset(
            self.token_to_id[t]
            for t in [f"dx_{d}" for d in (-1, 0, 1)]
            + [f"dy_{d}" for d in (-1, 0, 1)]
            + ["grip_open", "grip_closed"]
        )
        self.dx_ids = frozenset(self.token_to_id[f"dx_{d}"] for d in (-1, 0, 1))
        self.word_ids = frozenset(self.token_to_id[w] for w in set(_WORDS))

    def __len__(self) -> int:
        return len(self.id_to_token)

    def encode(self, words: list[str]) -> list[int]:
        unknown = [w for w in words if w not in self.token_to_id]
        if unknown:
            raise VocabularyError(unknown)
        return [self.token_to_id[w] for w in words]

    def decode(self, ids: list[int]) -> list[str]:
        return [self.id_to_token[i] for i in ids]

    def action_tokens(self, a: Action) -> list[int]:
        return [
            self.token_to_id[f"dx_{a.dx}"],
            self.token_to_id[f"dy_{a.dy}"],
            self.token_to_id[f"grip_{a.grip}"],
        ]

    def parse_action_tokens(self, ids: list[int]) -> Action:
        if len(ids) != 3:
            raise ValueError(f"an action is 3 tokens, got {len(ids)}")
        dx_t, dy_t, grip_t = (self.id_to_token[i] for i in ids)
        if not (dx_t.startswith("dx_") and dy_t.startswith("dy_") and grip_t.startswith("grip_")):
            raise ValueError(f"not an action triple: {dx_t} {dy_t} {grip_t}")
        return Action(int(dx_t[3:]), int(dy_t[3:]), grip_t[5:])

    def manifest(self) -> dict:
        return {
            "grid_size": self.cfg.grid_size,
            "action_bins": self.cfg.action_bins,
            "tokens": list(self.id_to_token),
        }

    def manifest_json(self) -> str:
        return json.dumps(self.manifest(), sort_keys=True, separators=(",", ":"))

    def content_hash(self) -> str:
        return hashlib.sha256(self.manifest_json().encode("utf-8")).hexdigest()
