"""Tiny decoder-only transformer in numpy: forward, exact reverse-mode
gradients, masked NLL loss, greedy/temperature decoding with a KV cache.

Pre-norm residual blocks with learned absolute positions. Reductions
(softmax normalizers, layernorm statistics, the loss) accumulate in float64
regardless of the parameter dtype, which keeps finite-difference gradient
checks meaningful.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .codec import TokenSample
from .errors import ConfigError

LN_EPS = 1e-5
_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


@dataclass(frozen=True)
class NetConfig:
    vocab_size: int
    d_model: int = 128
    n_heads: int = 4
    n_layers: int = 4
    context_len: int = 256
    init_scale: float = 0.02
    seed: int = 0
    tie_embeddings: bool = False
    dtype: str = "float32"

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ConfigError(
                f"d_model {self.d_model} not divisible by n_heads {self.n_heads}"
            )
        if self.vocab_size < 2:
            raise ConfigError(f"vocab_size must be >= 2, got {self.vocab_size}")
        if self.n_layers < 1 or self.context_len < 2:
            raise ConfigError("need n_layers >= 1 and context_len >= 2")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32/float64, got {self.dtype}")

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64

    def to_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "d_model": self.d_model,
            "n_heads": self.n_heads,
            "n_layers": self.n_layers,
            "context_len": self.context_len,
            "init_scale": self.init_scale,
            "seed": self.seed,
            "tie_embeddings": self.tie_embeddings,
            "dtype": self.dtype,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetConfig":
        return cls(**d)


class ModelParameters:
    """All weights, keyed by canonical name; iteration order is the
    checkpoint blob order."""

    def __init__(self, cfg: NetConfig, arrays: dict[str, np.ndarray]):
        self.cfg = cfg
        self.arrays = arrays

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def names(self) -> list[str]:
        return list(self.arrays.keys())

    def n_params(self) -> int:
        return sum(a.size for a in self.arrays.values())

    def copy(self) -> "ModelParameters":
        return ModelParameters(self.cfg, {k: v.copy() for k, v in self.arrays.items()})


def param_shapes(cfg: NetConfig) -> dict[str, tuple[int, ...]]:
    d, v = cfg.d_model, cfg.vocab_size
    shapes: dict[str, tuple[int, ...]] = {
        "tok_emb": (v, d),
        "pos_emb": (cfg.context_len, d),
    }
    for i in range(cfg.n_layers):
        p = f"layers.{i}."
        shapes[p + "ln1_g"] = (d,)
        shapes[p + "ln1_b"] = (d,)
        shapes[p + "wq"] = (d, d)
        shapes[p + "wk"] = (d, d)
        shapes[p + "wv"] = (d, d)
        shapes[p + "wo"] = (d, d)
        shapes[p + "ln2_g"] = (d,)
        shapes[p + "ln2_b"] = (d,)
        shapes[p + "w_up"] = (d, 4 * d)
        shapes[p + "b_up"] = (4 * d,)
        shapes[p + "w_down"] = (4 * d, d)
        shapes[p + "b_down"] = (d,)
    shapes["lnf_g"] = (d,)
    shapes["lnf_b"] = (d,)
    if not cfg.tie_embeddings:
        shapes["head"] = (d, v)
    return shapes


def init(cfg: NetConfig) -> ModelParameters:
    """Seeded Gaussian init (scaled); layernorm gains start at 1."""
    rng = np.random.default_rng(cfg.seed)
    dt = cfg.np_dtype
    arrays: dict[str, np.ndarray] = {}
    for name, shape in param_shapes(cfg).items():
        if name.endswith(("_g",)):
            arrays[name] = np.ones(shape, dtype=dt)
        elif name.endswith(("_b", "b_up", "b_down")):
            arrays[name] = np.zeros(shape, dtype=dt)
        else:
            arrays[name] = (rng.standard_normal(shape) * cfg.init_scale).astype(dt)
    return ModelParameters(cfg, arrays)


def zeros_like_params(params: ModelParameters) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.arrays.items()}


# --- primitives -------------------------------------------------------------

def _layernorm(x, g, b):
    mu = np.mean(x, axis=-1, keepdims=True, dtype=np.float64)
    xm = x - mu.astype(x.dtype)
    var = np.mean(xm * xm, axis=-1, keepdims=True, dtype=np.float64)
    inv = (1.0 / np.sqrt(var + LN_EPS)).astype(x.dtype)
    xhat = xm * inv
    return xhat * g + b, xhat, inv


def _layernorm_backward(dy, xhat, inv, g):
    dg = np.sum(dy * xhat, axis=tuple(range(dy.ndim - 1)), dtype=np.float64).astype(dy.dtype)
    db = np.sum(dy, axis=tuple(range(dy.ndim - 1)), dtype=np.float64).astype(dy.dtype)
    dxhat = dy * g
    m1 = np.mean(dxhat, axis=-1, keepdims=True, dtype=np.float64).astype(dy.dtype)
    m2 = np.mean(dxhat * xhat, axis=-1, keepdims=True, dtype=np.float64).astype(dy.dtype)
    dx = inv * (dxhat - m1 - xhat * m2)
    return dx, dg, db


def _gelu(x):
    x2 = x * x
    t = np.tanh(_GELU_C * x * (1.0 + _GELU_A * x2))
    return 0.5 * x * (1.0 + t), t


def _gelu_backward(dy, x, t):
    dinner = _GELU_C * (1.0 + 3.0 * _GELU_A * (x * x))
    return dy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner)


def _softmax_rows(scores, mask):
    """Softmax over the last axis with False entries excluded exactly."""
    neg = np.where(mask, scores, -np.inf)
    m = np.max(neg, axis=-1, keepdims=True)
    e = np.exp(neg - m)
    e = np.where(mask, e, 0.0)
    denom = np.sum(e, axis=-1, keepdims=True, dtype=np.float64)
    return (e / denom).astype(scores.dtype)


# --- forward/backward -------------------------------------------------------

class _Cache:
    __slots__ = (
        "tokens", "x0", "layer", "xf_in", "xf_hat", "xf_inv", "logits",
    )


def _forward_batch(params: ModelParameters, tokens: np.ndarray, need_cache: bool):
    """tokens: (B, T) int array. Returns (logits (B,T,V), cache or None)."""
    cfg = params.cfg
    B, T = tokens.shape
    if T > cfg.context_len:
        raise ValueError(f"sequence length {T} exceeds context_len {cfg.context_len}")
    if np.any(tokens < 0) or np.any(tokens >= cfg.vocab_size):
        raise ValueError("token id out of vocabulary range")
    a = params.arrays
    H, d = cfg.n_heads, cfg.d_model
    hd = d // H
    scale = 1.0 / math.sqrt(hd)

    x = a["tok_emb"][tokens] + a["pos_emb"][:T]
    causal = np.tril(np.ones((T, T), dtype=bool))

    cache = _Cache() if need_cache else None
    if need_cache:
        cache.tokens = tokens
        cache.x0 = x
        cache.layer = []

    for i in range(cfg.n_layers):
        p = f"layers.{i}."
        a_in = x
        h, h_hat, h_inv = _layernorm(a_in, a[p + "ln1_g"], a[p + "ln1_b"])
        q = h @ a[p + "wq"]
        k = h @ a[p + "wk"]
        v = h @ a[p + "wv"]
        # (B, H, T, hd)
        qh = q.reshape(B, T, H, hd).transpose(0, 2, 1, 3)
        kh = k.reshape(B, T, H, hd).transpose(0, 2, 1, 3)
        vh = v.reshape(B, T, H, hd).transpose(0, 2, 1, 3)
        scores = np.matmul(qh, kh.transpose(0, 1, 3, 2)) * scale
        probs = _softmax_rows(scores, causal)
        ctx = np.matmul(probs, vh)
        ctx2 = ctx.transpose(0, 2, 1, 3).reshape(B, T, d)
        attn_out = ctx2 @ a[p + "wo"]
        x = a_in + attn_out

        m_in = x
        h2, h2_hat, h2_inv = _layernorm(m_in, a[p + "ln2_g"], a[p + "ln2_b"])
        u = h2 @ a[p + "w_up"] + a[p + "b_up"]
        act, act_t = _gelu(u)
        mlp_out = act @ a[p + "w_down"] + a[p + "b_down"]
        x = m_in + mlp_out

        if need_cache:
            cache.layer.append(
                dict(
                    h=h, h_hat=h_hat, h_inv=h_inv, qh=qh, kh=kh, vh=vh,
                    probs=probs, ctx2=ctx2, h2=h2, h2_hat=h2_hat, h2_inv=h2_inv,
                    u=u, act=act, act_t=act_t,
                )
            )

    xf, xf_hat, xf_inv = _layernorm(x, a["lnf_g"], a["lnf_b"])
    w_out = a["tok_emb"].T if cfg.tie_embeddings else a["head"]
    logits = xf @ w_out
    if need_cache:
        cache.xf_in = xf
        cache.xf_hat = xf_hat
        cache.xf_inv = xf_inv
        cache.logits = logits
    return logits, cache


def _backward_batch(params: ModelParameters, cache: _Cache, dlogits: np.ndarray):
    cfg = params.cfg
    a = params.arrays
    B, T = cache.tokens.shape
    H, d = cfg.n_heads, cfg.d_model
    hd = d // H
    scale = 1.0 / math.sqrt(hd)
    grads = zeros_like_params(params)

    def _mm_t(x3, y3):
        # sum_bt x[bt, i] y[bt, j] -> (i, j), via one BLAS call
        return x3.reshape(-1, x3.shape[-1]).T @ y3.reshape(-1, y3.shape[-1])

    xf = cache.xf_in
    if cfg.tie_embeddings:
        grads["tok_emb"] += _mm_t(dlogits, xf)
        dxf = dlogits @ a["tok_emb"]
    else:
        grads["head"] = _mm_t(xf, dlogits)
        dxf = dlogits @ a["head"].T
    dx, dg, db = _layernorm_backward(dxf, cache.xf_hat, cache.xf_inv, a["lnf_g"])
    grads["lnf_g"] += dg
    grads["lnf_b"] += db

    for i in range(cfg.n_layers - 1, -1, -1):
        p = f"layers.{i}."
        c = cache.layer[i]

        # MLP block: x_out = m_in + gelu(LN2(m_in) @ w_up + b_up) @ w_down + b_down
        dmlp_out = dx
        grads[p + "b_down"] += np.sum(dmlp_out, axis=(0, 1), dtype=np.float64).astype(dx.dtype)
        grads[p + "w_down"] += _mm_t(c["act"], dmlp_out)
        dact = dmlp_out @ a[p + "w_down"].T
        du = _gelu_backward(dact, c["u"], c["act_t"])
        grads[p + "b_up"] += np.sum(du, axis=(0, 1), dtype=np.float64).astype(dx.dtype)
        grads[p + "w_up"] += _mm_t(c["h2"], du)
        dh2 = du @ a[p + "w_up"].T
        dm_in, dg, db = _layernorm_backward(dh2, c["h2_hat"], c["h2_inv"], a[p + "ln2_g"])
        grads[p + "ln2_g"] += dg
        grads[p + "ln2_b"] += db
        dx = dx + dm_in

        # attention block: x_out = a_in + (softmax(qk^T) v) @ wo
        dattn_out = dx
        grads[p + "wo"] += _mm_t(c["ctx2"], dattn_out)
        dctx2 = dattn_out @ a[p + "wo"].T
        dctx = dctx2.reshape(B, T, H, hd).transpose(0, 2, 1, 3)
        dprobs = np.matmul(dctx, c["vh"].transpose(0, 1, 3, 2))
        dvh = np.matmul(c["probs"].transpose(0, 1, 3, 2), dctx)
        # softmax backward; masked entries have probs == 0 so they drop out
        inner = np.sum(c["probs"] * dprobs, axis=-1, keepdims=True, dtype=np.float64).astype(dx.dtype)
        dscores = c["probs"] * (dprobs - inner)
        dqh = np.matmul(dscores, c["kh"]) * scale
        dkh = np.matmul(dscores.transpose(0, 1, 3, 2), c["qh"]) * scale
        dq = dqh.transpose(0, 2, 1, 3).reshape(B, T, d)
        dk = dkh.transpose(0, 2, 1, 3).reshape(B, T, d)
        dv = dvh.transpose(0, 2, 1, 3).reshape(B, T, d)
        h = c["h"]
        grads[p + "wq"] += _mm_t(h, dq)
        grads[p + "wk"] += _mm_t(h, dk)
        grads[p + "wv"] += _mm_t(h, dv)
        dh = dq @ a[p + "wq"].T + dk @ a[p + "wk"].T + dv @ a[p + "wv"].T
        da_in, dg, db = _layernorm_backward(dh, c["h_hat"], c["h_inv"], a[p + "ln1_g"])
        grads[p + "ln1_g"] += dg
        grads[p + "ln1_b"] += db
        dx = dx + da_in

    # embeddings
    grads["pos_emb"][:T] += np.sum(dx, axis=0, dtype=np.float64).astype(dx.dtype)
    flat_tokens = cache.tokens.reshape(-1)
    flat_dx = dx.reshape(-1, d)
    np.add.at(grads["tok_emb"], flat_tokens, flat_dx)
    return grads


# --- public operations ------------------------------------------------------

def forward(params: ModelParameters, tokens) -> np.ndarray:
    """Causal logits for one sequence, shape (len(tokens), vocab)."""
    arr = np.asarray(tokens, dtype=np.int64).reshape(1, -1)
    if arr.size == 0:
        raise ValueError("empty token sequence")
    logits, _ = _forward_batch(params, arr, need_cache=False)
    return logits[0]


def batch_arrays(samples: list[TokenSample], pad_id: int, context_len: int):
    """Pack samples into a padded (tokens, score_mask) pair.

    score_mask[b, j] means: predict tokens[b, j] from logits at j-1. Padding
    and input positions are never scored.
    """
    if not samples:
        raise ValueError("empty batch")
    lengths = [len(s.input) + len(s.target) for s in samples]
    T = max(lengths)
    if T > context_len:
        raise ValueError(f"sample length {T} exceeds context_len {context_len}")
    B = len(samples)
    tokens = np.full((B, T), pad_id, dtype=np.int64)
    score = np.zeros((B, T), dtype=bool)
    for b, s in enumerate(samples):
        li, lt = len(s.input), len(s.target)
        tokens[b, : li + lt] = list(s.input) + list(s.target)
        score[b, li : li + lt] = s.loss_mask
        if not any(s.loss_mask):
            raise ValueError(f"sample {b} has an all-false loss mask: nothing to score")
    return tokens, score


def _nll_and_dlogits(logits, tokens, score, want_grad, want_per_sample=False):
    """Mean-over-samples of per-sample mean NLL at scored positions."""
    B = tokens.shape[0]
    rows_b, rows_j = np.nonzero(score)
    targets = tokens[rows_b, rows_j]
    rows = logits[rows_b, rows_j - 1].astype(np.float64)
    m = np.max(rows, axis=-1, keepdims=True)
    lse = m[:, 0] + np.log(np.sum(np.exp(rows - m), axis=-1))
    nll = lse - rows[np.arange(len(rows)), targets]
    counts = np.bincount(rows_b, minlength=B).astype(np.float64)
    per_sample = np.bincount(rows_b, weights=nll, minlength=B) / counts
    loss = float(np.mean(per_sample))

    dlogits = None
    if want_grad:
        soft = np.exp(rows - lse[:, None])
        soft[np.arange(len(rows)), targets] -= 1.0
        soft *= (1.0 / (counts[rows_b] * B))[:, None]
        dlogits = np.zeros_like(logits)
        dlogits[rows_b, rows_j - 1] = soft.astype(logits.dtype)
    if want_per_sample:
        return loss, per_sample, dlogits
    return loss, dlogits


def loss(params: ModelParameters, samples, pad_id: int = 0) -> float:
    """Mean masked NLL; accepts one TokenSample or a list."""
    if isinstance(samples, TokenSample):
        samples = [samples]
    tokens, score = batch_arrays(samples, pad_id, params.cfg.context_len)
    logits, _ = _forward_batch(params, tokens, need_cache=False)
    value, _ = _nll_and_dlogits(logits, tokens, score, want_grad=False)
    return value


def _first_bad_layer(cache: "_Cache") -> str:
    """Post-hoc scan naming where non-finite values first appear."""
    for i, c in enumerate(cache.layer):
        for key in ("h", "probs", "u", "act"):
            if not np.all(np.isfinite(c[key])):
                return f"layer {i} ({key})"
    if not np.all(np.isfinite(cache.logits)):
        return "output head"
    return "loss reduction"


def loss_and_grad(params: ModelParameters, samples, pad_id: int = 0):
    """(batch loss, per-sample losses, grads) for a batch."""
    if isinstance(samples, TokenSample):
        samples = [samples]
    tokens, score = batch_arrays(samples, pad_id, params.cfg.context_len)
    logits, cache = _forward_batch(params, tokens, need_cache=True)
    value, per_sample, dlogits = _nll_and_dlogits(
        logits, tokens, score, want_grad=True, want_per_sample=True
    )
    if not np.isfinite(value):
        raise FloatingPointError(
            f"non-finite loss ({value}); first non-finite values in {_first_bad_layer(cache)}"
        )
    grads = _backward_batch(params, cache, dlogits)
    return value, per_sample, grads


def grad(params: ModelParameters, samples, pad_id: int = 0) -> dict[str, np.ndarray]:
    """Exact gradients of the mean batch loss."""
    _, _, grads = loss_and_grad(params, samples, pad_id)
    return grads


# --- decoding ---------------------------------------------------------------

class DecodeCache:
    """Incremental decoding state: per-layer K/V caches."""

    def __init__(self, params: ModelParameters):
        self.params = params
        cfg = params.cfg
        H, hd = cfg.n_heads, cfg.d_model // cfg.n_heads
        self.k = [
            np.zeros((H, cfg.context_len, hd), dtype=cfg.np_dtype)
            for _ in range(cfg.n_layers)
        ]
        self.v = [
            np.zeros((H, cfg.context_len, hd), dtype=cfg.np_dtype)
            for _ in range(cfg.n_layers)
        ]
        self.pos = 0

    def feed(self, tokens: list[int]) -> np.ndarray:
        """Process a block of tokens; returns logits for the final position."""
        cfg = self.params.cfg
        a = self.params.arrays
        S = len(tokens)
        if S == 0:
            raise ValueError("empty token block")
        if self.pos + S > cfg.context_len:
            raise ValueError(
                f"decode would exceed context_len ({self.pos}+{S} > {cfg.context_len})"
            )
        H, d = cfg.n_heads, cfg.d_model
        hd = d // H
        scale = 1.0 / math.sqrt(hd)
        p0 = self.pos
        arr = np.asarray(tokens, dtype=np.int64)
        if np.any(arr < 0) or np.any(arr >= cfg.vocab_size):
            raise ValueError("token id out of vocabulary range")
        x = a["tok_emb"][arr] + a["pos_emb"][p0 : p0 + S]

        # position p0+i attends cached positions 0 .. p0+i
        total = p0 + S
        block_mask = np.arange(total)[None, :] <= (p0 + np.arange(S))[:, None]

        for i in range(cfg.n_layers):
            p = f"layers.{i}."
            a_in = x
            h, _, _ = _layernorm(a_in, a[p + "ln1_g"], a[p + "ln1_b"])
            q = (h @ a[p + "wq"]).reshape(S, H, hd).transpose(1, 0, 2)
            k = (h @ a[p + "wk"]).reshape(S, H, hd).transpose(1, 0, 2)
            v = (h @ a[p + "wv"]).reshape(S, H, hd).transpose(1, 0, 2)
            self.k[i][:, p0 : p0 + S] = k
            self.v[i][:, p0 : p0 + S] = v
            keys = self.k[i][:, :total]
            vals = self.v[i][:, :total]
            scores = np.matmul(q, keys.transpose(0, 2, 1)) * scale
            probs = _softmax_rows(scores, block_mask[None, :, :])
            ctx = np.matmul(probs, vals)
            x = a_in + ctx.transpose(1, 0, 2).reshape(S, d) @ a[p + "wo"]
            h2, _, _ = _layernorm(x, a[p + "ln2_g"], a[p + "ln2_b"])
            act, _ = _gelu(h2 @ a[p + "w_up"] + a[p + "b_up"])
            x = x + act @ a[p + "w_down"] + a[p + "b_down"]

        self.pos = total
        xf, _, _ = _layernorm(x[-1:], a["lnf_g"], a["lnf_b"])
        w_out = a["tok_emb"].T if cfg.tie_embeddings else a["head"]
        return (xf @ w_out)[0]


def decode(
    params: ModelParameters,
    prefix: list[int],
    stop_ids,
    max_new: int,
    temperature: float = 0.0,
    rng: np.random.Generator | None = None,
    cache: DecodeCache | None = None,
) -> list[int]:
    """Generate up to max_new tokens after prefix; stops after emitting any
    stop token. temperature=0 is argmax with lowest-id tie break.

    Pass a cache to continue a previous generation (the prefix then holds
    only the new conditioning tokens).
    """
    if not prefix:
        raise ValueError("decode needs a non-empty prefix")
    if cache is None:
        cache = DecodeCache(params)
    stop = frozenset(stop_ids)
    logits = cache.feed(list(prefix))
    out: list[int] = []
    for _ in range(max_new):
        if temperature == 0.0:
            tok = int(np.argmax(logits))
        else:
            if rng is None:
                raise ValueError("temperature sampling needs an rng")
            z = logits.astype(np.float64) / temperature
            z -= np.max(z)
            probs = np.exp(z)
            probs /= probs.sum()
            tok = int(rng.choice(len(probs), p=probs))
        out.append(tok)
        if tok in stop or cache.pos >= params.cfg.context_len:
            break
        logits = cache.feed([tok])
    return out
