"""Forward-only numerical reference for the stack-attention feature path.

Models, at toy scale, the pipeline that turns a focus stack's token grid into
one collapsed feature map: per-image spatial self-attention, a focus-distance
embedding added to every token of its image, self-attention along the stack
dimension at each spatial location, and a final mean over the stack. No
training, no normalization statistics; the point is testable invariants
(permutation behavior, softmax structure, O(M^2) stack-attention cost).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# The focus distance enters its embedding MLP as log(d): the useful range of
# distances spans more than an order of magnitude, and log compresses it.
FD_INPUT_SCALING = "log"
# Nonlinearity between the two MLP layers, pinned for reproducibility.
MLP_NONLINEARITY = "silu"


def silu(x):
    return x / (1.0 + np.exp(-x))


@dataclass(frozen=True)
class TokenGrid:
    """Token tensor of shape (M, C, th, tw): stack size, channels, token grid."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 4:
            raise ValueError(f"expected (M, C, th, tw) tokens, got shape {v.shape}")
        if not np.isfinite(v).all():
            raise ValueError("token values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def stack_size(self) -> int:
        return self.values.shape[0]

    @property
    def channels(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class StackAttnParams:
    """Projection weights shared by the spatial and stack attention blocks,
    plus the two-layer focus-distance MLP (1 -> hidden -> C)."""

    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    fd_w1: np.ndarray
    fd_b1: np.ndarray
    fd_w2: np.ndarray
    fd_b2: np.ndarray
    l1: int = 4
    l2: int = 8
    n_heads: int = 1

    def __post_init__(self):
        c = self.wq.shape[0]
        for name in ("wq", "wk", "wv", "wo"):
            m = getattr(self, name)
            if m.shape != (c, c):
                raise ValueError(f"{name} must be square {c}x{c}, got {m.shape}")
        hidden = self.fd_w1.shape[0]
        if self.fd_w1.shape != (hidden, 1) or self.fd_b1.shape != (hidden,):
            raise ValueError("fd layer 1 must map 1 -> hidden")
        if self.fd_w2.shape != (c, hidden) or self.fd_b2.shape != (c,):
            raise ValueError("fd layer 2 must map hidden -> channel count")
        if self.l1 < 0 or self.l2 < 0:
            raise ValueError("layer counts must be non-negative")
        if self.n_heads < 1 or c % self.n_heads != 0:
            raise ValueError("n_heads must divide the channel count")

    @property
    def channels(self) -> int:
        return self.wq.shape[0]

    @classmethod
    def random(
        cls,
        seed: int,
        channels: int,
        hidden: int | None = None,
        l1: int = 4,
        l2: int = 8,
        n_heads: int = 1,
        fd_zero_init: bool = True,
    ) -> "StackAttnParams":
        """Seeded toy parameters. The FD MLP starts at zero by default, the
        initialization under which the stack attention sees raw tokens only.
        Draw order is part of the fixture contract: wq, wk, wv, wo, then the
        FD layers when fd_zero_init is False, all standard normal * 0.5/sqrt(C).
        """
        hidden = channels if hidden is None else hidden
        gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
        scale = 0.5 / math.sqrt(channels)
        wq, wk, wv, wo = (scale * gen.standard_normal((channels, channels)) for _ in range(4))
        if fd_zero_init:
            fd = (np.zeros((hidden, 1)), np.zeros(hidden), np.zeros((channels, hidden)), np.zeros(channels))
        else:
            fd = (
                scale * gen.standard_normal((hidden, 1)),
                scale * gen.standard_normal(hidden),
                scale * gen.standard_normal((channels, hidden)),
                scale * gen.standard_normal(channels),
            )
        return cls(wq, wk, wv, wo, *fd, l1=l1, l2=l2, n_heads=n_heads)

    def config_dict(self) -> dict:
        return {
            "channels": self.channels,
            "hidden": int(self.fd_w1.shape[0]),
            "l1": self.l1,
            "l2": self.l2,
            "n_heads": self.n_heads,
            "fd_input_scaling": FD_INPUT_SCALING,
            "mlp_nonlinearity": MLP_NONLINEARITY,
        }


def fd_embed(d_i: float, params: StackAttnParams) -> np.ndarray:
    """Two affine layers with a nonlinearity between, fed log(d_i)."""
    if d_i <= 0:
        raise ValueError(f"focus distance must be positive, got {d_i}")
    x = np.array([math.log(d_i)])
    h = silu(params.fd_w1 @ x + params.fd_b1)
    return params.fd_w2 @ h + params.fd_b2


def _attend(x: np.ndarray, params: StackAttnParams, op_counter: dict | None) -> np.ndarray:
    """Softmax self-attention over axis 1 of x (batch, seq, C), with residual.

    Returns x + Wo(softmax(q k^T / sqrt(head_dim)) v), multi-head if
    configured. op_counter, when given, accumulates the number of score and
    mixing multiply-adds, which scale as seq^2 per batch element.
    """
    batch, seq, c = x.shape
    heads = params.n_heads
    hd = c // heads

    q = x @ params.wq.T
    k = x @ params.wk.T
    v = x @ params.wv.T
    # (batch, heads, seq, hd)
    q = q.reshape(batch, seq, heads, hd).transpose(0, 2, 1, 3)
    k = k.reshape(batch, seq, heads, hd).transpose(0, 2, 1, 3)
    v = v.reshape(batch, seq, heads, hd).transpose(0, 2, 1, 3)

    scores = q @ k.transpose(0, 1, 3, 2) / math.sqrt(hd)
    scores -= scores.max(axis=-1, keepdims=True)
    w = np.exp(scores)
    w /= w.sum(axis=-1, keepdims=True)
    if op_counter is not None:
        op_counter["score_mults"] = op_counter.get("score_mults", 0) + batch * heads * seq * seq * hd
        op_counter["mix_mults"] = op_counter.get("mix_mults", 0) + batch * heads * seq * seq * hd

    mixed = (w @ v).transpose(0, 2, 1, 3).reshape(batch, seq, c)
    return x + mixed @ params.wo.T


def attention_weights(x: np.ndarray, params: StackAttnParams) -> np.ndarray:
    """The softmax map of _attend for one (seq, C) token matrix, exposed for
    structural tests; shape (heads, seq, seq), rows summing to 1."""
    seq, c = x.shape
    heads = params.n_heads
    hd = c // heads
    q = (x @ params.wq.T).reshape(seq, heads, hd).transpose(1, 0, 2)
    k = (x @ params.wk.T).reshape(seq, heads, hd).transpose(1, 0, 2)
    scores = q @ k.transpose(0, 2, 1) / math.sqrt(hd)
    scores -= scores.max(axis=-1, keepdims=True)
    w = np.exp(scores)
    return w / w.sum(axis=-1, keepdims=True)


def spatial_attention(tokens: TokenGrid, params: StackAttnParams, op_counter: dict | None = None) -> TokenGrid:
    """Self-attention over the spatial tokens of each stack image independently."""
    m, c, th, tw = tokens.values.shape
    x = tokens.values.reshape(m, c, th * tw).transpose(0, 2, 1)
    y = _attend(x, params, op_counter)
    return TokenGrid(y.transpose(0, 2, 1).reshape(m, c, th, tw))


def stack_attention(
    tokens: TokenGrid, fds, params: StackAttnParams, op_counter: dict | None = None
) -> TokenGrid:
    """Self-attention along the stack dimension at each spatial location.

    Each image's focus-distance embedding is added to all of its tokens first,
    so the attention can tell the stack entries apart; the residual path then
    carries those embedded tokens. Cost is O(M^2) per spatial location.
    """
    m, c, th, tw = tokens.values.shape
    fds = list(fds)
    if len(fds) != m:
        raise ValueError(f"got {len(fds)} focus distances for a stack of {m}")
    emb = np.stack([fd_embed(d, params) for d in fds])  # (M, C)
    x = tokens.values + emb[:, :, None, None]
    x = x.reshape(m, c, th * tw).transpose(2, 0, 1)  # (locations, M, C)
    y = _attend(x, params, op_counter)
    return TokenGrid(y.transpose(1, 2, 0).reshape(m, c, th, tw))


def collapse(tokens: TokenGrid) -> np.ndarray:
    """Mean over the stack dimension: (M, C, th, tw) -> (C, th, tw)."""
    return tokens.values.mean(axis=0)


def forward_extract(
    tokens: TokenGrid,
    fds,
    params: StackAttnParams,
    l1: int | None = None,
    op_counter: dict | None = None,
) -> np.ndarray:
    """l1 rounds of (spatial attention, FD-embedded stack attention), then the
    mean collapse. l1=0 collapses the input directly."""
    l1 = params.l1 if l1 is None else l1
    if l1 < 0:
        raise ValueError("l1 must be non-negative")
    for _ in range(l1):
        tokens = spatial_attention(tokens, params, op_counter)
        tokens = stack_attention(tokens, fds, params, op_counter)
    return collapse(tokens)


def patch_embed(images: np.ndarray, patch_size: int, weight: np.ndarray, bias: np.ndarray) -> TokenGrid:
    """Linear non-overlapping patch embedding: (M, H, W, 3) images to tokens.

    weight maps flattened 3*patch_size^2 patch values to C channels; H and W
    must be divisible by patch_size.
    """
    m, h, w, ch = images.shape
    if ch != 3:
        raise ValueError("expected RGB images (M, H, W, 3)")
    if h % patch_size or w % patch_size:
        raise ValueError(f"patch size {patch_size} must divide image size {h}x{w}")
    th, tw = h // patch_size, w // patch_size
    c, flat = weight.shape
    if flat != 3 * patch_size * patch_size or bias.shape != (c,):
        raise ValueError("weight/bias shapes inconsistent with patch size")
    patches = images.reshape(m, th, patch_size, tw, patch_size, 3)
    patches = patches.transpose(0, 1, 3, 2, 4, 5).reshape(m, th, tw, flat)
    tokens = patches @ weight.T + bias
    return TokenGrid(tokens.transpose(0, 3, 1, 2))
