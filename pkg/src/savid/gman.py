"""Stage 1: windowed local spectral attention over the image, global memory
attention with depth-derived queries, and ReLU-LSTM temporal accumulation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .depth import DepthMap
from .numerics import (
    LinearMap,
    ShapeError,
    as_tensor,
    dropout,
    layer_norm,
    relu,
    softmax_lastdim,
)


@dataclass
class WindowLayout:
    batch: int
    height: int
    width: int
    channels: int
    window: int  # P

    @property
    def padded_h(self) -> int:
        p = self.window
        return -(-self.height // p) * p

    @property
    def padded_w(self) -> int:
        p = self.window
        return -(-self.width // p) * p

    @property
    def n_windows(self) -> int:
        return (self.padded_h // self.window) * (self.padded_w // self.window)

    @property
    def n_tokens(self) -> int:
        return self.window * self.window


def partition_windows(x: np.ndarray, window: int) -> tuple[np.ndarray, WindowLayout]:
    """(B, H, W, C) -> (B*, N, C) with zero edge padding up to multiples of P."""
    x = as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f"expected (B, H, W, C), got {x.shape}")
    b, h, w, c = x.shape
    layout = WindowLayout(b, h, w, c, window)
    ph, pw = layout.padded_h, layout.padded_w
    if (ph, pw) != (h, w):
        x = np.pad(x, ((0, 0), (0, ph - h), (0, pw - w), (0, 0)))
    p = window
    x = x.reshape(b, ph // p, p, pw // p, p, c)
    x = x.transpose(0, 1, 3, 2, 4, 5)
    tokens = x.reshape(b * layout.n_windows, p * p, c)
    return tokens, layout


def merge_windows(tokens: np.ndarray, layout: WindowLayout) -> np.ndarray:
    """Exact inverse of partition_windows, including the padding crop."""
    tokens = as_tensor(tokens)
    b, p = layout.batch, layout.window
    expected = (b * layout.n_windows, layout.n_tokens, tokens.shape[-1])
    if tokens.shape != expected:
        raise ShapeError(f"tokens shape {tokens.shape} inconsistent with layout {expected}")
    ph, pw = layout.padded_h, layout.padded_w
    c = tokens.shape[-1]
    x = tokens.reshape(b, ph // p, pw // p, p, p, c)
    x = x.transpose(0, 1, 3, 2, 4, 5)
    x = x.reshape(b, ph, pw, c)
    return x[:, : layout.height, : layout.width, :]


@dataclass
class LstmState:
    h: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        self.h = as_tensor(self.h)
        self.c = as_tensor(self.c)
        if self.h.shape != self.c.shape:
            raise ShapeError("LSTM h and c must share a shape")

    @staticmethod
    def zeros(shape) -> "LstmState":
        return LstmState(np.zeros(shape), np.zeros(shape))


@dataclass
class LstmWeights:
    """Single LSTM cell; gate order along the 4C axis is (i, f, g, o)."""

    w_x: np.ndarray  # (C, 4C)
    w_h: np.ndarray  # (C, 4C)
    bias: np.ndarray  # (4C,)

    def __post_init__(self):
        self.w_x = as_tensor(self.w_x)
        self.w_h = as_tensor(self.w_h)
        self.bias = as_tensor(self.bias)

    @staticmethod
    def seeded(c: int, seed: int) -> "LstmWeights":
        rng = np.random.default_rng(seed)
        bound = 1.0 / np.sqrt(c)
        return LstmWeights(
            rng.uniform(-bound, bound, size=(c, 4 * c)),
            rng.uniform(-bound, bound, size=(c, 4 * c)),
            np.zeros(4 * c),
        )


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def lstm_step(x: np.ndarray, state: LstmState, weights: LstmWeights) -> tuple[np.ndarray, LstmState]:
    """Standard gate equations with ReLU on the cell-to-hidden path:
    c' = f*c + i*g, h' = o * relu(c')."""
    x = as_tensor(x)
    c_dim = weights.w_x.shape[0]
    if x.shape[-1] != c_dim or state.h.shape != x.shape:
        raise ShapeError(f"lstm_step shape mismatch: x {x.shape}, h {state.h.shape}")
    gates = x @ weights.w_x + state.h @ weights.w_h + weights.bias
    i, f, g, o = np.split(gates, 4, axis=-1)
    c_new = _sigmoid(f) * state.c + _sigmoid(i) * np.tanh(g)
    h_new = _sigmoid(o) * relu(c_new)
    return h_new, LstmState(h_new, c_new)


def _split_heads(x: np.ndarray, n_heads: int) -> np.ndarray:
    b, n, c = x.shape
    return x.reshape(b, n, n_heads, c // n_heads).transpose(0, 2, 1, 3)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    b, h, n, d = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, n, h * d)


def multi_head_attention(
    q: np.ndarray,
    k: np.ndarray,
    v: np.ndarray,
    n_heads: int,
    dropout_rate: float = 0.0,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Scaled dot-product attention over (B*, N, C) token sets.

    Returns (output, attention); dropout hits the attention matrix only and is
    identity in inference mode.
    """
    c = q.shape[-1]
    if c % n_heads:
        raise ShapeError(f"channels {c} not divisible by {n_heads} heads")
    qh, kh, vh = (_split_heads(t, n_heads) for t in (q, k, v))
    scale = 1.0 / np.sqrt(c // n_heads)
    logits = np.matmul(qh, kh.transpose(0, 1, 3, 2)) * scale
    attn = softmax_lastdim(logits)
    attn_used = dropout(attn, dropout_rate, seed) if dropout_rate else attn
    out = _merge_heads(np.matmul(attn_used, vh))
    return out, attn


@dataclass
class LsaParams:
    query: LinearMap
    key: LinearMap
    value: LinearMap
    out: LinearMap
    filter: np.ndarray  # complex, length N
    ln_gamma: np.ndarray
    ln_beta: np.ndarray
    n_heads: int
    dropout_rate: float = 0.0
    dropout_seed: int = 0


def lsa_forward(tokens: np.ndarray, params: LsaParams) -> np.ndarray:
    """Window self-attention, spectral filtering along the token axis,
    residual addition, layer norm."""
    from .numerics import spectral_filter

    tokens = as_tensor(tokens)
    out, _ = multi_head_attention(
        params.query(tokens),
        params.key(tokens),
        params.value(tokens),
        params.n_heads,
        params.dropout_rate,
        params.dropout_seed,
    )
    out = params.out(out)
    out = spectral_filter(out, params.filter)
    return layer_norm(tokens + out, params.ln_gamma, params.ln_beta)


@dataclass
class GmaParams:
    key_map: LinearMap
    query_map: LinearMap
    value_map: LinearMap
    lstm: LstmWeights
    ln_gamma: np.ndarray
    ln_beta: np.ndarray
    n_heads: int
    dropout_rate: float = 0.0
    dropout_seed: int = 0


def gma_forward(
    i_tokens: np.ndarray,
    d_tokens: np.ndarray,
    params: GmaParams,
    state: LstmState,
) -> tuple[np.ndarray, LstmState]:
    """Global memory attention: depth tokens query image-derived keys/values,
    the attended values run through the LSTM cell token-wise, then layer norm."""
    i_tokens = as_tensor(i_tokens)
    d_tokens = as_tensor(d_tokens)
    if i_tokens.shape != d_tokens.shape:
        raise ShapeError(f"token layouts differ: {i_tokens.shape} vs {d_tokens.shape}")
    ctx, _ = multi_head_attention(
        params.query_map(d_tokens),
        params.key_map(i_tokens),
        params.value_map(i_tokens),
        params.n_heads,
        params.dropout_rate,
        params.dropout_seed,
    )
    h, new_state = lstm_step(ctx, state, params.lstm)
    out = layer_norm(h, params.ln_gamma, params.ln_beta)
    return out, new_state


@dataclass
class GmanParams:
    embed_image: LinearMap  # 3 -> C
    embed_depth: LinearMap  # 3 -> C
    lsa: LsaParams
    gma: GmaParams
    out_map: LinearMap  # post-attention MLP, C -> C
    window: int


def init_gman_params(
    channels: int = 64,
    n_heads: int = 8,
    window: int = 7,
    dropout_rate: float = 0.0,
    seed: int = 0,
) -> GmanParams:
    """Seeded uniform(-1/sqrt(C), 1/sqrt(C)) initialization; no training."""
    n_tokens = window * window
    rng = np.random.default_rng(seed)
    filt = rng.uniform(0.5, 1.5, n_tokens) + 1j * rng.uniform(-0.5, 0.5, n_tokens)
    sub = rng.integers(0, 2**32, size=16)
    lsa = LsaParams(
        query=LinearMap.seeded(channels, channels, int(sub[0])),
        key=LinearMap.seeded(channels, channels, int(sub[1])),
        value=LinearMap.seeded(channels, channels, int(sub[2])),
        out=LinearMap.seeded(channels, channels, int(sub[3])),
        filter=filt,
        ln_gamma=np.ones(channels),
        ln_beta=np.zeros(channels),
        n_heads=n_heads,
        dropout_rate=dropout_rate,
        dropout_seed=int(sub[4]),
    )
    gma = GmaParams(
        key_map=LinearMap.seeded(channels, channels, int(sub[5])),
        query_map=LinearMap.seeded(channels, channels, int(sub[6])),
        value_map=LinearMap.seeded(channels, channels, int(sub[7])),
        lstm=LstmWeights.seeded(channels, int(sub[8])),
        ln_gamma=np.ones(channels),
        ln_beta=np.zeros(channels),
        n_heads=n_heads,
        dropout_rate=dropout_rate,
        dropout_seed=int(sub[9]),
    )
    return GmanParams(
        embed_image=LinearMap.seeded(3, channels, int(sub[10])),
        embed_depth=LinearMap.seeded(3, channels, int(sub[11])),
        lsa=lsa,
        gma=gma,
        out_map=LinearMap.seeded(channels, channels, int(sub[12])),
        window=window,
    )


def gman_forward(
    image: np.ndarray,
    depth: DepthMap,
    params: GmanParams,
    state: LstmState | None = None,
) -> tuple[np.ndarray, LstmState]:
    """Full stage-1 pass producing the (H, W, C) image feature map.

    The depth map is replicated to 3 channels at this boundary; LSTM state is
    threaded across consecutive frames by the caller.
    """
    image = as_tensor(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ShapeError(f"image must be (H, W, 3), got {image.shape}")
    if image.shape[:2] != depth.depth.shape:
        raise ShapeError("image and depth must share H, W")
    d3 = np.repeat(depth.depth[:, :, None], 3, axis=2)
    img_tokens, layout = partition_windows(params.embed_image(image)[None], params.window)
    dep_tokens, _ = partition_windows(params.embed_depth(d3)[None], params.window)
    if state is None:
        state = LstmState.zeros(img_tokens.shape)
    local = lsa_forward(img_tokens, params.lsa)
    fused, state = gma_forward(local, dep_tokens, params.gma, state)
    fused = params.out_map(fused)
    return merge_windows(fused, layout)[0], state
