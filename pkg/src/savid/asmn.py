"""Stage 2: fusion of image features with voxel features via sparse attention
and multiplicative memory gating across frames."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import LinearMap, ShapeError, as_tensor, batch_norm_affine, relu


@dataclass
class BnParams:
    """Frozen batch-norm statistics plus affine, applied channel-wise."""

    mean: np.ndarray
    var: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray
    eps: float = 1e-5

    @staticmethod
    def identity_stats(c: int) -> "BnParams":
        return BnParams(np.zeros(c), np.ones(c), np.ones(c), np.zeros(c))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return batch_norm_affine(x, self.mean, self.var, self.gamma, self.beta, self.eps)


@dataclass
class AsmnParams:
    map_q: LinearMap
    map_k: LinearMap
    map_v: LinearMap
    bn_qk: BnParams
    bn_h: BnParams
    rho: float = 0.25  # sparsity fraction: keep top ceil(rho*T) logits per row
    mode: str = "attention"  # or "elementwise"
    apply_relu: bool = True  # disable together with apply_value_map for the
    apply_value_map: bool = True  # plain multiplicative-gate variant

    def __post_init__(self):
        if not 0.0 < self.rho <= 1.0:
            raise ValueError(f"rho must be in (0, 1], got {self.rho}")
        if self.mode not in ("attention", "elementwise"):
            raise ValueError(f"unknown asmn mode {self.mode!r}")


@dataclass
class AsmnState:
    """Gates are purely multiplicative, so the initial state is all-ones;
    zeros would annihilate the first frame entirely."""

    h: np.ndarray  # (T, C)
    c: np.ndarray  # (T, C)

    def __post_init__(self):
        self.h = as_tensor(self.h)
        self.c = as_tensor(self.c)
        if self.h.shape != self.c.shape:
            raise ShapeError("ASMN h and c must share a shape")
        if not (np.all(np.isfinite(self.h)) and np.all(np.isfinite(self.c))):
            raise ValueError("ASMN state must be finite")

    @staticmethod
    def ones(tokens: int, channels: int) -> "AsmnState":
        return AsmnState(np.ones((tokens, channels)), np.ones((tokens, channels)))


def sparse_attention_logits(q_g: np.ndarray, k: np.ndarray, rho: float) -> np.ndarray:
    """Scaled dot-product logits with per-row top-ceil(rho*T) sparsification.

    Masked entries are -inf; ties broken by lower column index.
    """
    q_g = as_tensor(q_g)
    k = as_tensor(k)
    if q_g.ndim != 2 or q_g.shape != k.shape:
        raise ShapeError(f"expected matching (T, C) inputs, got {q_g.shape} and {k.shape}")
    t, c = q_g.shape
    if t == 0:
        raise ValueError("empty token set")
    if not 0.0 < rho <= 1.0:
        raise ValueError(f"rho must be in (0, 1], got {rho}")
    logits = q_g @ k.T / np.sqrt(c)
    keep = math.ceil(rho * t)
    if keep >= t:
        return logits
    # keep-th largest per row as the cut; strictly-above entries always stay,
    # ties at the cut admitted in ascending column order (lower index wins)
    cut = np.partition(logits, t - keep, axis=1)[:, t - keep : t - keep + 1]
    above = logits > cut
    at_cut = logits == cut
    quota = keep - above.sum(axis=1, keepdims=True)
    admitted = at_cut & (np.cumsum(at_cut, axis=1) <= quota)
    return np.where(above | admitted, logits, -np.inf)


def _masked_softmax_rows(logits: np.ndarray) -> np.ndarray:
    # exp(-inf) underflows to an exact 0 weight, so masked columns drop out
    e = np.exp(logits - np.max(logits, axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def asmn_step(
    f_i: np.ndarray,
    f_l: np.ndarray,
    params: AsmnParams,
    state: AsmnState,
) -> tuple[np.ndarray, AsmnState]:
    """One fusion step over flattened (H*W, C) tokens.

    The query/key interaction is either sparse attention over the mapped
    tokens (default) or a strictly elementwise product; the gate algebra is
    the same in both modes.
    """
    f_i = as_tensor(f_i)
    f_l = as_tensor(f_l)
    if f_i.shape != f_l.shape or f_i.ndim != 3:
        raise ShapeError(f"expected matching (H, W, C) inputs, got {f_i.shape} and {f_l.shape}")
    h, w, c = f_i.shape
    tokens = h * w
    if state.h.shape != (tokens, c):
        raise ShapeError(f"state shape {state.h.shape} does not match {(tokens, c)}")
    v = f_i.reshape(tokens, c)
    q_src = f_l.reshape(tokens, c)
    q = params.map_q(q_src)
    k = params.map_k(v)
    if params.mode == "attention":
        attn = _masked_softmax_rows(sparse_attention_logits(q, k, params.rho))
        interaction = attn @ k
    else:
        interaction = q * k
    beta_h = params.bn_qk(interaction) * params.bn_h(state.h)
    beta_c = relu(beta_h * state.c)
    lv = params.map_v(v) if params.apply_value_map else v
    gated = beta_c * lv
    if params.apply_relu:
        gated = relu(gated)
    f_s = gated * np.tanh(beta_h * lv)
    c_t = beta_c * f_s
    h_t = relu(beta_h) * np.tanh(c_t)
    return f_s.reshape(h, w, c), AsmnState(h_t, c_t)


def asmn_sequence(
    frames: list[tuple[np.ndarray, np.ndarray]],
    params: AsmnParams,
) -> tuple[np.ndarray, list[AsmnState]]:
    """Fold asmn_step over (F_I, F_L) frames from the all-ones initial state.

    Returns the final fused map and the full state trajectory.
    """
    if not frames:
        raise ValueError("asmn_sequence needs at least one frame")
    h, w, c = np.shape(frames[0][0])
    state = AsmnState.ones(h * w, c)
    trajectory: list[AsmnState] = []
    f_s = None
    for f_i, f_l in frames:
        f_s, state = asmn_step(f_i, f_l, params, state)
        trajectory.append(state)
    return f_s, trajectory


def init_asmn_params(
    channels: int = 64,
    rho: float = 0.25,
    mode: str = "attention",
    seed: int = 0,
) -> AsmnParams:
    rng = np.random.default_rng(seed)
    sub = rng.integers(0, 2**32, size=3)
    return AsmnParams(
        map_q=LinearMap.seeded(channels, channels, int(sub[0])),
        map_k=LinearMap.seeded(channels, channels, int(sub[1])),
        map_v=LinearMap.seeded(channels, channels, int(sub[2])),
        bn_qk=BnParams.identity_stats(channels),
        bn_h=BnParams.identity_stats(channels),
        rho=rho,
        mode=mode,
    )
