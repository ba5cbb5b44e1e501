"""Gradient checks and oracle spot-checks, runnable from the CLI.

Analytic gradients for softmax, layer norm, and the LSTM cell are derived by
hand here; the composite stage-1/stage-2 gradients come from an independent
float64 torch re-implementation whose forward pass is first verified against
the numpy path.
"""

from __future__ import annotations

import numpy as np

from . import oracles
from .asmn import AsmnParams, AsmnState, asmn_step, init_asmn_params
from .gman import GmaParams, LstmState, LstmWeights, gma_forward, lstm_step
from .kgf import NeighborSpec, kgf_fuse, kgf_oracle
from .numerics import (
    LinearMap,
    grad_check,
    inference_mode,
    layer_norm,
    softmax_lastdim,
    spectral_filter,
)
from .pointcloud import PointCloud, fps_sample, sparse_conv_downsample, voxelize_mean

GRAD_TOLERANCE = 1e-5


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def check_softmax_grad(seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    x = rng.normal(size=6)
    w = rng.normal(size=6)

    def f(v):
        return float(w @ softmax_lastdim(v))

    s = softmax_lastdim(x)
    analytic = s * (w - float(s @ w))
    return grad_check(f, x, analytic)


def check_layer_norm_grad(seed: int = 1) -> float:
    rng = np.random.default_rng(seed)
    x = rng.normal(size=7)
    w = rng.normal(size=7)  # ||LN(x)||^2 is nearly constant, so probe linearly
    eps = 1e-5
    gamma, beta = np.ones(7), np.zeros(7)

    def f(v):
        return float(w @ layer_norm(v, gamma, beta, eps))

    mu = x.mean()
    sigma = np.sqrt(x.var() + eps)
    xh = (x - mu) / sigma
    analytic = (w - w.mean() - xh * np.mean(w * xh)) / sigma
    return grad_check(f, x, analytic)


def check_lstm_grad(seed: int = 2) -> float:
    rng = np.random.default_rng(seed)
    c_dim = 3
    weights = LstmWeights.seeded(c_dim, seed)
    state = LstmState(rng.normal(size=(2, c_dim)), rng.normal(size=(2, c_dim)))
    x0 = rng.normal(size=(2, c_dim))

    def f(v):
        h, new = lstm_step(v, state, weights)
        return float(np.sum(h**2) + np.sum(new.c**2))

    gates = x0 @ weights.w_x + state.h @ weights.w_h + weights.bias
    zi, zf, zg, zo = np.split(gates, 4, axis=-1)
    i, fg, g, o = _sigmoid(zi), _sigmoid(zf), np.tanh(zg), _sigmoid(zo)
    c_new = fg * state.c + i * g
    relu_c = np.maximum(c_new, 0.0)
    h_new = o * relu_c
    dh = 2.0 * h_new
    dc = 2.0 * c_new + dh * o * (c_new > 0)
    dzi = dc * g * i * (1 - i)
    dzf = dc * state.c * fg * (1 - fg)
    dzg = dc * i * (1 - g**2)
    dzo = dh * relu_c * o * (1 - o)
    dz = np.concatenate([dzi, dzf, dzg, dzo], axis=-1)
    analytic = dz @ weights.w_x.T
    return grad_check(f, x0, analytic)


def _require_torch():
    try:
        import torch
    except ImportError as exc:
        raise RuntimeError(
            "the stage-1/stage-2 gradient checks need the optional torch "
            "dependency (pip install savid[verify])"
        ) from exc
    return torch


def _torch_linear(lin: LinearMap, torch):
    w = torch.tensor(lin.weight)
    b = torch.tensor(lin.bias) if lin.bias is not None else None
    return lambda x: x @ w + b if b is not None else x @ w


def _torch_gma(i_tok, d_tok, params: GmaParams, state: LstmState, torch):
    km = _torch_linear(params.key_map, torch)
    qm = _torch_linear(params.query_map, torch)
    vm = _torch_linear(params.value_map, torch)
    b, n, c = i_tok.shape
    nh = params.n_heads
    d = c // nh

    def heads(x):
        return x.reshape(b, n, nh, d).permute(0, 2, 1, 3)

    q, k, v = heads(qm(d_tok)), heads(km(i_tok)), heads(vm(i_tok))
    attn = torch.softmax(q @ k.transpose(-2, -1) / np.sqrt(d), dim=-1)
    ctx = (attn @ v).permute(0, 2, 1, 3).reshape(b, n, c)
    gates = (
        ctx @ torch.tensor(params.lstm.w_x)
        + torch.tensor(state.h) @ torch.tensor(params.lstm.w_h)
        + torch.tensor(params.lstm.bias)
    )
    zi, zf, zg, zo = gates.chunk(4, dim=-1)
    c_new = torch.sigmoid(zf) * torch.tensor(state.c) + torch.sigmoid(zi) * torch.tanh(zg)
    h = torch.sigmoid(zo) * torch.relu(c_new)
    mu = h.mean(dim=-1, keepdim=True)
    var = h.var(dim=-1, unbiased=False, keepdim=True)
    normed = (h - mu) / torch.sqrt(var + 1e-5)
    return torch.tensor(params.ln_gamma) * normed + torch.tensor(params.ln_beta)


def check_gma_grad(seed: int = 3) -> float:
    torch = _require_torch()
    rng = np.random.default_rng(seed)
    c, n = 4, 2
    params = GmaParams(
        key_map=LinearMap.seeded(c, c, seed),
        query_map=LinearMap.seeded(c, c, seed + 1),
        value_map=LinearMap.seeded(c, c, seed + 2),
        lstm=LstmWeights.seeded(c, seed + 3),
        ln_gamma=np.ones(c),
        ln_beta=np.zeros(c),
        n_heads=2,
    )
    state = LstmState(rng.normal(size=(1, n, c)), rng.normal(size=(1, n, c)))
    d_tok = rng.normal(size=(1, n, c))
    x0 = rng.normal(size=(1, n, c))

    def f(v):
        with inference_mode():
            out, _ = gma_forward(v, d_tok, params, state)
        return float(np.sum(out**2))

    xt = torch.tensor(x0, requires_grad=True)
    out_t = _torch_gma(xt, torch.tensor(d_tok), params, state, torch)
    with inference_mode():
        out_np, _ = gma_forward(x0, d_tok, params, state)
    mirror_err = float(np.abs(out_t.detach().numpy() - out_np).max())
    if mirror_err > 1e-12:
        raise RuntimeError(f"torch mirror diverges from forward pass: {mirror_err:.2e}")
    loss = (out_t**2).sum()
    loss.backward()
    return grad_check(f, x0, xt.grad.numpy())


def _torch_asmn(f_i, f_l, params: AsmnParams, state: AsmnState, torch):
    assert params.rho == 1.0, "torch mirror covers the dense (rho=1) case"
    h, w, c = f_i.shape
    v = f_i.reshape(h * w, c)
    q_src = torch.tensor(np.asarray(f_l)).reshape(h * w, c)
    q = _torch_linear(params.map_q, torch)(q_src)
    k = _torch_linear(params.map_k, torch)(v)
    attn = torch.softmax(q @ k.T / np.sqrt(c), dim=-1)
    inter = attn @ k

    def bn(x, p):
        return (
            torch.tensor(p.gamma)
            * (x - torch.tensor(p.mean))
            / torch.sqrt(torch.tensor(p.var) + p.eps)
            + torch.tensor(p.beta)
        )

    beta_h = bn(inter, params.bn_qk) * bn(torch.tensor(state.h), params.bn_h)
    beta_c = torch.relu(beta_h * torch.tensor(state.c))
    lv = _torch_linear(params.map_v, torch)(v)
    f_s = torch.relu(beta_c * lv) * torch.tanh(beta_h * lv)
    return f_s


def check_asmn_grad(seed: int = 4) -> float:
    torch = _require_torch()
    rng = np.random.default_rng(seed)
    c, h, w = 2, 1, 2
    params = init_asmn_params(channels=c, rho=1.0, seed=seed)
    state = AsmnState(
        np.abs(rng.normal(size=(h * w, c))) + 0.5,
        np.abs(rng.normal(size=(h * w, c))) + 0.5,
    )
    f_l = rng.normal(size=(h, w, c))
    x0 = rng.normal(size=(h, w, c))

    def f(v):
        out, _ = asmn_step(v, f_l, params, state)
        return float(np.sum(out**2))

    xt = torch.tensor(x0, requires_grad=True)
    out_t = _torch_asmn(xt.reshape(h, w, c), f_l, params, state, torch)
    out_np, _ = asmn_step(x0, f_l, params, state)
    mirror_err = float(np.abs(out_t.detach().numpy().reshape(h, w, c) - out_np).max())
    if mirror_err > 1e-12:
        raise RuntimeError(f"torch mirror diverges from forward pass: {mirror_err:.2e}")
    loss = (out_t**2).sum()
    loss.backward()
    return grad_check(f, x0, xt.grad.numpy().reshape(h, w, c))


def run_gradient_checks() -> list[tuple[str, bool, str]]:
    results = []
    for name, fn in [
        ("softmax", check_softmax_grad),
        ("layer_norm", check_layer_norm_grad),
        ("lstm_step", check_lstm_grad),
        ("gma_forward", check_gma_grad),
        ("asmn_step", check_asmn_grad),
    ]:
        try:
            err = fn()
            results.append((f"grad/{name}", err < GRAD_TOLERANCE, f"max rel err {err:.2e}"))
        except Exception as exc:
            results.append((f"grad/{name}", False, str(exc)))
    return results


def run_oracle_checks(seed: int = 0) -> list[tuple[str, bool, str]]:
    rng = np.random.default_rng(seed)
    results = []

    a, b = rng.normal(size=(4, 5)), rng.normal(size=(5, 3))
    err = np.abs(a @ b - oracles.matmul_naive(a, b)).max()
    results.append(("oracle/matmul", err < 1e-12, f"max abs err {err:.2e}"))

    x = rng.normal(size=(8, 3))
    filt = rng.normal(size=8) + 1j * rng.normal(size=8)
    err = np.abs(spectral_filter(x, filt) - oracles.spectral_filter_naive(x, filt)).max()
    results.append(("oracle/spectral_filter", err < 1e-9, f"max abs err {err:.2e}"))

    pts = np.hstack([rng.uniform(0, 8, size=(300, 3)), rng.uniform(0, 1, size=(300, 1))])
    cloud = PointCloud(pts)
    grid, dropped = voxelize_mean(cloud, (0, 0, 0), (1, 1, 1), (8, 8, 8))
    ref_cells, ref_dropped = oracles.voxelize_reference(cloud, (0, 0, 0), (1, 1, 1), (8, 8, 8))
    ok = dropped == ref_dropped and set(grid.cells) == set(ref_cells)
    if ok:
        ok = all(
            np.abs(grid.cells[k][0] - ref_cells[k][0]).max() < 1e-12
            and grid.cells[k][1] == ref_cells[k][1]
            for k in grid.cells
        )
    results.append(("oracle/voxelize_mean", ok, f"{len(grid.cells)} cells"))

    small = PointCloud(
        np.hstack([rng.uniform(0, 10, size=(60, 3)), rng.uniform(0, 1, size=(60, 1))])
    )
    got = fps_sample(small, 12, 0)
    ref = oracles.fps_reference(small.xyz, 12, 0)
    results.append(("oracle/fps_sample", got == ref, f"{len(got)} picks"))

    kernel = rng.normal(size=(3, 3, 3, 2, 3))
    g = PointCloud(np.hstack([rng.uniform(0, 6, size=(40, 3)), rng.uniform(0, 1, size=(40, 1))]))
    grid2, _ = voxelize_mean(g, (0, 0, 0), (1, 1, 1), (6, 6, 6))
    grid2.cells = {k: (v[0][:2], v[1]) for k, v in grid2.cells.items()}  # 2-channel features
    conv = sparse_conv_downsample(grid2, kernel, stride=2)
    ref_conv = oracles.dense_conv_reference(grid2, kernel, stride=2)
    ok = set(conv.cells) == set(ref_conv) and all(
        np.abs(conv.cells[k][0] - ref_conv[k]).max() < 1e-10 for k in conv.cells
    )
    results.append(("oracle/sparse_conv", ok, f"{len(conv.cells)} active sites"))

    f_s = rng.normal(size=(5, 5, 4))
    f_l = rng.normal(size=(5, 5, 4))
    f_l[rng.random((5, 5)) < 0.3] = 0.0
    fused = kgf_fuse(f_s, f_l)
    ref_fused = kgf_oracle(f_s, f_l)
    exact = np.array_equal(fused, ref_fused)
    results.append(("oracle/kgf_fuse", exact, "exact equality" if exact else "mismatch"))
    return results


def run_all() -> list[tuple[str, bool, str]]:
    return run_gradient_checks() + run_oracle_checks()
