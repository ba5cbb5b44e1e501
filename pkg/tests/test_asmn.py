import numpy as np
import pytest

from savid.asmn import (
    AsmnParams,
    AsmnState,
    _masked_softmax_rows,
    asmn_sequence,
    asmn_step,
    init_asmn_params,
    sparse_attention_logits,
)
from savid.numerics import LinearMap, ShapeError, batch_norm_affine, relu
from savid.oracles import sparse_attention_mask_reference

rng = np.random.default_rng(3)


def small_params(c=4, rho=1.0, mode="attention", seed=0, **kw):
    p = init_asmn_params(channels=c, rho=rho, mode=mode, seed=seed)
    for name, val in kw.items():
        setattr(p, name, val)
    return p


class TestSparseAttentionLogits:
    def test_rho_one_is_dense(self):
        q = rng.normal(size=(6, 4))
        k = rng.normal(size=(6, 4))
        logits = sparse_attention_logits(q, k, 1.0)
        assert np.isfinite(logits).all()
        np.testing.assert_allclose(logits, q @ k.T / 2.0, atol=1e-12)

    def test_keep_one_entry_is_argmax(self):
        q = rng.normal(size=(8, 4))
        k = rng.normal(size=(8, 4))
        logits = sparse_attention_logits(q, k, 0.01)
        dense = q @ k.T / 2.0
        for r in range(8):
            kept = np.flatnonzero(np.isfinite(logits[r]))
            assert kept.tolist() == [int(np.argmax(dense[r]))]

    def test_matches_sort_oracle(self):
        for trial in range(30):
            r = np.random.default_rng(trial)
            t = int(r.integers(1, 10))
            q = r.normal(size=(t, 3))
            k = r.normal(size=(t, 3))
            if trial % 2:
                q, k = np.round(q), np.round(k)  # force ties
            rho = float(r.uniform(0.05, 1.0))
            logits = sparse_attention_logits(q, k, rho)
            ref_mask = sparse_attention_mask_reference(q @ k.T / np.sqrt(3), rho)
            np.testing.assert_array_equal(np.isfinite(logits), ref_mask)

    def test_tie_prefers_lower_column(self):
        # identical keys give a full row of equal logits
        q = np.ones((4, 2))
        k = np.ones((4, 2))
        logits = sparse_attention_logits(q, k, 0.5)
        for r in range(4):
            assert np.flatnonzero(np.isfinite(logits[r])).tolist() == [0, 1]

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            sparse_attention_logits(np.empty((0, 3)), np.empty((0, 3)), 0.5)

    def test_bad_rho_rejected(self):
        q = rng.normal(size=(3, 2))
        with pytest.raises(ValueError):
            sparse_attention_logits(q, q, 0.0)

    def test_masked_softmax_rows_stochastic(self):
        q = rng.normal(size=(7, 5))
        attn = _masked_softmax_rows(sparse_attention_logits(q, q, 0.4))
        np.testing.assert_allclose(attn.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(attn >= 0.0)


class TestAsmnStep:
    def test_zero_value_map_gives_zero_output(self):
        c = 4
        p = small_params(c)
        p.map_v = LinearMap(np.zeros((c, c)), np.zeros(c))
        f = rng.normal(size=(2, 2, c))
        out, _ = asmn_step(f, f, p, AsmnState.ones(4, c))
        np.testing.assert_array_equal(out, 0.0)

    def test_zero_qk_maps_annihilate(self):
        # documents the multiplicative-gate hazard: beta_h = 0 kills F_S and h
        c = 4
        p = small_params(c)
        p.map_q = LinearMap(np.zeros((c, c)), np.zeros(c))
        p.map_k = LinearMap(np.zeros((c, c)), np.zeros(c))
        f = rng.normal(size=(2, 2, c))
        out, state = asmn_step(f, f, p, AsmnState.ones(4, c))
        np.testing.assert_array_equal(out, 0.0)
        np.testing.assert_array_equal(state.h, 0.0)

    def test_matches_scalar_oracle(self):
        # 2-token, C=2 transcription of the gate equations
        c, tokens = 2, 2
        p = small_params(c, rho=1.0, seed=7)
        f_i = rng.normal(size=(1, 2, c))
        f_l = rng.normal(size=(1, 2, c))
        h0 = rng.normal(size=(tokens, c)) ** 2 + 0.1
        c0 = rng.normal(size=(tokens, c)) ** 2 + 0.1
        state = AsmnState(h0, c0)
        out, new_state = asmn_step(f_i, f_l, p, state)

        v = f_i.reshape(tokens, c)
        q = p.map_q(f_l.reshape(tokens, c))
        k = p.map_k(v)
        logits = q @ k.T / np.sqrt(c)
        e = np.exp(logits - logits.max(axis=1, keepdims=True))
        attn = e / e.sum(axis=1, keepdims=True)
        inter = attn @ k
        bn = lambda x, bp: batch_norm_affine(x, bp.mean, bp.var, bp.gamma, bp.beta, bp.eps)
        beta_h = bn(inter, p.bn_qk) * bn(h0, p.bn_h)
        beta_c = relu(beta_h * c0)
        lv = p.map_v(v)
        f_s = relu(beta_c * lv) * np.tanh(beta_h * lv)
        np.testing.assert_allclose(out.reshape(tokens, c), f_s, atol=1e-12)
        np.testing.assert_allclose(new_state.c, beta_c * f_s, atol=1e-12)
        np.testing.assert_allclose(new_state.h, relu(beta_h) * np.tanh(beta_c * f_s), atol=1e-12)

    def test_tanh_bound_invariant(self):
        # |F_S| <= |ReLU(beta_c * lv)| elementwise because |tanh| < 1
        c = 8
        p = small_params(c, rho=0.5, seed=9)
        f_i = rng.normal(size=(3, 3, c))
        f_l = rng.normal(size=(3, 3, c))
        out, _ = asmn_step(f_i, f_l, p, AsmnState.ones(9, c))
        v = f_i.reshape(9, c)
        k = p.map_k(v)
        attn = _masked_softmax_rows(sparse_attention_logits(p.map_q(f_l.reshape(9, c)), k, 0.5))
        bn = lambda x, bp: batch_norm_affine(x, bp.mean, bp.var, bp.gamma, bp.beta, bp.eps)
        beta_h = bn(attn @ k, p.bn_qk) * bn(np.ones((9, c)), p.bn_h)
        beta_c = relu(beta_h * np.ones((9, c)))
        assert np.all(np.abs(out.reshape(9, c)) <= np.abs(relu(beta_c * p.map_v(v))) + 1e-15)

    def test_elementwise_mode_differs(self):
        c = 4
        f_i = rng.normal(size=(2, 2, c))
        f_l = rng.normal(size=(2, 2, c))
        a, _ = asmn_step(f_i, f_l, small_params(c, mode="attention", seed=3), AsmnState.ones(4, c))
        b, _ = asmn_step(f_i, f_l, small_params(c, mode="elementwise", seed=3), AsmnState.ones(4, c))
        assert not np.array_equal(a, b)

    def test_shape_mismatch_rejected(self):
        p = small_params(4)
        with pytest.raises(ShapeError):
            asmn_step(rng.normal(size=(2, 2, 4)), rng.normal(size=(2, 3, 4)), p, AsmnState.ones(4, 4))

    def test_nonfinite_state_rejected(self):
        with pytest.raises(ValueError):
            AsmnState(np.full((2, 2), np.nan), np.ones((2, 2)))


class TestAsmnSequence:
    def test_single_frame_equals_step(self):
        c = 4
        p = small_params(c, rho=0.5, seed=11)
        f_i = rng.normal(size=(2, 2, c))
        f_l = rng.normal(size=(2, 2, c))
        seq_out, traj = asmn_sequence([(f_i, f_l)], p)
        step_out, step_state = asmn_step(f_i, f_l, p, AsmnState.ones(4, c))
        np.testing.assert_array_equal(seq_out, step_out)
        assert len(traj) == 1
        np.testing.assert_array_equal(traj[0].c, step_state.c)

    def test_memory_active_over_repeats(self):
        c = 4
        p = small_params(c, rho=1.0, seed=13)
        f_i = rng.normal(size=(2, 2, c))
        f_l = rng.normal(size=(2, 2, c))
        out1, _ = asmn_sequence([(f_i, f_l)], p)
        out7, traj = asmn_sequence([(f_i, f_l)] * 7, p)
        assert len(traj) == 7
        assert not np.array_equal(out1, out7)

    def test_trajectory_length_matches_frames(self):
        c = 4
        p = small_params(c)
        frames = [(rng.normal(size=(2, 2, c)), rng.normal(size=(2, 2, c))) for _ in range(3)]
        _, traj = asmn_sequence(frames, p)
        assert len(traj) == 3

    def test_empty_sequence_rejected(self):
        with pytest.raises(ValueError):
            asmn_sequence([], small_params(4))


class TestParams:
    def test_bad_rho_rejected(self):
        with pytest.raises(ValueError):
            init_asmn_params(channels=4, rho=1.5)

    def test_bad_mode_rejected(self):
        with pytest.raises(ValueError):
            init_asmn_params(channels=4, mode="dense")

    def test_seeded_determinism(self):
        a = init_asmn_params(channels=8, seed=21)
        b = init_asmn_params(channels=8, seed=21)
        np.testing.assert_array_equal(a.map_q.weight, b.map_q.weight)
