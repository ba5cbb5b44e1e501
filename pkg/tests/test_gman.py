import numpy as np
import pytest

from savid.depth import DepthMap
from savid.gman import (
    GmaParams,
    LstmState,
    LstmWeights,
    gma_forward,
    gman_forward,
    init_gman_params,
    lstm_step,
    merge_windows,
    multi_head_attention,
    partition_windows,
)
from savid.numerics import LinearMap, ShapeError, inference_mode

rng = np.random.default_rng(2)


class TestWindows:
    def test_partition_shapes_aligned(self):
        x = rng.normal(size=(1, 14, 14, 4))
        tokens, layout = partition_windows(x, 7)
        assert tokens.shape == (4, 49, 4)
        assert layout.n_windows == 4

    def test_partition_pads_unaligned(self):
        x = rng.normal(size=(1, 10, 12, 3))
        tokens, layout = partition_windows(x, 7)
        assert (layout.padded_h, layout.padded_w) == (14, 14)
        assert tokens.shape == (4, 49, 3)

    def test_merge_is_exact_inverse(self):
        for h, w in [(14, 14), (10, 12), (7, 7), (9, 5)]:
            x = rng.normal(size=(2, h, w, 5))
            tokens, layout = partition_windows(x, 7)
            np.testing.assert_array_equal(merge_windows(tokens, layout), x)

    def test_window_content_is_contiguous_block(self):
        x = np.arange(14 * 14).reshape(1, 14, 14, 1).astype(float)
        tokens, _ = partition_windows(x, 7)
        np.testing.assert_array_equal(tokens[0, :, 0].reshape(7, 7), x[0, :7, :7, 0])

    def test_bad_rank_rejected(self):
        with pytest.raises(ShapeError):
            partition_windows(rng.normal(size=(14, 14, 4)), 7)


class TestLstm:
    def test_zero_everything_gives_zero_h(self):
        c = 4
        w = LstmWeights(np.zeros((c, 4 * c)), np.zeros((c, 4 * c)), np.zeros(4 * c))
        h, state = lstm_step(np.zeros((2, c)), LstmState.zeros((2, c)), w)
        np.testing.assert_array_equal(h, 0.0)
        np.testing.assert_array_equal(state.c, 0.0)

    def test_relu_hidden_nonnegative(self):
        c = 8
        w = LstmWeights.seeded(c, seed=5)
        x = rng.normal(scale=3.0, size=(6, c))
        h, _ = lstm_step(x, LstmState.zeros((6, c)), w)
        assert np.all(h >= 0.0)

    def test_forget_gate_scales_cell(self):
        # with x=0 and w_h=0, c' = sigmoid(bias_f) * c
        c = 2
        bias = np.zeros(4 * c)
        bias[c : 2 * c] = 100.0  # forget gate saturated open
        w = LstmWeights(np.zeros((c, 4 * c)), np.zeros((c, 4 * c)), bias)
        prev = LstmState(np.zeros((1, c)), np.array([[0.5, -0.25]]))
        _, state = lstm_step(np.zeros((1, c)), prev, w)
        np.testing.assert_allclose(state.c, [[0.5, -0.25]], atol=1e-12)

    def test_shape_mismatch_rejected(self):
        w = LstmWeights.seeded(4, seed=0)
        with pytest.raises(ShapeError):
            lstm_step(np.zeros((2, 3)), LstmState.zeros((2, 3)), w)


class TestAttention:
    def test_rows_stochastic(self):
        q = rng.normal(size=(3, 10, 8))
        out, attn = multi_head_attention(q, q, q, n_heads=2)
        np.testing.assert_allclose(attn.sum(axis=-1), 1.0, atol=1e-12)
        assert out.shape == (3, 10, 8)

    def test_uniform_attention_averages_values(self):
        v = rng.normal(size=(1, 5, 4))
        zeros = np.zeros((1, 5, 4))
        out, attn = multi_head_attention(zeros, zeros, v, n_heads=2)
        np.testing.assert_allclose(attn, 0.2, atol=1e-12)
        np.testing.assert_allclose(out, np.broadcast_to(v.mean(axis=1, keepdims=True), v.shape), atol=1e-12)

    def test_head_divisibility_enforced(self):
        q = rng.normal(size=(1, 4, 6))
        with pytest.raises(ShapeError):
            multi_head_attention(q, q, q, n_heads=4)

    def test_dropout_only_in_training_mode(self):
        q = rng.normal(size=(2, 6, 8))
        with inference_mode():
            a, _ = multi_head_attention(q, q, q, 2, dropout_rate=0.3, seed=1)
            b, _ = multi_head_attention(q, q, q, 2, dropout_rate=0.0)
        np.testing.assert_array_equal(a, b)
        train, _ = multi_head_attention(q, q, q, 2, dropout_rate=0.3, seed=1)
        assert not np.array_equal(train, b)


class TestGma:
    def test_state_threads_through(self):
        c, n = 8, 6
        params = GmaParams(
            key_map=LinearMap.seeded(c, c, 1),
            query_map=LinearMap.seeded(c, c, 2),
            value_map=LinearMap.seeded(c, c, 3),
            lstm=LstmWeights.seeded(c, 4),
            ln_gamma=np.ones(c),
            ln_beta=np.zeros(c),
            n_heads=2,
        )
        i_tok = rng.normal(size=(2, n, c))
        d_tok = rng.normal(size=(2, n, c))
        out1, s1 = gma_forward(i_tok, d_tok, params, LstmState.zeros(i_tok.shape))
        out2, s2 = gma_forward(i_tok, d_tok, params, s1)
        assert not np.array_equal(out1, out2)  # memory is active
        assert s2.h.shape == i_tok.shape

    def test_token_layout_mismatch_rejected(self):
        c = 8
        params = GmaParams(
            key_map=LinearMap.seeded(c, c, 1),
            query_map=LinearMap.seeded(c, c, 2),
            value_map=LinearMap.seeded(c, c, 3),
            lstm=LstmWeights.seeded(c, 4),
            ln_gamma=np.ones(c),
            ln_beta=np.zeros(c),
            n_heads=2,
        )
        with pytest.raises(ShapeError):
            gma_forward(
                rng.normal(size=(1, 4, c)),
                rng.normal(size=(1, 5, c)),
                params,
                LstmState.zeros((1, 4, c)),
            )


class TestGmanForward:
    def make_inputs(self, h=14, w=14, seed=20):
        r = np.random.default_rng(seed)
        image = r.uniform(0.0, 1.0, size=(h, w, 3))
        depth = r.uniform(1.0, 30.0, size=(h, w))
        return image, DepthMap(depth, np.ones((h, w), dtype=bool))

    def test_output_shape_and_defaults(self):
        params = init_gman_params(channels=64, n_heads=8, window=7, seed=0)
        image, depth = self.make_inputs()
        with inference_mode():
            out, state = gman_forward(image, depth, params)
        assert out.shape == (14, 14, 64)
        assert np.all(np.isfinite(out))

    def test_deterministic(self):
        params = init_gman_params(channels=16, n_heads=2, window=7, seed=1)
        image, depth = self.make_inputs()
        with inference_mode():
            a, _ = gman_forward(image, depth, params)
            b, _ = gman_forward(image, depth, params)
        np.testing.assert_array_equal(a, b)

    def test_state_carries_across_frames(self):
        params = init_gman_params(channels=16, n_heads=2, window=7, seed=2)
        image, depth = self.make_inputs()
        with inference_mode():
            out1, state = gman_forward(image, depth, params)
            out2, _ = gman_forward(image, depth, params, state)
        assert not np.array_equal(out1, out2)

    def test_depth_influences_output(self):
        params = init_gman_params(channels=16, n_heads=2, window=7, seed=3)
        image, depth = self.make_inputs()
        other = DepthMap(depth.depth * 2.0, depth.valid_mask)
        with inference_mode():
            a, _ = gman_forward(image, depth, params)
            b, _ = gman_forward(image, other, params)
        assert not np.array_equal(a, b)

    def test_bad_image_shape_rejected(self):
        params = init_gman_params(channels=16, n_heads=2, window=7, seed=4)
        _, depth = self.make_inputs()
        with pytest.raises(ShapeError):
            gman_forward(rng.normal(size=(14, 14, 4)), depth, params)
