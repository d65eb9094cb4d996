"""Forward-semantics tests for the differentiable ops: worked examples,
published layer constants, and the op-level properties."""

import numpy as np
import pytest

from lidf.errors import InvalidArgumentError, InvalidStateError
from lidf.tensor_core import Tensor, functional as F, nn

from conftest import spaced_values


def t(data, dtype=np.float32, grad=False):
    return Tensor(np.asarray(data, dtype=dtype), requires_grad=grad)


class TestConv1d:
    def test_all_ones_sums_to_kernel(self):
        out = F.conv1d(t(np.ones((1, 9))), t(np.ones((1, 1, 3))), stride=3)
        assert out.data.tolist() == [[3.0, 3.0, 3.0]]

    def test_hand_computed_correlation(self):
        out = F.conv1d(t([[1, 2, 3, 4]]), t([[[1, 0, -1]]]), stride=1)
        assert out.data.tolist() == [[-2.0, -2.0]]

    def test_first_layer_parameter_count(self):
        # 128 filters, 1 input channel, kernel 3
        w = nn.Conv1d(1, 128, 3, 3, np.random.default_rng(0)).weight
        assert w.size == 384

    def test_channel_mismatch_raises(self):
        with pytest.raises(InvalidArgumentError):
            F.conv1d(t(np.ones((2, 10))), t(np.ones((4, 3, 3))), 1)

    def test_input_shorter_than_kernel_raises(self):
        with pytest.raises(InvalidArgumentError):
            F.conv1d(t(np.ones((1, 2))), t(np.ones((1, 1, 3))), 1)

    def test_output_length_formula(self, rng):
        for _ in range(25):
            k = int(rng.integers(1, 10))
            stride = int(rng.integers(1, 5))
            length = int(rng.integers(k, k + 60))
            x = t(rng.normal(size=(2, length)).astype(np.float32))
            w = t(rng.normal(size=(3, 2, k)).astype(np.float32))
            out = F.conv1d(x, w, stride)
            assert out.shape == (3, (length - k) // stride + 1)

    def test_batched_matches_unbatched(self, rng):
        x = rng.normal(size=(4, 2, 20)).astype(np.float32)
        w = t(rng.normal(size=(3, 2, 5)).astype(np.float32))
        batched = F.conv1d(t(x), w, 2).data
        for i in range(4):
            single = F.conv1d(t(x[i]), w, 2).data
            assert np.array_equal(batched[i], single)


class TestConv2d:
    def test_published_first_block_shape(self, rng):
        x = t(np.ones((3, 128, 128), dtype=np.float32))
        w = t(rng.normal(size=(64, 3, 3, 3)).astype(np.float32))
        assert F.conv2d(x, w, (1, 1), (1, 1)).shape == (64, 128, 128)

    def test_scalar_multiply(self):
        out = F.conv2d(t([[[3.0]]]), t([[[[4.0]]]]), 1, 0)
        assert out.data.reshape(()) == pytest.approx(12.0)

    def test_hand_computed_window_sums(self):
        x = t(np.eye(3, dtype=np.float32)[None])
        w = t(np.ones((1, 1, 2, 2), dtype=np.float32))
        out = F.conv2d(x, w, 1, 0)
        assert out.data.tolist() == [[[2.0, 1.0], [1.0, 2.0]]]

    def test_channel_mismatch_raises(self):
        with pytest.raises(InvalidArgumentError):
            F.conv2d(t(np.ones((2, 5, 5))), t(np.ones((1, 3, 3, 3))), 1, 0)

    def test_kernel_exceeds_padded_input_raises(self):
        with pytest.raises(InvalidArgumentError):
            F.conv2d(t(np.ones((1, 2, 2))), t(np.ones((1, 1, 5, 5))), 1, 1)

    def test_output_shape_formula(self, rng):
        for _ in range(20):
            kh, kw = int(rng.integers(1, 5)), int(rng.integers(1, 5))
            sh, sw = int(rng.integers(1, 4)), int(rng.integers(1, 4))
            ph, pw = int(rng.integers(0, 3)), int(rng.integers(0, 3))
            h = int(rng.integers(max(1, kh - 2 * ph), kh + 12))
            w_ext = int(rng.integers(max(1, kw - 2 * pw), kw + 12))
            if h + 2 * ph < kh or w_ext + 2 * pw < kw:
                continue
            x = t(rng.normal(size=(2, h, w_ext)).astype(np.float32))
            w = t(rng.normal(size=(3, 2, kh, kw)).astype(np.float32))
            out = F.conv2d(x, w, (sh, sw), (ph, pw))
            assert out.shape == (
                3,
                (h + 2 * ph - kh) // sh + 1,
                (w_ext + 2 * pw - kw) // sw + 1,
            )


class TestMaxPool1d:
    def test_max_of_windows(self):
        out = F.maxpool1d(t([[1, 3, 2, 5, 4, 6]]), 3, 3)
        assert out.data.tolist() == [[3.0, 6.0]]

    def test_constant_input(self):
        out = F.maxpool1d(t(np.full((2, 9), 7.0)), 3, 3)
        assert np.all(out.data == 7.0)

    def test_sliding_max(self):
        out = F.maxpool1d(t([[1, 2, 3, 4, 5]]), 2, 1)
        assert out.data.tolist() == [[2.0, 3.0, 4.0, 5.0]]

    def test_window_larger_than_input_raises(self):
        with pytest.raises(InvalidArgumentError):
            F.maxpool1d(t(np.ones((1, 2))), 3, 1)

    def test_backward_conserves_gradient_mass(self, rng):
        # no ties: every window's gradient lands on exactly one input
        x = Tensor(spaced_values(rng, (2, 3, 17)).astype(np.float32), requires_grad=True)
        out = F.maxpool1d(x, 3, 2)
        out.sum().backward()
        assert x.grad.sum() == pytest.approx(out.data.size)

    def test_tie_routes_to_lowest_index(self):
        x = Tensor(np.ones((1, 1, 3), dtype=np.float32), requires_grad=True)
        F.maxpool1d(x, 3, 3).sum().backward()
        assert x.grad.tolist() == [[[1.0, 0.0, 0.0]]]


class TestAvgPool2d:
    def test_ones_stay_ones_at_published_shape(self):
        out = F.avgpool2d(t(np.ones((64, 128, 128))), (2, 2), (2, 2))
        assert out.shape == (64, 64, 64)
        assert np.all(out.data == 1.0)

    def test_second_block_shape(self):
        out = F.avgpool2d(t(np.ones((64, 64, 64))), (2, 2), (2, 2))
        assert out.shape == (64, 32, 32)

    def test_arithmetic_mean(self):
        out = F.avgpool2d(t([[[1.0, 2.0], [3.0, 4.0]]]), (2, 2), (2, 2))
        assert out.data.reshape(()) == pytest.approx(2.5)

    def test_window_larger_than_input_raises(self):
        with pytest.raises(InvalidArgumentError):
            F.avgpool2d(t(np.ones((1, 2, 2))), (3, 3), (1, 1))

    def test_backward_distributes_uniformly(self):
        x = Tensor(np.ones((1, 4, 4), dtype=np.float32), requires_grad=True)
        F.avgpool2d(x, (2, 2), (2, 2)).sum().backward()
        assert np.allclose(x.grad, 0.25)


class TestBatchNorm:
    def test_already_normalized_passthrough(self, rng):
        x = rng.normal(size=(64, 3, 10)).astype(np.float32)
        x -= x.mean(axis=(0, 2), keepdims=True)
        x /= x.std(axis=(0, 2), keepdims=True)
        bn = nn.BatchNorm(3, spatial_ndim=1)
        out = bn(Tensor(x))
        assert np.allclose(out.data, x, atol=1e-4)

    def test_constant_channel_collapses_to_beta(self):
        bn = nn.BatchNorm(2, spatial_ndim=1)
        bn.beta.data[:] = [0.5, -1.5]
        out = bn(Tensor(np.full((8, 2, 4), 3.0, dtype=np.float32)))
        assert np.allclose(out.data[:, 0], 0.5, atol=1e-3)
        assert np.allclose(out.data[:, 1], -1.5, atol=1e-3)

    def test_two_point_batch_closed_form(self):
        a, b, gamma = 3.0, 7.0, 2.0
        bn = nn.BatchNorm(1, spatial_ndim=1)
        bn.gamma.data[:] = gamma
        x = np.array([[[a]], [[b]]], dtype=np.float32)
        out = bn(Tensor(x)).data.reshape(2)
        # mean (a+b)/2, biased var ((b-a)/2)^2 -> normalized to -/+1 then scaled
        assert out[0] == pytest.approx(-gamma, rel=1e-4)
        assert out[1] == pytest.approx(gamma, rel=1e-4)

    def test_train_mode_output_statistics(self, rng):
        x = Tensor(rng.normal(2.0, 3.0, size=(16, 4, 25)).astype(np.float32))
        bn = nn.BatchNorm(4, spatial_ndim=1)
        out = bn(x).data  # affine is identity at init
        assert np.all(np.abs(out.mean(axis=(0, 2))) < 1e-4)
        assert np.all(np.abs(out.var(axis=(0, 2)) - 1.0) < 1e-3)

    def test_eval_before_any_training_uses_identity_stats(self, rng):
        bn = nn.BatchNorm(3, spatial_ndim=1).eval()
        x = rng.normal(size=(3, 11)).astype(np.float32)
        out = bn(Tensor(x))
        assert np.allclose(out.data, x / np.sqrt(1.0 + 1e-5), atol=1e-6)

    def test_channel_mismatch_raises(self):
        bn = nn.BatchNorm(3, spatial_ndim=1)
        with pytest.raises(InvalidArgumentError):
            bn(Tensor(np.ones((4, 5), dtype=np.float32)))


class TestActivations:
    def test_relu(self):
        out = F.relu(t([-1.0, 2.0]))
        assert out.data.tolist() == [0.0, 2.0]

    def test_sigmoid_at_zero(self):
        assert F.sigmoid(t([0.0])).data[0] == pytest.approx(0.5)

    def test_tanh_at_zero(self):
        assert F.tanh(t([0.0])).data[0] == pytest.approx(0.0)

    def test_sigmoid_extremes_stay_finite(self):
        out = F.sigmoid(t([-500.0, 500.0]))
        assert np.all(np.isfinite(out.data))
        assert out.data[0] == pytest.approx(0.0, abs=1e-6)
        assert out.data[1] == pytest.approx(1.0, abs=1e-6)


class TestLinear:
    def test_identity_rows_select_weight_rows(self, rng):
        w = rng.normal(size=(4, 3)).astype(np.float32)
        out = F.linear(t(np.eye(4, dtype=np.float32)), t(w))
        assert np.allclose(out.data, w)

    def test_dense_layer_parameter_count(self):
        layer = nn.Linear(512, 6, np.random.default_rng(0))
        assert layer.weight.size == 3072

    def test_identity_weight(self):
        out = F.linear(t([1.0, 2.0]), t(np.eye(2, dtype=np.float32)))
        assert out.data.tolist() == [1.0, 2.0]

    def test_dimension_mismatch_raises(self):
        with pytest.raises(InvalidArgumentError):
            F.linear(t(np.ones(3)), t(np.ones((4, 2))))


class TestBiGRU:
    def test_published_output_shape(self):
        gru = nn.BiGRU(4096, 768, np.random.default_rng(0))
        out = gru(t(np.zeros((8, 4096))))
        assert out.shape == (8, 1536)

    def test_zero_weights_zero_input_stays_zero(self):
        gru = nn.BiGRU(3, 5, np.random.default_rng(0))
        for p in gru.parameters():
            p.data[:] = 0.0
        out = gru(t(np.zeros((4, 3))))
        assert np.all(out.data == 0.0)

    def test_single_step_closed_form(self):
        # scalar wiring: independently evaluate the gate arithmetic
        gru = nn.BiGRU(1, 1, np.random.default_rng(0))
        wih, whh = 0.7, -0.3
        bih, bhh = 0.11, -0.05
        for cell in (gru.fw, gru.bw):
            cell.w_ih.data[:] = wih
            cell.w_hh.data[:] = whh
            cell.b_ih.data[:] = bih
            cell.b_hh.data[:] = bhh
        x_val = 0.9
        out = gru(t([[x_val]])).data.reshape(2)

        def sig(v):
            return 1.0 / (1.0 + np.exp(-v))

        # h0 = 0: update z, reset r, candidate n, new state (1-z)*n
        z = sig(wih * x_val + bih + bhh)
        n = np.tanh(wih * x_val + bih + sig(wih * x_val + bih + bhh) * bhh)
        expected = (1.0 - z) * n
        assert out[0] == pytest.approx(expected, rel=1e-5)
        assert out[1] == pytest.approx(expected, rel=1e-5)  # mirrored direction

    def test_zero_hidden_raises(self):
        with pytest.raises(InvalidArgumentError):
            nn.BiGRU(3, 0, np.random.default_rng(0))

    def test_batched_matches_unbatched(self, rng):
        gru = nn.BiGRU(3, 4, np.random.default_rng(5))
        x = rng.normal(size=(2, 6, 3)).astype(np.float32)
        batched = gru(t(x)).data
        for i in range(2):
            assert np.allclose(batched[i], gru(t(x[i])).data, atol=1e-6)


class TestDropout:
    def test_rate_zero_is_identity(self, rng):
        x = t(rng.normal(size=(50,)).astype(np.float32))
        out = F.dropout(x, 0.0, training=True, rng=rng)
        assert out is x

    def test_eval_mode_is_identity(self, rng):
        x = t(rng.normal(size=(50,)).astype(np.float32))
        assert F.dropout(x, 0.9, training=False) is x

    def test_survivor_fraction(self):
        rng = np.random.default_rng(99)
        x = t(np.ones(100_000, dtype=np.float32))
        out = F.dropout(x, 0.1, training=True, rng=rng)
        survivors = np.count_nonzero(out.data) / x.size
        assert abs(survivors - 0.9) < 0.01
        # inverted scaling: surviving values are 1/(1-rate)
        assert np.allclose(out.data[out.data != 0], 1.0 / 0.9)

    def test_rate_one_raises(self):
        with pytest.raises(InvalidArgumentError):
            F.dropout(t(np.ones(3)), 1.0, training=True, rng=np.random.default_rng(0))


class TestSoftmaxCrossEntropy:
    def test_uniform_logits_one_hot_target(self):
        logits = t(np.zeros((2, 6)))
        targets = np.zeros((2, 6), dtype=np.float32)
        targets[:, 1] = 1.0
        loss = F.softmax_cross_entropy(logits, targets)
        assert loss.item() == pytest.approx(np.log(6.0), rel=1e-6)

    def test_peaked_logits_drive_loss_to_zero(self):
        logits = np.full((1, 6), -50.0, dtype=np.float32)
        logits[0, 2] = 50.0
        targets = np.zeros((1, 6), dtype=np.float32)
        targets[0, 2] = 1.0
        assert F.softmax_cross_entropy(t(logits), targets).item() == pytest.approx(0.0, abs=1e-6)

    def test_mixed_target_symmetric_logits(self):
        loss = F.softmax_cross_entropy(t([[1.5, 1.5]]), np.array([[0.5, 0.5]], dtype=np.float32))
        assert loss.item() == pytest.approx(np.log(2.0), rel=1e-6)

    def test_non_distribution_target_raises(self):
        with pytest.raises(InvalidArgumentError):
            F.softmax_cross_entropy(t(np.zeros((1, 3))), np.array([[0.5, 0.2, 0.2]], dtype=np.float32))

    def test_nonnegative_for_random_inputs(self, rng):
        for _ in range(20):
            logits = t(rng.normal(size=(4, 6)).astype(np.float32) * 5)
            targets = rng.random((4, 6)).astype(np.float32)
            targets /= targets.sum(axis=1, keepdims=True)
            assert F.softmax_cross_entropy(logits, targets).item() >= 0.0

    def test_uniform_logits_uniform_target(self):
        loss = F.softmax_cross_entropy(
            t(np.full((3, 6), 2.0)), np.full((3, 6), 1.0 / 6.0, dtype=np.float32)
        )
        assert loss.item() == pytest.approx(np.log(6.0), rel=1e-6)
