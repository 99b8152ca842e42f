import numpy as np
import pytest

from spheremap import autodiff as ad
from spheremap.errors import MissingGradient, ShapeError
from spheremap.gradcheck import run_gradcheck


def test_all_ops_pass_fd_check():
    rows, ok = run_gradcheck(seed=100, n_seeds=3)
    failing = [(n, e) for n, e, p in rows if not p]
    assert ok, f"ops failing fd check: {failing}"


class TestOpSemantics:
    def test_relu_values(self):
        x = ad.Tensor(np.array([-1.0, 0.0, 2.0]))
        np.testing.assert_array_equal(ad.relu(x).data, [0.0, 0.0, 2.0])

    def test_sigmoid_values(self):
        x = ad.Tensor(np.array([0.0, np.log(3.0)]))
        np.testing.assert_allclose(ad.sigmoid(x).data, [0.5, 0.75], rtol=1e-12)

    def test_maxpool_first_index_ties(self):
        x = ad.Tensor(np.full((1, 1, 2, 2), 5.0), requires_grad=True)
        out = ad.maxpool2d(x, 2)
        assert out.data.item() == 5.0
        out.backward(np.ones_like(out.data))
        # the tie goes to the first element in window order
        np.testing.assert_array_equal(
            x.grad[0, 0], [[1.0, 0.0], [0.0, 0.0]])

    def test_conv_shape_errors(self):
        x = ad.Tensor(np.zeros((1, 3, 4, 4)))
        w = ad.Tensor(np.zeros((2, 4, 3, 3)))  # wrong in-channels
        with pytest.raises(ShapeError):
            ad.conv2d(x, w)

    def test_conv_transpose_output_size(self):
        # the dilated configuration doubles spatial dims
        x = ad.Tensor(np.zeros((1, 4, 16, 16)))
        w = ad.Tensor(np.zeros((4, 2, 3, 3)))
        out = ad.conv_transpose2d(x, w, stride=2, padding=2, dilation=2,
                                  output_padding=1)
        assert out.shape == (1, 2, 32, 32)

    def test_pad_circular_width_values(self):
        x = ad.Tensor(np.arange(8.0).reshape(1, 1, 2, 4))
        out = ad.pad_circular_width(x, 1)
        np.testing.assert_array_equal(out.data[0, 0, 0], [3, 0, 1, 2, 3, 0])

    def test_concat_channels(self):
        a = ad.Tensor(np.ones((1, 2, 2, 2)))
        b = ad.Tensor(np.zeros((1, 3, 2, 2)))
        assert ad.concat_channels(a, b).shape == (1, 5, 2, 2)

    def test_batchnorm_normalizes_batch(self, rng):
        x = ad.Tensor(rng.standard_normal((4, 3, 5, 5)) * 3.0 + 2.0)
        gamma = ad.Tensor(np.ones(3))
        beta = ad.Tensor(np.zeros(3))
        rm, rv = np.zeros(3, dtype=np.float64), np.ones(3, dtype=np.float64)
        out = ad.batchnorm2d(x, gamma, beta, rm, rv, training=True)
        mean = out.data.mean(axis=(0, 2, 3))
        var = out.data.var(axis=(0, 2, 3))
        np.testing.assert_allclose(mean, 0.0, atol=1e-10)
        np.testing.assert_allclose(var, 1.0, atol=1e-3)
        # running stats moved toward the batch stats
        assert (np.abs(rm - 0.0) > 0).all()

    def test_bce_known_value(self):
        pred = ad.Tensor(np.array([0.5, 0.5]))
        tgt = ad.Tensor(np.array([1.0, 0.0]))
        assert ad.bce_loss(pred, tgt).item() == pytest.approx(np.log(2.0))

    def test_mse_known_value(self):
        pred = ad.Tensor(np.array([1.0, 3.0]))
        tgt = ad.Tensor(np.array([0.0, 0.0]))
        assert ad.mse_loss(pred, tgt).item() == pytest.approx(5.0)


class TestBackward:
    def test_gradient_accumulates_over_reuse(self):
        x = ad.Tensor(np.array([2.0]), requires_grad=True)
        y = ad.concat_channels  # not applicable; use relu twice via add path
        a = ad.relu(x)
        # two consumers of the same tensor: grads add up
        l1 = ad.mse_loss(a, ad.Tensor(np.array([0.0])))
        l1.backward()
        g1 = x.grad.copy()
        x.zero_grad()
        l2 = ad.mse_loss(ad.relu(x), ad.Tensor(np.array([0.0])))
        l2.backward()
        np.testing.assert_array_equal(g1, x.grad)

    def test_backward_needs_scalar(self):
        x = ad.Tensor(np.zeros((2, 2)), requires_grad=True)
        with pytest.raises(ShapeError):
            ad.relu(x).backward()

    def test_no_graph_without_requires_grad(self):
        x = ad.Tensor(np.ones((1, 1, 4, 4)))
        out = ad.relu(x)
        assert out._parents == ()


class TestAdam:
    def _reference_adam(self, grads, lr, steps):
        """Textbook Adam on a single scalar parameter starting at 0."""
        p, m, v = 0.0, 0.0, 0.0
        b1, b2, eps = 0.9, 0.999, 1e-8
        for t in range(1, steps + 1):
            g = grads[t - 1]
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            p -= lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
        return p

    def test_matches_reference(self):
        grads = [0.3, -0.2, 0.7, 0.1]
        param = ad.Parameter(ad.Tensor(np.zeros(1)), "p")
        state = ad.AdamState(lr=0.01)
        for g in grads:
            param.tensor.grad = np.array([g])
            ad.adam_step([param], state)
        want = self._reference_adam(grads, 0.01, len(grads))
        assert param.data[0] == pytest.approx(want, rel=1e-12)

    def test_missing_gradient_named(self):
        param = ad.Parameter(ad.Tensor(np.zeros(1)), "enc0.conv1.weight")
        with pytest.raises(MissingGradient, match="enc0.conv1.weight"):
            ad.adam_step([param], ad.AdamState(lr=0.1))

    def test_grads_zeroed_after_step(self):
        param = ad.Parameter(ad.Tensor(np.zeros(1)), "p")
        param.tensor.grad = np.array([1.0])
        ad.adam_step([param], ad.AdamState(lr=0.1))
        assert param.tensor.grad is None
