import numpy as np
import pytest

from eegmci import autodiff as ad


def numeric_gradient(objective, array, h=1e-5):
    """Central finite differences of a scalar objective w.r.t. an array,
    mutating it in place point by point."""
    grad = np.zeros_like(array)
    flat = array.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + h
        up = objective()
        flat[i] = original - h
        down = objective()
        flat[i] = original
        gflat[i] = (up - down) / (2 * h)
    return grad


def assert_grads_close(numeric, analytic, atol=1e-7, rtol=1e-4):
    err = np.abs(numeric - analytic)
    bound = atol + rtol * np.maximum(np.abs(numeric), np.abs(analytic))
    assert (err <= bound).all(), f"max excess {(err / bound).max():.3e}"


def gradcheck_layer(layer, x, train=True):
    """Analytic vs finite-difference gradients for inputs and parameters."""
    probe_rng = np.random.default_rng(42)
    y = layer.forward(x, train=train)
    weights = probe_rng.standard_normal(y.shape)

    def objective():
        return float((layer.forward(x, train=train) * weights).sum())

    for p in layer.params():
        p.zero_grad()
    layer.forward(x, train=train)
    dx = layer.backward(weights.copy())
    assert_grads_close(numeric_gradient(objective, x), dx)
    for p in layer.params():
        assert_grads_close(numeric_gradient(objective, p.data), p.grad)


def _r():
    return np.random.default_rng(1)


LAYER_CASES = [
    ("dense", lambda: ad.Dense(7, 5, _r(), np.float64), (4, 7)),
    ("relu", lambda: ad.Relu(), (4, 9)),
    ("flatten", lambda: ad.Flatten(), (3, 4, 5)),
    ("conv1d", lambda: ad.Conv1d(3, 4, 5, _r(), np.float64), (2, 3, 12)),
    ("conv1d_even_kernel", lambda: ad.Conv1d(2, 3, 4, _r(), np.float64), (2, 2, 9)),
    ("maxpool", lambda: ad.MaxPool1d(), (2, 3, 10)),
    ("maxpool_odd_length", lambda: ad.MaxPool1d(), (2, 3, 11)),
    ("batchnorm", lambda: ad.BatchNorm1d(3, np.float64), (4, 3, 6)),
    ("layernorm", lambda: ad.LayerNorm(6, np.float64), (3, 5, 6)),
    ("softmax", lambda: ad.Softmax(), (3, 4, 5)),
    ("attention", lambda: ad.MultiHeadAttention(8, 2, _r(), np.float64), (2, 6, 8)),
    ("posenc", lambda: ad.PositionalEncoding(8, dtype=np.float64), (2, 6, 8)),
    ("meanpool", lambda: ad.MeanPoolTime(), (3, 5, 4)),
    ("timedense", lambda: ad.TimeDistributedDense(6, 4, _r(), np.float64), (2, 5, 6)),
    ("encoder_block",
     lambda: ad.TransformerEncoderBlock(8, 2, 16, _r(), np.float64), (2, 5, 8)),
]


@pytest.mark.parametrize("name,make,shape", LAYER_CASES,
                         ids=[c[0] for c in LAYER_CASES])
def test_layer_gradients_match_finite_differences(name, make, shape):
    x = np.random.default_rng(7).standard_normal(shape)
    gradcheck_layer(make(), x)


def test_batchnorm_inference_mode_gradients():
    bn = ad.BatchNorm1d(3, np.float64)
    warm = np.random.default_rng(8).standard_normal((6, 3, 5))
    bn.forward(warm, train=True)  # populate running statistics
    x = np.random.default_rng(9).standard_normal((4, 3, 5))
    gradcheck_layer(bn, x, train=False)


class TestLayerBasics:
    def test_relu_backward_example(self):
        relu = ad.Relu()
        relu.forward(np.array([-1.0, 2.0]))
        np.testing.assert_array_equal(relu.backward(np.array([1.0, 1.0])),
                                      [0.0, 1.0])

    def test_dense_identity(self):
        dense = ad.Dense(3, 3, _r(), np.float64)
        dense.weight.data = np.eye(3)
        dense.bias.data = np.zeros(3)
        x = np.random.default_rng(2).standard_normal((5, 3))
        np.testing.assert_array_equal(dense.forward(x), x)

    def test_shape_errors_report_shapes(self):
        dense = ad.Dense(3, 2, _r())
        with pytest.raises(ad.ShapeError, match=r"\[batch, 3\].*\(5, 4\)"):
            dense.forward(np.zeros((5, 4)))

    def test_attention_dim_head_divisibility(self):
        with pytest.raises(ad.ShapeError, match="divisible"):
            ad.MultiHeadAttention(22, 4, _r())

    def test_batchnorm_eval_is_batch_invariant(self):
        bn = ad.BatchNorm1d(2, np.float64)
        bn.forward(np.random.default_rng(3).standard_normal((8, 2, 4)), train=True)
        x = np.random.default_rng(4).standard_normal((6, 2, 4))
        full = bn.forward(x, train=False)
        singles = np.concatenate([bn.forward(x[i:i + 1], train=False)
                                  for i in range(6)])
        np.testing.assert_array_equal(full, singles)

    def test_init_deterministic(self):
        a = ad.Dense(10, 10, np.random.default_rng(5))
        b = ad.Dense(10, 10, np.random.default_rng(5))
        np.testing.assert_array_equal(a.weight.data, b.weight.data)


class TestBceLoss:
    def test_logit_zero_label_one(self):
        loss, dlogit = ad.bce_loss(np.array([0.0]), np.array([1.0]))
        np.testing.assert_allclose(loss, np.log(2.0), rtol=1e-12)
        np.testing.assert_allclose(dlogit, -0.5, rtol=1e-12)

    def test_large_logit_no_overflow(self):
        loss, _ = ad.bce_loss(np.array([30.0]), np.array([1.0]))
        assert 0.0 <= loss[0] < 1e-12
        loss, _ = ad.bce_loss(np.array([1000.0]), np.array([0.0]))
        assert np.isfinite(loss[0]) and loss[0] == pytest.approx(1000.0)

    def test_gradient_matches_finite_differences(self, rng):
        z = rng.standard_normal(50) * 4
        for label in (0.0, 1.0):
            y = np.full(50, label)
            _, dlogit = ad.bce_loss(z, y)
            h = 1e-6
            numeric = (ad.bce_loss(z + h, y)[0] - ad.bce_loss(z - h, y)[0]) / (2 * h)
            np.testing.assert_allclose(dlogit, numeric, rtol=1e-6, atol=1e-9)


def reference_adam(params, grads_fn, lr, steps, beta1=0.9, beta2=0.999, eps=1e-8):
    """Independent transcription of the published bias-corrected update."""
    theta = [p.copy() for p in params]
    m = [np.zeros_like(p) for p in theta]
    v = [np.zeros_like(p) for p in theta]
    for t in range(1, steps + 1):
        grads = grads_fn(theta)
        for i in range(len(theta)):
            m[i] = beta1 * m[i] + (1 - beta1) * grads[i]
            v[i] = beta2 * v[i] + (1 - beta2) * grads[i] ** 2
            m_hat = m[i] / (1 - beta1 ** t)
            v_hat = v[i] / (1 - beta2 ** t)
            theta[i] = theta[i] - lr * m_hat / (np.sqrt(v_hat) + eps)
    return theta


class TestAdam:
    def test_first_step_is_signed_learning_rate(self):
        p = np.array([1.0, -2.0, 3.0])
        g = np.array([0.4, -0.01, 2.0])
        state = ad.AdamState(lr=0.05)
        updated, state = ad.adam_step([p.copy()], [g], state)
        np.testing.assert_allclose(updated[0], p - 0.05 * np.sign(g), atol=1e-6)
        assert state.t == 1

    def test_zero_gradient_no_move(self):
        p = np.array([1.0, 2.0])
        state = ad.AdamState(lr=0.1)
        updated, state = ad.adam_step([p.copy()], [np.zeros(2)], state)
        np.testing.assert_allclose(updated[0], p, atol=1e-12)
        assert state.t == 1

    def test_quadratic_convergence_matches_reference(self):
        lr, steps = 0.1, 200
        expected = reference_adam([np.array([1.0])],
                                  lambda th: [2.0 * th[0]], lr, steps)[0]
        theta = [np.array([1.0])]
        state = ad.AdamState(lr=lr)
        for _ in range(steps):
            theta, state = ad.adam_step(theta, [2.0 * theta[0]], state)
        np.testing.assert_allclose(theta[0], expected, rtol=1e-12)
        assert abs(theta[0][0]) < 0.1

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ad.ShapeError):
            ad.adam_step([np.zeros(3)], [np.zeros(4)], ad.AdamState())


class TestTensorBlocks:
    def test_round_trip(self, tmp_path, rng):
        arrays = [rng.standard_normal((3, 4)).astype(np.float32),
                  rng.standard_normal(7).astype(np.float32)]
        path = tmp_path / "blocks.bin"
        with open(path, "wb") as fh:
            ad.write_tensor_blocks(fh, arrays)
        with open(path, "rb") as fh:
            back = ad.read_tensor_blocks(fh, 2)
        for a, b in zip(arrays, back):
            np.testing.assert_array_equal(a, b)

    def test_tensor_grad_accumulation(self):
        t = ad.Tensor(np.zeros((2, 2)))
        t.accumulate(np.ones((2, 2)))
        t.accumulate(np.ones((2, 2)))
        np.testing.assert_array_equal(t.grad, 2 * np.ones((2, 2)))
        with pytest.raises(ad.ShapeError):
            t.accumulate(np.ones(3))
