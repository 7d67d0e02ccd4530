import numpy as np
import pytest

from relprune.errors import (
    ConfigError,
    CorruptCheckpoint,
    LayerCollapse,
    MaskError,
    TrainingDiverged,
    VersionMismatch,
)
from relprune.fnn import (
    FORMAT_VERSION,
    MAGIC,
    TrainConfig,
    checkpoint_bytes,
    compact_model,
    devectorize,
    fit_standardization,
    forward,
    init_model,
    load_checkpoint,
    loss_and_grads,
    masked_forward,
    parse_checkpoint,
    save_checkpoint,
    train,
    vectorize,
)

FULL_SIZES = [104, 15, 15, 15, 104]


def random_masks(rng, sizes, p=0.7):
    m_in = (rng.random(sizes[0]) < p).astype(int)
    m_in[rng.integers(sizes[0])] = 1
    m_arch = []
    for n in sizes[1:-1]:
        m = (rng.random(n) < p).astype(int)
        m[rng.integers(n)] = 1
        m_arch.append(m)
    return m_in, m_arch


def with_random_biases(model, rng):
    for b in model.biases:
        b[:] = rng.standard_normal(b.shape) * 0.3
    return model


class TestVectorize:
    def test_roundtrip(self):
        np.testing.assert_array_equal(vectorize(np.array([1 + 2j])), [1, 2])
        np.testing.assert_array_equal(devectorize([1, 2]), [1 + 2j])

    def test_zeros_and_width(self):
        np.testing.assert_array_equal(vectorize(np.zeros(3, complex)), np.zeros(6))
        h = np.random.default_rng(0).standard_normal(52) * (1 + 1j)
        v = vectorize(h)
        assert v.shape == (104,)
        np.testing.assert_array_equal(devectorize(v), h)

    def test_odd_length(self):
        with pytest.raises(ValueError):
            devectorize(np.zeros(3))


class TestInit:
    def test_param_count(self):
        # shape arithmetic, written out independently of the implementation
        expected = 104 * 15 + 15 + 15 * 15 + 15 + 15 * 15 + 15 + 15 * 104 + 104
        assert expected == 3719
        assert init_model(FULL_SIZES, 0).n_params == expected

    def test_deterministic(self):
        a, b = init_model(FULL_SIZES, 3), init_model(FULL_SIZES, 3)
        for wa, wb in zip(a.weights, b.weights):
            np.testing.assert_array_equal(wa, wb)
        assert all(not b.any() for b in a.biases)

    def test_minimal(self):
        m = init_model([2, 1, 2], 0)
        assert forward(m, np.ones(2)).shape == (2,)

    def test_degenerate(self):
        with pytest.raises(ConfigError):
            init_model([104, 0, 104], 0)
        with pytest.raises(ConfigError):
            init_model([104], 0)


class TestForward:
    def test_zero_model(self):
        m = init_model([4, 3, 4], 0)
        for W in m.weights:
            W[:] = 0
        np.testing.assert_array_equal(forward(m, np.ones(4)), np.zeros(4))

    def test_linear_layer(self):
        m = init_model([3, 2], 1)
        x = np.array([0.5, -1.0, 2.0])
        np.testing.assert_allclose(forward(m, x), x @ m.weights[0], atol=1e-15)

    def test_trace_shapes(self):
        m = init_model(FULL_SIZES, 2)
        out, trace = forward(m, np.random.default_rng(0).standard_normal(104), trace=True)
        assert np.all(np.isfinite(out))
        assert [t.shape[-1] for t in trace] == FULL_SIZES

    def test_relu_trace_nonnegative(self):
        m = with_random_biases(init_model(FULL_SIZES, 2), np.random.default_rng(1))
        _, trace = forward(m, np.random.default_rng(0).standard_normal((50, 104)), trace=True)
        assert all((a >= 0).all() for a in trace[1:-1])

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            forward(init_model([4, 3, 4], 0), np.ones(5))


class TestTraining:
    def test_gradient_check(self):
        rng = np.random.default_rng(0)
        m = with_random_biases(init_model([8, 4, 8], 7), rng)
        X, Y = rng.standard_normal((16, 8)), rng.standard_normal((16, 8))
        _, gW, gb = loss_and_grads(m, X, Y)
        h = 1e-5
        for analytic, params in ((gW, m.weights), (gb, m.biases)):
            for g, p in zip(analytic, params):
                num = np.zeros_like(p)
                for idx in np.ndindex(p.shape):
                    old = p[idx]
                    p[idx] = old + h
                    lp = loss_and_grads(m, X, Y)[0]
                    p[idx] = old - h
                    lm = loss_and_grads(m, X, Y)[0]
                    p[idx] = old
                    num[idx] = (lp - lm) / (2 * h)
                rel = np.linalg.norm(g - num) / max(np.linalg.norm(num), 1e-12)
                assert rel < 1e-4

    def test_identity_task(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((512, 104))
        m = fit_standardization(init_model([104, 104], 0), X)
        m, hist = train(m, X, X, TrainConfig(lr=1e-2, epochs=200, batch_size=128, seed=0))
        assert hist.train[-1] < 1e-4

    def test_zero_lr_keeps_params(self):
        rng = np.random.default_rng(0)
        X, Y = rng.standard_normal((64, 8)), rng.standard_normal((64, 8))
        m0 = init_model([8, 4, 8], 1)
        m1, _ = train(m0, X, Y, TrainConfig(lr=0.0, epochs=3, batch_size=16))
        for a, b in zip(m0.weights + m0.biases, m1.weights + m1.biases):
            np.testing.assert_array_equal(a, b)

    def test_loss_decreases_and_is_deterministic(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((300, 8))
        Y = np.tanh(X @ rng.standard_normal((8, 8)))
        cfg = TrainConfig(lr=1e-2, epochs=20, batch_size=32, seed=4)
        m = fit_standardization(init_model([8, 6, 8], 1), X)
        a, ha = train(m, X, Y, cfg)
        b, hb = train(m, X, Y, cfg)
        assert ha.train[-1] < ha.train[0]
        assert ha.train[-1] == hb.train[-1]
        for wa, wb in zip(a.weights, b.weights):
            np.testing.assert_array_equal(wa, wb)

    def test_divergence(self):
        X = np.ones((4, 2))
        X[0, 0] = np.nan
        with pytest.raises(TrainingDiverged):
            train(init_model([2, 2, 2], 0), X, np.ones((4, 2)), TrainConfig(epochs=1))

    def test_bad_config(self):
        with pytest.raises(ConfigError):
            TrainConfig(split=1.0)


class TestMasking:
    def test_all_ones_equals_forward(self):
        rng = np.random.default_rng(0)
        m = with_random_biases(init_model(FULL_SIZES, 0), rng)
        x = rng.standard_normal((10, 104))
        out = masked_forward(m, x, np.ones(104), [np.ones(15)] * 3)
        np.testing.assert_array_equal(out, forward(m, x))

    def test_dead_input(self):
        rng = np.random.default_rng(0)
        m = init_model(FULL_SIZES, 0)
        m_in = np.ones(104)
        m_in[7] = 0
        x = rng.standard_normal(104)
        y = x.copy()
        y[7] = 1e6
        np.testing.assert_array_equal(masked_forward(m, x, m_in, np.ones(45)),
                                      masked_forward(m, y, m_in, np.ones(45)))

    def test_mask_shape_errors(self):
        m = init_model(FULL_SIZES, 0)
        with pytest.raises(MaskError):
            masked_forward(m, np.ones(104), np.ones(103), np.ones(45))
        with pytest.raises(MaskError):
            masked_forward(m, np.ones(104), np.ones(104), np.ones(44))

    def test_compact_equivalence(self):
        rng = np.random.default_rng(123)
        worst = 0.0
        for trial in range(100):
            sizes = [int(rng.integers(4, 20)), *rng.integers(2, 12, size=rng.integers(1, 4)), int(rng.integers(2, 10))]
            m = with_random_biases(init_model(sizes, trial), rng)
            m.in_mean = rng.standard_normal(sizes[0])
            m.in_std = rng.uniform(0.5, 2, sizes[0])
            m_in, m_arch = random_masks(rng, sizes)
            x = rng.standard_normal(sizes[0])
            c = compact_model(m, m_in, m_arch)
            ref = masked_forward(m, x, m_in, m_arch)
            worst = max(worst, np.max(np.abs(forward(c, x[m_in.astype(bool)]) - ref)))
        assert worst < 1e-12

    def test_compact_reference_shape(self):
        m = init_model(FULL_SIZES, 0)
        m_in = np.zeros(104)
        m_in[[5, 19, 32, 46, 57, 71, 84, 98]] = 1
        m_arch = [np.r_[np.ones(14), 0], np.r_[np.ones(11), np.zeros(4)], np.r_[np.ones(9), np.zeros(6)]]
        assert compact_model(m, m_in, m_arch).layer_sizes == [8, 14, 11, 9, 104]

    def test_compact_all_ones_identical(self):
        m = with_random_biases(init_model(FULL_SIZES, 0), np.random.default_rng(0))
        c = compact_model(m, np.ones(104), np.ones(45))
        assert checkpoint_bytes(c) == checkpoint_bytes(m)

    def test_layer_collapse(self):
        m = init_model(FULL_SIZES, 0)
        with pytest.raises(LayerCollapse):
            compact_model(m, np.ones(104), [np.ones(15), np.zeros(15), np.ones(15)])
        with pytest.raises(LayerCollapse):
            compact_model(m, np.zeros(104), np.ones(45))


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        m = with_random_biases(init_model(FULL_SIZES, 5), np.random.default_rng(0))
        fit_standardization(m, np.random.default_rng(1).standard_normal((20, 104)))
        meta = {"train": {"lr": 1e-3, "batch_size": 128}, "masks": None}
        path = save_checkpoint(m, tmp_path / "m.ckpt", meta)
        m2, meta2 = load_checkpoint(path)
        assert m2.layer_sizes == FULL_SIZES
        assert meta2 == meta
        for a, b in zip(m.weights + m.biases + [m.in_mean, m.in_std],
                        m2.weights + m2.biases + [m2.in_mean, m2.in_std]):
            assert a.tobytes() == b.tobytes()

    def test_header_layout(self):
        buf = checkpoint_bytes(init_model([2, 1, 2], 0))
        assert buf[:8] == MAGIC
        assert int.from_bytes(buf[8:12], "little") == FORMAT_VERSION
        assert int.from_bytes(buf[12:16], "little") == 3

    def test_truncated(self, tmp_path):
        buf = checkpoint_bytes(init_model(FULL_SIZES, 0), {"a": 1})
        for cut in (4, 20, len(buf) // 2, len(buf) - 1):
            with pytest.raises(CorruptCheckpoint):
                parse_checkpoint(buf[:cut])

    def test_bitflip(self):
        buf = bytearray(checkpoint_bytes(init_model([2, 1, 2], 0)))
        buf[40] ^= 0xFF
        with pytest.raises(CorruptCheckpoint):
            parse_checkpoint(bytes(buf))

    def test_version_mismatch(self):
        buf = bytearray(checkpoint_bytes(init_model([2, 1, 2], 0)))
        buf[8:12] = (FORMAT_VERSION + 1).to_bytes(4, "little")
        with pytest.raises(VersionMismatch):
            parse_checkpoint(bytes(buf))
