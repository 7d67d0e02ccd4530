import numpy as np
import pytest

from relprune.errors import ConfigError
from relprune.estimators import (
    EstimateSeries,
    dpa_estimate,
    frequency_average,
    initial_estimate,
    sta_estimate,
)
from relprune.phy import ChannelProfile, FrameConfig, build_frame, realize_channel, transmit

CFG = FrameConfig()


def link(profile, snr_db, seed, cfg=CFG):
    frame = build_frame(cfg, seed)
    chan = realize_channel(profile, cfg.n_samples, seed + 1000)
    return frame, transmit(frame, chan, snr_db, seed + 2000)


def mse(a, b):
    return np.mean(np.abs(a - b) ** 2)


class TestDpa:
    def test_noiseless_static_exact(self):
        _, rx = link(ChannelProfile.preset("HF", f_d=0.0), np.inf, 1)
        dpa = dpa_estimate(rx, CFG, h_init=rx.h_true[0])
        np.testing.assert_allclose(dpa.h_hat, rx.h_true, atol=1e-9)

    def test_pilots_independent_of_decisions(self):
        _, rx = link(ChannelProfile.preset("HF"), 10.0, 2)
        bad = dpa_estimate(rx, CFG, h_init=np.full(CFG.K_on, -1j))
        p = list(CFG.pilot_indices)
        np.testing.assert_allclose(bad.h_hat[:, p], rx.r[:, p] / 1.0)

    def test_initial_estimate_hits_pilots(self):
        _, rx = link(ChannelProfile.preset("LF"), 20.0, 3)
        h0 = initial_estimate(rx, CFG)
        p = list(CFG.pilot_indices)
        np.testing.assert_allclose(h0[p], rx.r[0, p])
        assert h0.shape == (CFG.K_on,)

    def test_zero_initial_estimate_is_guarded(self):
        _, rx = link(ChannelProfile.preset("LF"), 20.0, 3)
        dpa = dpa_estimate(rx, CFG, h_init=np.zeros(CFG.K_on))
        assert np.all(np.isfinite(dpa.h_hat))

    def test_error_propagation_grows(self):
        # per-symbol MSE averaged over seeded frames, least-squares slope in q
        errs = []
        for s in range(10):
            _, rx = link(ChannelProfile.preset("HF"), 5.0, 10 + s)
            errs.append(np.mean(np.abs(dpa_estimate(rx, CFG).h_hat - rx.h_true) ** 2, axis=1))
        per_q = np.mean(errs, axis=0)
        slope = np.polyfit(np.arange(CFG.I), per_q, 1)[0]
        assert slope > 0


class TestSta:
    def test_degenerate_params_give_dpa(self):
        _, rx = link(ChannelProfile.preset("HF"), 15.0, 4)
        dpa = dpa_estimate(rx, CFG)
        np.testing.assert_allclose(sta_estimate(dpa, 1, 0).h_hat, dpa.h_hat, atol=1e-15)

    def test_constant_in_frequency_is_unbiased(self):
        h = np.outer(np.linspace(1, 2, 5), np.ones(CFG.K_on)) * (0.3 + 0.4j)
        np.testing.assert_allclose(frequency_average(h, 2), h, atol=1e-15)

    def test_window_clips_at_band_edges(self):
        rng = np.random.default_rng(0)
        h = rng.standard_normal((3, 12)) + 1j * rng.standard_normal((3, 12))
        beta = 3
        oracle = np.empty_like(h)
        for k in range(12):
            lo, hi = max(0, k - beta), min(12, k + beta + 1)
            oracle[:, k] = h[:, lo:hi].mean(axis=1)
        np.testing.assert_allclose(frequency_average(h, beta), oracle, atol=1e-14)

    def test_recursion(self):
        h_init = np.ones(4, complex)
        series = EstimateSeries(np.array([[3.0] * 4, [5.0] * 4], complex), "DPA", h_init)
        out = sta_estimate(series, alpha=2, beta=0).h_hat
        np.testing.assert_allclose(out[:, 0], [2.0, 3.5])

    def test_linearity(self):
        rng = np.random.default_rng(1)

        def series(seed):
            r = np.random.default_rng(seed)
            return EstimateSeries(r.standard_normal((6, 20)) + 1j * r.standard_normal((6, 20)), "DPA",
                                  r.standard_normal(20) + 1j * r.standard_normal(20))

        X, Y = series(2), series(3)
        a, b = rng.standard_normal(2)
        combo = EstimateSeries(a * X.h_hat + b * Y.h_hat, "DPA", a * X.h_init + b * Y.h_init)
        lhs = sta_estimate(combo, 2.5, 2).h_hat
        rhs = a * sta_estimate(X, 2.5, 2).h_hat + b * sta_estimate(Y, 2.5, 2).h_hat
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    def test_denoises_dpa(self):
        d, s = [], []
        for seed in range(5):
            _, rx = link(ChannelProfile.preset("LF"), 5.0, 40 + seed)
            dpa = dpa_estimate(rx, CFG)
            d.append(mse(dpa.h_hat, rx.h_true))
            s.append(mse(sta_estimate(dpa, 2, 2).h_hat, rx.h_true))
        assert np.mean(s) < np.mean(d)

    def test_invalid_params(self):
        series = EstimateSeries(np.ones((2, 4), complex), "DPA", np.ones(4, complex))
        with pytest.raises(ConfigError):
            sta_estimate(series, alpha=0.5)
        with pytest.raises(ConfigError):
            sta_estimate(series, beta=-1)
