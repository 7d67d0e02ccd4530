"""Conventional channel estimation: data-pilot-aided (DPA) tracking and
spectral-temporal averaging (STA) on top of it."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, SimError
from .phy import PILOT_VALUE, FrameConfig, ReceivedFrame, slice_to_constellation

MAG_FLOOR = 1e-6


@dataclass
class EstimateSeries:
    h_hat: np.ndarray  # (I, K_on)
    scheme: str
    h_init: np.ndarray  # (K_on,) state before the first symbol
    params: dict = field(default_factory=dict)


def _floor(h):
    mag = np.abs(h)
    small = mag < MAG_FLOOR
    if not small.any():
        return h
    phase = np.where(mag > 0, h / np.where(mag > 0, mag, 1), 1.0)
    return np.where(small, MAG_FLOOR * phase, h)


def initial_estimate(received: ReceivedFrame, cfg: FrameConfig) -> np.ndarray:
    """Least squares at the pilots of symbol 0, linearly interpolated over the
    active band (held flat beyond the outermost pilots)."""
    p = np.asarray(cfg.pilot_indices)
    ls = received.r[0, p] / PILOT_VALUE
    k = np.arange(cfg.K_on)
    return np.interp(k, p, ls.real) + 1j * np.interp(k, p, ls.imag)


def dpa_estimate(received: ReceivedFrame, cfg: FrameConfig, h_init=None) -> EstimateSeries:
    """Decision-directed tracking.

    Symbol ``q`` is equalized with the estimate of symbol ``q-1`` (``h_init``
    for the first one), sliced to the constellation, and the estimate is
    refreshed as ``r_q / d_q``. Pilot positions use the known pilot value.
    """
    r = np.asarray(received.r)
    if r.shape != (cfg.I, cfg.K_on):
        raise SimError(f"received shape {r.shape} does not match config")
    if h_init is None:
        h_init = initial_estimate(received, cfg)
    h_init = np.asarray(h_init, dtype=complex)
    if h_init.shape != (cfg.K_on,):
        raise SimError(f"h_init must have length {cfg.K_on}")

    pilots = list(cfg.pilot_indices)
    data = cfg.data_indices
    h_hat = np.empty_like(r)
    prev = h_init
    for q in range(cfg.I):
        d = np.empty(cfg.K_on, dtype=complex)
        d[pilots] = PILOT_VALUE
        d[data] = slice_to_constellation(r[q, data] / _floor(prev[data]), cfg.modulation)
        h_hat[q] = r[q] / _floor(d)
        prev = h_hat[q]
    return EstimateSeries(h_hat, "DPA", h_init, {})


def frequency_average(h: np.ndarray, beta: int) -> np.ndarray:
    """Uniform moving average over ``[k-beta, k+beta]``, clipped to the band."""
    h = np.asarray(h)
    if beta == 0:
        return h.copy()
    n = h.shape[-1]
    csum = np.concatenate([np.zeros(h.shape[:-1] + (1,), h.dtype), np.cumsum(h, axis=-1)], axis=-1)
    k = np.arange(n)
    lo = np.clip(k - beta, 0, n)
    hi = np.clip(k + beta + 1, 0, n)
    return (csum[..., hi] - csum[..., lo]) / (hi - lo)


def sta_estimate(dpa: EstimateSeries, alpha: float = 2.0, beta: int = 2) -> EstimateSeries:
    """Frequency averaging followed by first-order recursive time averaging."""
    if alpha < 1 or beta < 0 or int(beta) != beta:
        raise ConfigError("STA needs alpha >= 1 and integer beta >= 0")
    fd = frequency_average(dpa.h_hat, int(beta))
    out = np.empty_like(fd)
    w = 1.0 / alpha
    prev = dpa.h_init
    for q in range(fd.shape[0]):
        prev = (1 - w) * prev + w * fd[q]
        out[q] = prev
    return EstimateSeries(out, "STA", dpa.h_init, {"alpha": alpha, "beta": int(beta)})
