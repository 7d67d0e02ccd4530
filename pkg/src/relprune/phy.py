"""802.11p-style OFDM link simulation.

Frames are built in the frequency domain, sent through a time-varying
tapped-delay-line channel sample by sample, and demodulated again. Any
inter-carrier interference therefore comes out of the simulation itself
rather than from a closed-form model.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, InvalidLength, SimError

PILOT_VALUE = 1.0 + 0.0j

# bits per symbol
MODULATIONS = {"QPSK": 2, "16QAM": 4, "64QAM": 6}


def _standard_pilots(K_on: int) -> tuple[int, ...]:
    # active-index images of subcarriers -21, -7, +7, +21 (DC excluded)
    half = K_on // 2
    return tuple(s + half if s < 0 else s + half - 1 for s in (-21, -7, 7, 21))


@dataclass(frozen=True)
class FrameConfig:
    """OFDM grid layout.

    Active subcarriers are indexed ``0 .. K_on-1`` from the most negative
    frequency upwards with DC skipped, so for ``K=64, K_on=52`` index 0 is
    subcarrier -26 and index 51 is subcarrier +26.
    """

    K: int = 64
    K_on: int = 52
    K_p: int = 4
    K_d: int = 48
    K_n: int = 12
    I: int = 50  # noqa: E741
    cp_len: int = 16
    pilot_indices: tuple[int, ...] = (5, 19, 32, 46)
    modulation: str = "QPSK"
    sample_rate: float = 10e6

    def __post_init__(self):
        object.__setattr__(self, "pilot_indices", tuple(int(p) for p in self.pilot_indices))
        if self.K_on != self.K_p + self.K_d:
            raise ConfigError(f"K_on={self.K_on} must equal K_p + K_d = {self.K_p + self.K_d}")
        if self.K != self.K_on + self.K_n:
            raise ConfigError(f"K={self.K} must equal K_on + K_n = {self.K_on + self.K_n}")
        if self.K_on % 2 or self.K_on >= self.K:
            raise ConfigError("K_on must be even and leave room for the DC bin")
        if self.I < 1 or self.cp_len < 0:
            raise ConfigError("need I >= 1 and cp_len >= 0")
        p = self.pilot_indices
        if len(p) != self.K_p:
            raise ConfigError(f"expected {self.K_p} pilot indices, got {len(p)}")
        if list(p) != sorted(set(p)) or (p and (p[0] < 0 or p[-1] >= self.K_on)):
            raise ConfigError("pilot_indices must be distinct, sorted and inside [0, K_on)")
        if self.modulation not in MODULATIONS:
            raise ConfigError(f"unknown modulation {self.modulation!r}")
        if self.sample_rate <= 0:
            raise ConfigError("sample_rate must be positive")

    @property
    def bits_per_symbol(self) -> int:
        return MODULATIONS[self.modulation]

    @property
    def data_indices(self) -> np.ndarray:
        return np.setdiff1d(np.arange(self.K_on), self.pilot_indices)

    @property
    def active_bins(self) -> np.ndarray:
        """FFT bin of every active subcarrier, in active-index order."""
        half = self.K_on // 2
        freqs = np.r_[np.arange(-half, 0), np.arange(1, half + 1)]
        return freqs % self.K

    @property
    def symbol_len(self) -> int:
        return self.K + self.cp_len

    @property
    def n_samples(self) -> int:
        return self.I * self.symbol_len

    @classmethod
    def from_dict(cls, d: dict) -> "FrameConfig":
        d = dict(d)
        d.setdefault("pilot_indices", _standard_pilots(d.get("K_on", 52)))
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pilot_indices"] = list(self.pilot_indices)
        return d


@dataclass(frozen=True)
class ChannelProfile:
    """Tapped-delay profile with a common maximum Doppler shift."""

    name: str
    tap_delays: tuple[int, ...]
    tap_powers: tuple[float, ...]
    f_d: float = 1000.0

    def __post_init__(self):
        object.__setattr__(self, "tap_delays", tuple(int(d) for d in self.tap_delays))
        object.__setattr__(self, "tap_powers", tuple(float(p) for p in self.tap_powers))
        if not self.tap_delays:
            raise ConfigError("channel profile has no taps")
        if len(self.tap_delays) != len(self.tap_powers):
            raise ConfigError("tap_delays and tap_powers differ in length")
        if self.tap_delays[0] != 0 or np.any(np.diff(self.tap_delays) <= 0):
            raise ConfigError("tap delays must start at 0 and increase strictly")
        if min(self.tap_powers) < 0 or abs(sum(self.tap_powers) - 1.0) > 1e-9:
            raise ConfigError("tap powers must be non-negative and sum to 1")
        if self.f_d < 0:
            raise ConfigError("f_d must be non-negative")

    @classmethod
    def preset(cls, name: str, f_d: float = 1000.0) -> "ChannelProfile":
        """Low (``"LF"``) or high (``"HF"``) frequency-selectivity stand-in."""
        if name == "LF":
            return cls("LF", (0, 1), (0.7, 0.3), f_d)
        if name == "HF":
            return cls("HF", (0, 2, 5, 9), (0.4, 0.3, 0.2, 0.1), f_d)
        raise ConfigError(f"unknown channel preset {name!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelProfile":
        d = dict(d)
        if "tap_delays" not in d:
            return cls.preset(d.get("name", "LF"), d.get("f_d", 1000.0))
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["tap_delays"] = list(self.tap_delays)
        d["tap_powers"] = list(self.tap_powers)
        return d


def _read_section(path, section):
    data = json.loads(Path(path).read_text())
    if section in data and isinstance(data[section], dict):
        data = data[section]
    return data


def load_frame_config(path) -> FrameConfig:
    """Read a :class:`FrameConfig` from a JSON file (top level or ``"frame"``)."""
    return FrameConfig.from_dict(_read_section(path, "frame"))


def load_channel_profile(path) -> ChannelProfile:
    """Read a :class:`ChannelProfile` from a JSON file (top level or ``"channel"``)."""
    return ChannelProfile.from_dict(_read_section(path, "channel"))


# ---------------------------------------------------------------------------
# Gray-coded square QAM


def _axis_levels(modulation):
    m = MODULATIONS[modulation]
    L = 2 ** (m // 2)
    scale = np.sqrt(2 * (L * L - 1) / 3)
    return m, L, scale


def _gray_to_index(gbits):
    # gbits: (..., n) MSB first
    b = np.bitwise_xor.accumulate(gbits, axis=-1)
    weights = 1 << np.arange(gbits.shape[-1] - 1, -1, -1)
    return b @ weights


def _index_to_gray_bits(idx, n):
    g = idx ^ (idx >> 1)
    shifts = np.arange(n - 1, -1, -1)
    return (g[..., None] >> shifts) & 1


def qam_map(bits, modulation: str) -> np.ndarray:
    """Map bits to unit-energy Gray-coded QAM symbols.

    The first half of each bit group selects the in-phase level, the second
    half the quadrature level. A 0 in the leading bit of an axis gives a
    positive level, so QPSK ``[0, 0]`` maps to ``(1 + 1j) / sqrt(2)``.
    """
    if modulation not in MODULATIONS:
        raise ConfigError(f"unknown modulation {modulation!r}")
    bits = np.asarray(bits, dtype=np.int64).ravel()
    m, L, scale = _axis_levels(modulation)
    if bits.size % m:
        raise InvalidLength(f"{bits.size} bits is not a multiple of {m}")
    groups = bits.reshape(-1, m)
    half = m // 2
    i_lvl = (L - 1) - 2 * _gray_to_index(groups[:, :half])
    q_lvl = (L - 1) - 2 * _gray_to_index(groups[:, half:])
    return (i_lvl + 1j * q_lvl) / scale


def qam_demap(symbols, modulation: str) -> np.ndarray:
    """Hard minimum-distance decision back to bits."""
    symbols = np.asarray(symbols, dtype=complex).ravel()
    m, L, scale = _axis_levels(modulation)
    half = m // 2

    def axis(v):
        idx = np.clip(np.rint(((L - 1) - v * scale) / 2), 0, L - 1).astype(np.int64)
        return _index_to_gray_bits(idx, half)

    return np.concatenate([axis(symbols.real), axis(symbols.imag)], axis=1).ravel()


def constellation(modulation: str) -> np.ndarray:
    """All points, ordered by their bit label read MSB first."""
    m = MODULATIONS[modulation]
    labels = np.arange(2**m)
    bits = (labels[:, None] >> np.arange(m - 1, -1, -1)) & 1
    return qam_map(bits.ravel(), modulation)


def slice_to_constellation(symbols, modulation: str) -> np.ndarray:
    """Nearest constellation point for every symbol."""
    return qam_map(qam_demap(symbols, modulation), modulation).reshape(np.shape(symbols))


# ---------------------------------------------------------------------------
# Frames and channels


@dataclass
class OfdmFrame:
    cfg: FrameConfig
    tx_bits: np.ndarray  # (I, K_d * log2 M)
    x: np.ndarray  # (I, K_on)


def build_frame(cfg: FrameConfig, rng_seed) -> OfdmFrame:
    rng = np.random.default_rng(rng_seed)
    m = cfg.bits_per_symbol
    bits = rng.integers(0, 2, size=(cfg.I, cfg.K_d * m), dtype=np.int64)
    x = np.empty((cfg.I, cfg.K_on), dtype=complex)
    x[:, list(cfg.pilot_indices)] = PILOT_VALUE
    x[:, cfg.data_indices] = qam_map(bits.ravel(), cfg.modulation).reshape(cfg.I, cfg.K_d)
    return OfdmFrame(cfg, bits, x)


@dataclass
class ChannelRealization:
    gains: np.ndarray  # (taps, n_samples) complex
    profile: ChannelProfile
    sample_rate: float = 10e6

    @property
    def n_samples(self) -> int:
        return self.gains.shape[1]


def realize_channel(
    profile: ChannelProfile,
    n_samples: int,
    rng_seed,
    sample_rate: float = 10e6,
    n_sinusoids: int = 32,
) -> ChannelRealization:
    """Sum-of-sinusoids Rayleigh fading with a Jakes Doppler spectrum.

    Each tap is ``sqrt(p/N) * sum_n exp(j(2*pi*f_d*cos(a_n)*t + phi_n))`` with
    arrival angles ``a_n`` stratified over the circle and uniform phases.
    """
    if not profile.tap_delays:
        raise ConfigError("empty channel profile")
    if n_samples < 1 or n_sinusoids < 1:
        raise ConfigError("n_samples and n_sinusoids must be positive")
    rng = np.random.default_rng(rng_seed)
    n_taps = len(profile.tap_delays)
    t = np.arange(n_samples) / sample_rate
    gains = np.empty((n_taps, n_samples), dtype=complex)
    for tap, power in enumerate(profile.tap_powers):
        angles = 2 * np.pi * (np.arange(n_sinusoids) + rng.random(n_sinusoids)) / n_sinusoids
        phases = rng.uniform(0, 2 * np.pi, n_sinusoids)
        dopplers = profile.f_d * np.cos(angles)
        phasor = np.exp(1j * (2 * np.pi * np.outer(dopplers, t) + phases[:, None]))
        gains[tap] = np.sqrt(power / n_sinusoids) * phasor.sum(axis=0)
    return ChannelRealization(gains, profile, sample_rate)


@dataclass
class ReceivedFrame:
    r: np.ndarray  # (I, K_on)
    h_true: np.ndarray  # (I, K_on), tap gains at each symbol's midpoint
    snr_db: float
    noise_var: float = 0.0


def noise_variance(snr_db: float) -> float:
    return 0.0 if np.isinf(snr_db) and snr_db > 0 else 10.0 ** (-snr_db / 10.0)


def frequency_response(gains_at, delays, bins, K) -> np.ndarray:
    """DFT of a tap vector at the given FFT bins."""
    steer = np.exp(-2j * np.pi * np.outer(np.asarray(delays), bins) / K)
    return np.asarray(gains_at) @ steer


def transmit(frame: OfdmFrame, chan: ChannelRealization, snr_db: float, rng_seed=None) -> ReceivedFrame:
    """Send a frame through the time-varying channel and add AWGN.

    ``snr_db=np.inf`` disables noise. The noise variance per subcarrier is
    ``10**(-snr_db/10)`` relative to unit signal power.
    """
    cfg = frame.cfg
    if frame.x.shape != (cfg.I, cfg.K_on):
        raise SimError(f"frame shape {frame.x.shape} does not match config")
    if chan.n_samples < cfg.n_samples:
        raise SimError(f"channel covers {chan.n_samples} samples, frame needs {cfg.n_samples}")
    # delays beyond cp_len are allowed; the resulting ISI lands in the residual
    delays = np.asarray(chan.profile.tap_delays)
    bins = cfg.active_bins

    X = np.zeros((cfg.I, cfg.K), dtype=complex)
    X[:, bins] = frame.x
    xt = np.fft.ifft(X, axis=1, norm="ortho")
    stream = np.concatenate([xt[:, cfg.K - cfg.cp_len:], xt], axis=1).ravel()
    n = stream.size
    y = np.zeros(n, dtype=complex)
    for tap, d in enumerate(delays):
        y[d:] += chan.gains[tap, d:n] * stream[: n - d]

    sigma2 = noise_variance(snr_db)
    if sigma2 > 0:
        rng = np.random.default_rng(rng_seed)
        y = y + np.sqrt(sigma2 / 2) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))

    Y = np.fft.fft(y.reshape(cfg.I, cfg.symbol_len)[:, cfg.cp_len:], axis=1, norm="ortho")
    mid = np.arange(cfg.I) * cfg.symbol_len + cfg.cp_len + cfg.K // 2
    h_true = frequency_response(chan.gains[:, mid].T, delays, bins, cfg.K)
    return ReceivedFrame(Y[:, bins], h_true, snr_db, sigma2)
