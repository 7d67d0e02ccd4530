"""Dense feed-forward denoiser written directly against numpy.

Weights are stored as ``W[l]`` with shape ``(n_l, n_{l+1})`` so that a layer
computes ``a @ W + b`` and ``a[i] * W[i, j]`` is the contribution of unit
``i`` to unit ``j``. Hidden layers use ReLU, the output layer is linear.

Inputs are z-scored with per-feature statistics stored on the model before
the first layer; masks act on the standardized input.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    CorruptCheckpoint,
    LayerCollapse,
    MaskError,
    TrainingDiverged,
    VersionMismatch,
)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def vectorize(h) -> np.ndarray:
    """Complex ``(..., K)`` to real ``(..., 2K)``: real parts, then imaginary."""
    h = np.asarray(h)
    return np.concatenate([h.real, h.imag], axis=-1)


def devectorize(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape[-1] % 2:
        raise ValueError(f"length {v.shape[-1]} is not even")
    k = v.shape[-1] // 2
    return v[..., :k] + 1j * v[..., k:]


@dataclass
class ModelParams:
    layer_sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "relu"
    in_mean: np.ndarray | None = None
    in_std: np.ndarray | None = None

    def __post_init__(self):
        self.layer_sizes = [int(n) for n in self.layer_sizes]
        if self.in_mean is None:
            self.in_mean = np.zeros(self.layer_sizes[0])
        if self.in_std is None:
            self.in_std = np.ones(self.layer_sizes[0])
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (self.layer_sizes[l], self.layer_sizes[l + 1]) or b.shape != (self.layer_sizes[l + 1],):
                raise ConfigError(f"layer {l} parameter shapes do not chain")

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def hidden_sizes(self) -> list[int]:
        return self.layer_sizes[1:-1]

    @property
    def n_params(self) -> int:
        return sum(W.size + b.size for W, b in zip(self.weights, self.biases))

    def copy(self) -> "ModelParams":
        return replace(
            self,
            layer_sizes=list(self.layer_sizes),
            weights=[W.copy() for W in self.weights],
            biases=[b.copy() for b in self.biases],
            in_mean=self.in_mean.copy(),
            in_std=self.in_std.copy(),
        )


def init_model(layer_sizes, seed) -> ModelParams:
    """He-normal weights, zero biases."""
    sizes = [int(n) for n in layer_sizes]
    if len(sizes) < 2 or min(sizes) < 1:
        raise ConfigError(f"degenerate layer sizes {sizes}")
    rng = np.random.default_rng(seed)
    weights = [rng.standard_normal((a, b)) * np.sqrt(2.0 / a) for a, b in zip(sizes[:-1], sizes[1:])]
    biases = [np.zeros(b) for b in sizes[1:]]
    return ModelParams(sizes, weights, biases)


def fit_standardization(model: ModelParams, X) -> ModelParams:
    """Set the input z-score statistics from training inputs (in place)."""
    X = np.asarray(X, dtype=float)
    std = X.std(axis=0)
    model.in_mean = X.mean(axis=0)
    model.in_std = np.where(std > 1e-12, std, 1.0)
    return model


def _check_input(model, x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.layer_sizes[0]:
        raise ValueError(f"input width {x.shape[-1]} != {model.layer_sizes[0]}")
    return x


def _run(model, a, hidden_masks=None):
    trace = [a]
    for l, (W, b) in enumerate(zip(model.weights, model.biases)):
        a = a @ W + b
        if l < model.n_layers - 1:
            a = np.maximum(a, 0.0)
            if hidden_masks is not None:
                a = a * hidden_masks[l]
        trace.append(a)
    return a, trace


def forward(model: ModelParams, x, trace: bool = False):
    """Evaluate the network on one sample ``(n_0,)`` or a batch ``(N, n_0)``.

    With ``trace=True`` also returns the list of activations ``a^(0..L)``,
    where ``a^(0)`` is the standardized input.
    """
    x = _check_input(model, x)
    out, acts = _run(model, (x - model.in_mean) / model.in_std)
    return (out, acts) if trace else out


def split_arch_mask(model: ModelParams, m_arch) -> list[np.ndarray]:
    """Accept either per-layer sub-masks or their concatenation."""
    hidden = model.hidden_sizes
    if isinstance(m_arch, (list, tuple)) and len(m_arch) == len(hidden) and all(np.ndim(m) == 1 for m in m_arch):
        parts = [np.asarray(m, dtype=float) for m in m_arch]
    else:
        flat = np.asarray(m_arch, dtype=float).ravel()
        if flat.size != sum(hidden):
            raise MaskError(f"architecture mask has {flat.size} entries, hidden layers have {sum(hidden)}")
        parts = np.split(flat, np.cumsum(hidden)[:-1])
    for part, n in zip(parts, hidden):
        if part.size != n:
            raise MaskError("architecture sub-mask does not match its layer")
    return parts


def masked_forward(model: ModelParams, x, m_in, m_arch, trace: bool = False):
    """Forward pass with the standardized input and every hidden
    post-activation multiplied by binary masks. The output layer is never
    masked."""
    x = _check_input(model, x)
    m_in = np.asarray(m_in, dtype=float)
    if m_in.shape != (model.layer_sizes[0],):
        raise MaskError(f"input mask length {m_in.size} != {model.layer_sizes[0]}")
    parts = split_arch_mask(model, m_arch)
    out, acts = _run(model, m_in * (x - model.in_mean) / model.in_std, parts)
    return (out, acts) if trace else out


def compact_model(model: ModelParams, m_in, m_arch) -> ModelParams:
    """Physically drop masked inputs and hidden neurons.

    The result computes the same function as :func:`masked_forward` when it
    is fed ``x[m_in.astype(bool)]``.
    """
    keep_in = np.asarray(m_in).astype(bool)
    if keep_in.shape != (model.layer_sizes[0],):
        raise MaskError("input mask length does not match the model")
    keeps = [keep_in] + [p.astype(bool) for p in split_arch_mask(model, m_arch)]
    keeps.append(np.ones(model.layer_sizes[-1], dtype=bool))
    for l, k in enumerate(keeps[:-1]):
        if not k.any():
            raise LayerCollapse(f"mask removes every unit of layer {l}")
    weights = [W[np.ix_(keeps[l], keeps[l + 1])].copy() for l, W in enumerate(model.weights)]
    biases = [b[keeps[l + 1]].copy() for l, b in enumerate(model.biases)]
    return ModelParams(
        [int(k.sum()) for k in keeps],
        weights,
        biases,
        model.activation,
        model.in_mean[keep_in].copy(),
        model.in_std[keep_in].copy(),
    )


# ---------------------------------------------------------------------------
# Training


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    epochs: int = 500
    batch_size: int = 128
    split: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.split < 1:
            raise ConfigError("split must lie strictly between 0 and 1")
        if self.epochs < 0 or self.batch_size < 1 or self.lr < 0:
            raise ConfigError("invalid training hyper-parameters")


def mse(model: ModelParams, X, Y) -> float:
    return float(np.mean((forward(model, X) - Y) ** 2))


def loss_and_grads(model: ModelParams, X, Y):
    """Mean squared error over all outputs and its parameter gradients."""
    out, acts = forward(model, X, trace=True)
    diff = out - Y
    loss = float(np.mean(diff**2))
    delta = 2.0 * diff / diff.size
    gW = [None] * model.n_layers
    gb = [None] * model.n_layers
    for l in range(model.n_layers - 1, -1, -1):
        gW[l] = acts[l].T @ delta
        gb[l] = delta.sum(axis=0)
        if l:
            delta = (delta @ model.weights[l].T) * (acts[l] > 0)
    return loss, gW, gb


@dataclass
class TrainHistory:
    train: list[float] = field(default_factory=list)
    val: list[float] = field(default_factory=list)


def train(model: ModelParams, X, Y, cfg: TrainConfig, X_val=None, Y_val=None):
    """Minibatch Adam on the MSE loss.

    Returns a trained copy and a :class:`TrainHistory` whose first entries
    are the losses before any update. Batch order is drawn from
    ``cfg.seed`` so identical inputs give identical results.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if len(X) == 0:
        raise ValueError("empty training set")
    model = model.copy()
    rng = np.random.default_rng(cfg.seed)
    params = model.weights + model.biases
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    hist = TrainHistory()

    def record():
        loss = mse(model, X, Y)
        if not np.isfinite(loss):
            raise TrainingDiverged(f"loss became {loss}")
        hist.train.append(loss)
        if X_val is not None:
            hist.val.append(mse(model, X_val, Y_val))

    record()
    step = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(len(X))
        for start in range(0, len(X), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            _, gW, gb = loss_and_grads(model, X[idx], Y[idx])
            step += 1
            c1 = 1 - ADAM_BETA1**step
            c2 = 1 - ADAM_BETA2**step
            for p, g, mi, vi in zip(params, gW + gb, m, v):
                mi *= ADAM_BETA1
                mi += (1 - ADAM_BETA1) * g
                vi *= ADAM_BETA2
                vi += (1 - ADAM_BETA2) * g * g
                p -= cfg.lr * (mi / c1) / (np.sqrt(vi / c2) + ADAM_EPS)
        record()
    return model, hist


# ---------------------------------------------------------------------------
# Checkpoints, see docs/checkpoint_format.md

MAGIC = b"RELPRUNE"
FORMAT_VERSION = 1


def checkpoint_bytes(model: ModelParams, meta: dict | None = None) -> bytes:
    act = model.activation.encode("ascii")
    sizes = model.layer_sizes
    parts = [
        MAGIC,
        struct.pack("<II", FORMAT_VERSION, len(sizes)),
        struct.pack(f"<{len(sizes)}I", *sizes),
        struct.pack("<H", len(act)),
        act,
        np.ascontiguousarray(model.in_mean, "<f8").tobytes(),
        np.ascontiguousarray(model.in_std, "<f8").tobytes(),
    ]
    for W, b in zip(model.weights, model.biases):
        parts.append(np.ascontiguousarray(W, "<f8").tobytes())
        parts.append(np.ascontiguousarray(b, "<f8").tobytes())
    blob = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    parts += [struct.pack("<I", len(blob)), blob]
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def save_checkpoint(model: ModelParams, path, meta: dict | None = None) -> Path:
    path = Path(path)
    path.write_bytes(checkpoint_bytes(model, meta))
    return path


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.pos = 0

    def take(self, n):
        if n < 0 or self.pos + n > len(self.buf):
            raise CorruptCheckpoint("checkpoint is truncated")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def floats(self, shape):
        n = int(np.prod(shape))
        return np.frombuffer(self.take(8 * n), dtype="<f8").reshape(shape).astype(float)


def parse_checkpoint(buf: bytes):
    if len(buf) < len(MAGIC) + 4 or buf[: len(MAGIC)] != MAGIC:
        raise CorruptCheckpoint("not a checkpoint (bad magic)")
    if len(buf) < len(MAGIC) + 8:
        raise CorruptCheckpoint("checkpoint is truncated")
    (version,) = struct.unpack_from("<I", buf, len(MAGIC))
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"format version {version}, expected {FORMAT_VERSION}")
    body, tail = buf[:-4], buf[-4:]
    if zlib.crc32(body) != struct.unpack("<I", tail)[0]:
        raise CorruptCheckpoint("checksum mismatch")
    rd = _Reader(body)
    rd.take(len(MAGIC) + 4)
    (n,) = rd.unpack("<I")
    sizes = list(rd.unpack(f"<{n}I"))
    (alen,) = rd.unpack("<H")
    activation = rd.take(alen).decode("ascii")
    in_mean = rd.floats((sizes[0],))
    in_std = rd.floats((sizes[0],))
    weights, biases = [], []
    for a, b in zip(sizes[:-1], sizes[1:]):
        weights.append(rd.floats((a, b)))
        biases.append(rd.floats((b,)))
    (mlen,) = rd.unpack("<I")
    try:
        meta = json.loads(rd.take(mlen).decode("utf-8"))
    except ValueError as exc:
        raise CorruptCheckpoint(f"bad metadata block: {exc}") from None
    if rd.pos != len(body):
        raise CorruptCheckpoint("trailing bytes after metadata")
    return ModelParams(sizes, weights, biases, activation, in_mean, in_std), meta


def load_checkpoint(path):
    """Return ``(model, meta)``."""
    return parse_checkpoint(Path(path).read_bytes())
