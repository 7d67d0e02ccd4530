"""Sign-stabilized LRP-epsilon for the dense denoiser.

Relevance at the output starts from the magnitude of each predicted
subcarrier, split evenly over its real and imaginary output units, and is
redistributed downwards with

    R_i = sum_j  a_i w_ij / (z_j + eps * sign(z_j)) * R_j,    sign(0) = +1

where ``z_j`` is the pre-activation of unit ``j``. Biases take part in
``z_j`` but receive no relevance, so they are the only source of leakage
besides ``eps``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import TraceError
from .fnn import ModelParams, forward, masked_forward

DEFAULT_EPSILON = 1e-6


@dataclass
class RelevanceMap:
    R: list[np.ndarray]  # R[l] for l = 0..L, each (n_l,) or (N, n_l)
    epsilon: float


@dataclass
class GlobalRelevance:
    r_in: np.ndarray  # (2 K_on,)
    r_sub: np.ndarray  # (K_on,)
    r_arch: list[np.ndarray]  # one vector per hidden layer
    n_samples: int
    epsilon: float


@dataclass
class SubcarrierTaxonomy:
    reliable: list[int]
    contributing: list[int]
    neutral: list[int]
    harmful: list[int]

    def category_of(self, k: int) -> str:
        for name in ("reliable", "contributing", "neutral", "harmful"):
            if k in getattr(self, name):
                return name
        raise KeyError(k)


def _sign(z):
    return np.where(z >= 0, 1.0, -1.0)


def init_output_relevance(prediction, mode: str = "magnitude") -> np.ndarray:
    """Nonnegative output relevance.

    ``"magnitude"`` puts ``|h_k| / 2`` on both output units of subcarrier k
    (phase invariant); ``"component"`` uses ``|z_j|`` per output unit.
    """
    p = np.asarray(prediction, dtype=float)
    if mode == "component":
        return np.abs(p)
    if mode != "magnitude":
        raise ValueError(f"unknown relevance init {mode!r}")
    k = p.shape[-1] // 2
    half = 0.5 * np.hypot(p[..., :k], p[..., k:])
    return np.concatenate([half, half], axis=-1)


def lrp_backward(model: ModelParams, trace, R_L, epsilon: float = DEFAULT_EPSILON) -> RelevanceMap:
    """Propagate output relevance ``R_L`` down to the input.

    ``trace`` is the activation list from :func:`forward` or
    :func:`masked_forward` on the same model; single samples and batches are
    both accepted.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if len(trace) != model.n_layers + 1:
        raise TraceError(f"trace has {len(trace)} layers, model needs {model.n_layers + 1}")
    for a, n in zip(trace, model.layer_sizes):
        if np.shape(a)[-1] != n:
            raise TraceError("trace widths do not match layer sizes")
    R = np.asarray(R_L, dtype=float)
    if R.shape != np.shape(trace[-1]):
        raise TraceError("output relevance does not match the output activation")

    maps = [R]
    for l in range(model.n_layers - 1, -1, -1):
        a = np.asarray(trace[l], dtype=float)
        W, b = model.weights[l], model.biases[l]
        z = a @ W + b
        s = R / (z + epsilon * _sign(z))
        R = a * (s @ W.T)
        maps.append(R)
    return RelevanceMap(maps[::-1], epsilon)


def explain(model: ModelParams, x, epsilon: float = DEFAULT_EPSILON, m_in=None, m_arch=None,
            init: str = "magnitude") -> RelevanceMap:
    """Forward pass plus relevance propagation for samples ``x``."""
    if m_in is None:
        out, trace = forward(model, x, trace=True)
    else:
        out, trace = masked_forward(model, x, m_in, m_arch, trace=True)
    return lrp_backward(model, trace, init_output_relevance(out, init), epsilon)


def conservation_check(rmap: RelevanceMap) -> np.ndarray:
    """Relative leakage ``|sum R^(l) - sum R^(L)| / |sum R^(L)|`` per layer.

    Sums run over every unit (and every sample for batched maps).
    """
    total = float(np.sum(rmap.R[-1]))
    denom = abs(total) if total != 0 else 1.0
    return np.array([abs(float(np.sum(R)) - total) / denom for R in rmap.R])


def aggregate(
    model: ModelParams,
    X,
    epsilon: float = DEFAULT_EPSILON,
    absolute_arch: bool = True,
    init: str = "magnitude",
    batch: int = 1024,
) -> GlobalRelevance:
    """Average per-sample relevances over ``X`` for the pruning search.

    ``r_sub[k] = r_in[k] + r_in[k + K_on]``, max-normalized so the top
    subcarrier reads 1. Hidden-neuron scores use mean ``|R|`` by default
    and are normalized by each layer's maximum.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if len(X) == 0:
        raise ValueError("need at least one sample")
    sums = [np.zeros(n) for n in model.layer_sizes]
    for start in range(0, len(X), batch):
        rmap = explain(model, X[start:start + batch], epsilon, init=init)
        for l, R in enumerate(rmap.R):
            if 0 < l < model.n_layers and absolute_arch:
                R = np.abs(R)
            sums[l] += R.sum(axis=0)
    means = [s / len(X) for s in sums]

    r_in = means[0]
    k_on = r_in.size // 2
    r_sub = r_in[:k_on] + r_in[k_on:]
    return GlobalRelevance(
        r_in=_max_normalize(r_in),
        r_sub=_max_normalize(r_sub),
        r_arch=[_max_normalize(r) for r in means[1:-1]],
        n_samples=len(X),
        epsilon=epsilon,
    )


def _max_normalize(r):
    top = np.max(r) if r.size else 0.0
    return r / top if top > 0 else r.copy()


def categorize(r_sub, reliable_band: float = 0.9, neutral_tol: float = 1e-3) -> SubcarrierTaxonomy:
    """Split subcarriers into reliable / contributing / neutral / harmful."""
    r = np.asarray(getattr(r_sub, "r_sub", r_sub), dtype=float)
    idx = np.arange(r.size)
    neutral = np.abs(r) <= neutral_tol
    harmful = (r < -neutral_tol)
    reliable = (r >= reliable_band) & ~neutral
    contributing = ~(neutral | harmful | reliable)
    return SubcarrierTaxonomy(
        reliable=idx[reliable].tolist(),
        contributing=idx[contributing].tolist(),
        neutral=idx[neutral].tolist(),
        harmful=idx[harmful].tolist(),
    )
