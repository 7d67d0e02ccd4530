"""Relevance-driven input filtering and neuron pruning.

Inputs are kept by value (relevance at or above a threshold ``tau``), hidden
neurons by rank (drop the bottom ``P`` percent of each layer). Candidate
``(tau, P)`` pairs are retrained on the compacted network and accepted by a
validation-loss / BER gate.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, LayerCollapse, MaskEmpty, MaskError
from .fnn import ModelParams, TrainConfig, compact_model, init_model, mse, train

log = logging.getLogger(__name__)

# smallest threshold that still rejects r == 0
TAU_ZERO_PLUS = float(np.nextafter(0.0, 1.0))


@dataclass
class MaskPair:
    m_in: np.ndarray  # (2 K_on,) of {0, 1}
    m_arch: list[np.ndarray]  # one {0, 1} vector per hidden layer

    def __post_init__(self):
        self.m_in = np.asarray(self.m_in, dtype=np.int8)
        self.m_arch = [np.asarray(m, dtype=np.int8) for m in self.m_arch]
        if self.m_in.sum() < 2:
            raise MaskEmpty("input mask keeps no subcarrier")
        for l, m in enumerate(self.m_arch):
            if not m.any():
                raise LayerCollapse(f"hidden layer {l + 1} has no active neuron")

    @classmethod
    def full(cls, layer_sizes) -> "MaskPair":
        return cls(np.ones(layer_sizes[0]), [np.ones(n) for n in layer_sizes[1:-1]])

    @property
    def widths(self) -> list[int]:
        return [int(self.m_in.sum())] + [int(m.sum()) for m in self.m_arch]

    @property
    def m_arch_flat(self) -> np.ndarray:
        return np.concatenate(self.m_arch) if self.m_arch else np.zeros(0, np.int8)

    @property
    def kept_inputs(self) -> np.ndarray:
        return np.flatnonzero(self.m_in)

    def to_dict(self) -> dict:
        return {"m_in": self.m_in.tolist(), "m_arch": [m.tolist() for m in self.m_arch]}

    @classmethod
    def from_dict(cls, d) -> "MaskPair":
        return cls(d["m_in"], d["m_arch"])


def input_mask(r_sub, tau: float = TAU_ZERO_PLUS) -> np.ndarray:
    """Keep subcarrier ``k`` (both its real and imaginary feature) iff
    ``r_sub[k] >= tau``."""
    keep = np.asarray(r_sub, dtype=float) >= tau
    if not keep.any():
        raise MaskEmpty(f"no subcarrier reaches tau={tau:g}")
    return np.concatenate([keep, keep]).astype(np.int8)


def percentile_threshold(r, P: float) -> float:
    """Relevance value that separates the bottom ``P`` percent of ``r``.

    This is the ``(floor(P*n/100) + 1)``-th smallest entry, so keeping
    ``r >= threshold`` removes exactly ``floor(P*n/100)`` entries when there
    are no ties, and never removes an entry tied with a survivor.
    """
    r = np.sort(np.asarray(r, dtype=float))
    n_drop = math.floor(P * r.size / 100 + 1e-9)
    if P < 0 or n_drop >= r.size:
        raise LayerCollapse(f"P={P} would remove all {r.size} neurons")
    return float(r[n_drop])


def arch_mask(r_arch: Sequence, P: float) -> list[np.ndarray]:
    """Per-layer binary masks keeping neurons at or above the percentile."""
    masks = []
    for l, r in enumerate(r_arch):
        r = np.asarray(r, dtype=float)
        try:
            thr = percentile_threshold(r, P)
        except LayerCollapse as exc:
            raise LayerCollapse(f"hidden layer {l + 1}: {exc}") from None
        masks.append((r >= thr).astype(np.int8))
    return masks


def flops_from_widths(widths) -> int:
    """``sum_l 2 * n_l * n_{l+1} + n_{l+1}`` over consecutive widths."""
    w = [int(n) for n in widths]
    return sum(2 * a * b + b for a, b in zip(w[:-1], w[1:]))


def flops(m_in, m_arch, layer_sizes) -> int:
    """FLOPs of the masked network; the output layer always counts at full width."""
    m_arch = list(m_arch)
    if np.size(m_in) != layer_sizes[0] or len(m_arch) != len(layer_sizes) - 2:
        raise MaskError("mask shapes do not match the layer sizes")
    for m, n in zip(m_arch, layer_sizes[1:-1]):
        if np.size(m) != n:
            raise MaskError("architecture sub-mask does not match its layer")
    widths = [np.count_nonzero(m_in)] + [np.count_nonzero(m) for m in m_arch] + [layer_sizes[-1]]
    return flops_from_widths(widths)


def reduction(c: float, c0: float) -> float:
    """Complexity reduction in percent, rounded to two decimals."""
    if c0 <= 0:
        raise ValueError("baseline FLOPs must be positive")
    return round((1.0 - c / c0) * 100.0, 2)


# ---------------------------------------------------------------------------
# Grid search


@dataclass
class SearchGrid:
    taus: list[float] = field(default_factory=lambda: [TAU_ZERO_PLUS])
    percentiles: list[float] = field(default_factory=lambda: [15, 20, 25, 30])
    ber_target: float | None = None
    ref_snr_db: float = 20.0

    def __post_init__(self):
        self.taus = [float(t) for t in self.taus]
        self.percentiles = [float(p) for p in self.percentiles]
        if not self.taus or self.taus != sorted(self.taus):
            raise ConfigError("taus must be non-empty and ascending")
        if not self.percentiles or any(p < 0 or p > 100 for p in self.percentiles):
            raise ConfigError("percentiles must lie in [0, 100]")

    @classmethod
    def from_range(cls, tau_min, tau_max, tau_step, percentiles, **kw) -> "SearchGrid":
        if tau_step <= 0:
            taus = [tau_min]
        else:
            n = int(math.floor((tau_max - tau_min) / tau_step + 1e-9))
            taus = [tau_min + i * tau_step for i in range(n + 1)]
        return cls(taus, list(percentiles), **kw)


@dataclass
class SearchResult:
    best_masks: MaskPair
    best_model: ModelParams
    val_loss: float
    ber: float
    flops: int
    reduction_pct: float
    ber_target: float
    baseline_flops: int
    trace: list[dict]
    no_improvement: bool = False

    def summary(self) -> dict:
        return {
            "masks": self.best_masks.to_dict(),
            "layer_sizes": self.best_model.layer_sizes,
            "val_loss": self.val_loss,
            "ber": self.ber,
            "flops": self.flops,
            "reduction_pct": self.reduction_pct,
            "ber_target": self.ber_target,
            "baseline_flops": self.baseline_flops,
            "no_improvement": self.no_improvement,
            "trace": self.trace,
        }


# ber_fn(model, kept_input_indices) -> BER of that model at the reference SNR
BerFn = Callable[[ModelParams, np.ndarray], float]


def retrain_candidate(base, masks, X, Y, cfg: TrainConfig, warm_start=False, seed=0):
    """Compact ``base`` under ``masks`` and retrain it on sliced inputs."""
    compact = compact_model(base, masks.m_in, masks.m_arch)
    if not warm_start:
        fresh = init_model(compact.layer_sizes, seed)
        fresh.in_mean, fresh.in_std = compact.in_mean, compact.in_std
        compact = fresh
    keep = masks.kept_inputs
    model, _ = train(compact, X[:, keep], Y, cfg)
    return model


def grid_search(
    base_model: ModelParams,
    train_set,
    val_set,
    relevances,
    grid: SearchGrid,
    ber_fn: BerFn,
    train_cfg: TrainConfig,
    warm_start: bool = False,
    seed: int = 0,
) -> SearchResult:
    """Evaluate every ``(tau, P)`` cell, tau ascending outside, P inside.

    A cell becomes the new best when its validation loss beats the best so
    far and its BER does not exceed ``grid.ber_target`` (the unpruned
    model's BER when unset). Cells whose masks would empty a layer are
    logged in the trace and skipped.
    """
    X, Y = (np.asarray(a, dtype=float) for a in train_set)
    Xv, Yv = (np.asarray(a, dtype=float) for a in val_set)
    sizes = base_model.layer_sizes
    c0 = flops_from_widths(sizes)
    all_inputs = np.arange(sizes[0])
    base_ber = float(ber_fn(base_model, all_inputs))
    target = base_ber if grid.ber_target is None else float(grid.ber_target)

    best = None
    best_loss = math.inf
    trace = []
    for tau in grid.taus:
        for P in grid.percentiles:
            row = {"tau": tau, "percentile": P, "val_loss": math.nan, "ber": math.nan,
                   "flops": None, "accepted": False, "status": "ok"}
            trace.append(row)
            try:
                masks = MaskPair(input_mask(relevances.r_sub, tau), arch_mask(relevances.r_arch, P))
            except (MaskEmpty, LayerCollapse) as exc:
                row["status"] = type(exc).__name__
                log.info("cell tau=%g P=%g skipped: %s", tau, P, exc)
                continue
            model = retrain_candidate(base_model, masks, X, Y, train_cfg, warm_start, seed)
            keep = masks.kept_inputs
            row["val_loss"] = mse(model, Xv[:, keep], Yv)
            row["ber"] = float(ber_fn(model, keep))
            row["flops"] = flops(masks.m_in, masks.m_arch, sizes)
            row["widths"] = masks.widths
            if row["val_loss"] < best_loss and row["ber"] <= target:
                row["accepted"] = True
                best_loss = row["val_loss"]
                best = (masks, model, row)
            log.info("cell tau=%g P=%g widths=%s val=%.3e ber=%.3e accepted=%s",
                     tau, P, masks.widths, row["val_loss"], row["ber"], row["accepted"])

    if best is None:
        masks = MaskPair.full(sizes)
        return SearchResult(masks, base_model, mse(base_model, Xv, Yv), base_ber, c0, 0.0,
                            target, c0, trace, no_improvement=True)
    masks, model, row = best
    return SearchResult(masks, model, row["val_loss"], row["ber"], row["flops"],
                        reduction(row["flops"], c0), target, c0, trace)
