"""End-to-end experiment: simulate, train, explain, prune, evaluate, report.

Every stage reads its inputs from and writes its outputs to one working
directory so stages can be rerun individually. All randomness comes from
the three seeds in ``ExperimentConfig.seeds``.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, RelpruneError
from .estimators import dpa_estimate, sta_estimate
from .fnn import (
    ModelParams,
    TrainConfig,
    devectorize,
    fit_standardization,
    forward,
    init_model,
    load_checkpoint,
    save_checkpoint,
    train,
    vectorize,
)
from .lrp import DEFAULT_EPSILON, aggregate, categorize, GlobalRelevance
from .phy import (
    ChannelProfile,
    FrameConfig,
    build_frame,
    qam_demap,
    realize_channel,
    transmit,
)
from .prune import (
    MaskPair,
    SearchGrid,
    SearchResult,
    flops,
    flops_from_widths,
    grid_search,
    input_mask,
    reduction,
)

log = logging.getLogger(__name__)

SCHEMES = ("DPA", "STA", "STA-FNN-full", "STA-FNN-pruned")


class StageError(RelpruneError):
    """Wraps an error raised inside a pipeline stage."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


# ---------------------------------------------------------------------------
# Configuration


@dataclass
class ExperimentConfig:
    frame: FrameConfig = field(default_factory=FrameConfig)
    channel: ChannelProfile = field(default_factory=lambda: ChannelProfile.preset("LF"))
    snr_grid_db: list[float] = field(default_factory=lambda: [10.0, 20.0, 30.0])
    train: TrainConfig = field(default_factory=TrainConfig)
    hidden: list[int] = field(default_factory=lambda: [15, 15, 15])
    sta: dict = field(default_factory=lambda: {"alpha": 2.0, "beta": 2})
    lrp: dict = field(default_factory=lambda: {"epsilon": DEFAULT_EPSILON, "n_samples": 1000})
    search: SearchGrid = field(default_factory=SearchGrid)
    retrain_epochs: int | None = None  # default: 20% of train.epochs
    warm_start: bool = False
    seeds: dict = field(default_factory=lambda: {"data": 0, "model": 0, "search": 0})
    dataset_size: int = 100_000
    n_eval_frames: int = 20

    def __post_init__(self):
        self.snr_grid_db = [float(s) for s in self.snr_grid_db]
        if not self.snr_grid_db or self.snr_grid_db != sorted(self.snr_grid_db):
            raise ConfigError("snr_grid_db must be non-empty and ascending")
        if self.dataset_size < self.frame.I:
            raise ConfigError("dataset_size is smaller than one frame")
        if not self.hidden or min(self.hidden) < 1:
            raise ConfigError("need at least one non-empty hidden layer")
        if set(self.seeds) != {"data", "model", "search"}:
            raise ConfigError("seeds must name exactly data, model and search")
        if self.n_eval_frames < 1:
            raise ConfigError("n_eval_frames must be positive")
        self.train = TrainConfig(**{**_asdict(self.train), "seed": int(self.seeds["model"])})

    @property
    def layer_sizes(self) -> list[int]:
        n = 2 * self.frame.K_on
        return [n, *self.hidden, n]

    @property
    def n_frames(self) -> int:
        return self.dataset_size // self.frame.I

    @property
    def retrain_cfg(self) -> TrainConfig:
        epochs = self.retrain_epochs
        if epochs is None:
            epochs = max(1, round(0.2 * self.train.epochs))
        return TrainConfig(**{**_asdict(self.train), "epochs": int(epochs), "seed": int(self.seeds["search"])})

    @property
    def scenario(self) -> str:
        return f"{self.channel.name}-{self.frame.modulation}"

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        try:
            kw = {}
            if "frame" in d:
                kw["frame"] = FrameConfig.from_dict(d.pop("frame"))
            if "channel" in d:
                kw["channel"] = ChannelProfile.from_dict(d.pop("channel"))
            if "train" in d:
                kw["train"] = TrainConfig(**d.pop("train"))
            if "search" in d:
                s = dict(d.pop("search"))
                for key in ("retrain_epochs", "warm_start"):
                    if key in s:
                        kw[key] = s.pop(key)
                if "tau_min" in s:
                    lo = s.pop("tau_min")
                    hi = s.pop("tau_max", lo)
                    s["taus"] = SearchGrid.from_range(lo, hi, s.pop("tau_step", 0.0), [0]).taus
                kw["search"] = SearchGrid(**s)
            if "sta" in d:
                kw["sta"] = {"alpha": 2.0, "beta": 2, **d.pop("sta")}
            if "lrp" in d:
                kw["lrp"] = {"epsilon": DEFAULT_EPSILON, "n_samples": 1000, **d.pop("lrp")}
            if "seeds" in d:
                kw["seeds"] = {"data": 0, "model": 0, "search": 0, **d.pop("seeds")}
            kw.update(d)
            return cls(**kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        return {
            "frame": self.frame.to_dict(),
            "channel": self.channel.to_dict(),
            "snr_grid_db": list(self.snr_grid_db),
            "train": _asdict(self.train),
            "hidden": list(self.hidden),
            "sta": dict(self.sta),
            "lrp": dict(self.lrp),
            "search": {
                "taus": list(self.search.taus),
                "percentiles": list(self.search.percentiles),
                "ber_target": self.search.ber_target,
                "ref_snr_db": self.search.ref_snr_db,
                "retrain_epochs": self.retrain_cfg.epochs,
                "warm_start": self.warm_start,
            },
            "seeds": dict(self.seeds),
            "dataset_size": self.dataset_size,
            "n_eval_frames": self.n_eval_frames,
        }


def _asdict(tc: TrainConfig) -> dict:
    return {"lr": tc.lr, "epochs": tc.epochs, "batch_size": tc.batch_size, "split": tc.split, "seed": tc.seed}


def load_experiment_config(path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return ExperimentConfig.from_dict(data)


# ---------------------------------------------------------------------------
# Simulation


@dataclass
class FrameRecord:
    snr_db: float
    tx_bits: np.ndarray
    r: np.ndarray
    h_true: np.ndarray
    dpa: np.ndarray
    sta: np.ndarray


def simulate_frame(cfg: ExperimentConfig, snr_db: float, seed: np.random.SeedSequence) -> FrameRecord:
    s_bits, s_chan, s_noise = seed.spawn(3)
    frame = build_frame(cfg.frame, s_bits)
    chan = realize_channel(cfg.channel, cfg.frame.n_samples, s_chan, cfg.frame.sample_rate)
    rx = transmit(frame, chan, snr_db, s_noise)
    dpa = dpa_estimate(rx, cfg.frame)
    sta = sta_estimate(dpa, cfg.sta["alpha"], cfg.sta["beta"])
    return FrameRecord(snr_db, frame.tx_bits, rx.r, rx.h_true, dpa.h_hat, sta.h_hat)


def _stream(cfg, *key):
    return np.random.SeedSequence([int(cfg.seeds["data"]), *key])


@dataclass
class Dataset:
    X_train: np.ndarray
    Y_train: np.ndarray
    X_val: np.ndarray
    Y_val: np.ndarray
    snr_train: np.ndarray
    snr_val: np.ndarray

    def save(self, path) -> Path:
        path = Path(path)
        with open(path, "wb") as fh:
            np.savez(fh, **self.__dict__)
        return path

    @classmethod
    def load(cls, path) -> "Dataset":
        with np.load(path) as z:
            return cls(**{k: z[k] for k in z.files})


def generate_dataset(cfg: ExperimentConfig) -> Dataset:
    """Simulate ``dataset_size // I`` frames cycling through the SNR grid and
    split them 80/20 (by frame) into training and validation samples."""
    n_frames = cfg.n_frames
    if n_frames < 1:
        raise ConfigError("dataset_size must cover at least one frame")
    seeds = _stream(cfg, 0).spawn(n_frames)
    X, Y, S = [], [], []
    for i, seed in enumerate(seeds):
        snr = cfg.snr_grid_db[i % len(cfg.snr_grid_db)]
        rec = simulate_frame(cfg, snr, seed)
        X.append(vectorize(rec.sta))
        Y.append(vectorize(rec.h_true))
        S.append(np.full(cfg.frame.I, snr))
    n_train = int(round(cfg.train.split * n_frames))
    if n_frames > 1:
        n_train = min(max(n_train, 1), n_frames - 1)
    width = 2 * cfg.frame.K_on

    def cat(parts, shape=(0, width)):
        return np.concatenate(parts) if parts else np.zeros(shape)

    return Dataset(
        cat(X[:n_train]), cat(Y[:n_train]), cat(X[n_train:]), cat(Y[n_train:]),
        cat(S[:n_train], (0,)), cat(S[n_train:], (0,)),
    )


@dataclass
class EvalSet:
    """Held-out frames at one SNR with precomputed conventional estimates."""

    snr_db: float
    frames: list[FrameRecord]

    @property
    def sta_inputs(self) -> np.ndarray:
        return np.concatenate([vectorize(f.sta) for f in self.frames])


def make_eval_set(cfg: ExperimentConfig, snr_db: float, stream: int = 1, n_frames: int | None = None) -> EvalSet:
    n = cfg.n_eval_frames if n_frames is None else n_frames
    key = int(round(snr_db * 1000))
    seeds = _stream(cfg, stream, key & 0xFFFFFFFF).spawn(n)
    return EvalSet(snr_db, [simulate_frame(cfg, snr_db, s) for s in seeds])


def count_bit_errors(r, h_hat, tx_bits, frame_cfg: FrameConfig) -> tuple[int, int]:
    """One-tap equalization, hard demapping, errors counted on data subcarriers."""
    data = frame_cfg.data_indices
    x_hat = np.asarray(r)[..., data] / np.asarray(h_hat)[..., data]
    bits = qam_demap(x_hat, frame_cfg.modulation)
    tx = np.asarray(tx_bits).ravel()
    if bits.size != tx.size:
        raise ValueError("estimate and bit shapes disagree")
    return int(np.count_nonzero(bits != tx)), int(tx.size)


def equalize_and_ber(received, estimates, tx_bits, frame_cfg: FrameConfig) -> tuple[float, int]:
    """BER and number of compared bits over a list of frames."""
    errors = bits = 0
    for r, h, b in zip(received, estimates, tx_bits):
        e, n = count_bit_errors(r, h, b, frame_cfg)
        errors += e
        bits += n
    return errors / bits, bits


def fnn_estimates(model: ModelParams, ev: EvalSet, keep=None) -> list[np.ndarray]:
    X = ev.sta_inputs
    if keep is not None:
        X = X[:, keep]
    H = devectorize(forward(model, X))
    I = ev.frames[0].r.shape[0]  # noqa: E741
    return [H[i * I:(i + 1) * I] for i in range(len(ev.frames))]


def scheme_ber(ev: EvalSet, frame_cfg, scheme, model=None, keep=None) -> tuple[float, int]:
    if scheme == "DPA":
        est = [f.dpa for f in ev.frames]
    elif scheme == "STA":
        est = [f.sta for f in ev.frames]
    else:
        est = fnn_estimates(model, ev, keep)
    return equalize_and_ber([f.r for f in ev.frames], est, [f.tx_bits for f in ev.frames], frame_cfg)


# ---------------------------------------------------------------------------
# Stages


def _write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    Path(path).write_text(buf.getvalue())


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(type(o))


def _provenance(cfg):
    return {"config": cfg.to_dict(), "seeds": dict(cfg.seeds)}


def stage_simulate(cfg: ExperimentConfig, workdir) -> Dataset:
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    _write_json(workdir / "config.json", cfg.to_dict())
    ds = generate_dataset(cfg)
    ds.save(workdir / "dataset.npz")
    log.info("dataset: %d train / %d validation samples", len(ds.X_train), len(ds.X_val))
    return ds


def stage_train(cfg: ExperimentConfig, workdir):
    workdir = Path(workdir)
    ds = Dataset.load(workdir / "dataset.npz")
    model = init_model(cfg.layer_sizes, cfg.seeds["model"])
    fit_standardization(model, ds.X_train)
    model, hist = train(model, ds.X_train, ds.Y_train, cfg.train, ds.X_val, ds.Y_val)
    meta = {**_provenance(cfg), "train": _asdict(cfg.train),
            "train_loss": hist.train[-1], "val_loss": hist.val[-1] if hist.val else None}
    save_checkpoint(model, workdir / "model_full.ckpt", meta)
    _write_csv(workdir / "train_history.csv", ["epoch", "train_loss", "val_loss"],
               [(i, t, v) for i, (t, v) in enumerate(zip(hist.train, hist.val or [np.nan] * len(hist.train)))])
    log.info("trained: loss %.4e -> %.4e", hist.train[0], hist.train[-1])
    return model, hist


def relevance_samples(cfg: ExperimentConfig, ds: Dataset) -> np.ndarray:
    n = min(int(cfg.lrp["n_samples"]), len(ds.X_train))
    rng = np.random.default_rng(cfg.seeds["search"])
    idx = np.sort(rng.choice(len(ds.X_train), size=n, replace=False))
    return ds.X_train[idx]


def stage_explain(cfg: ExperimentConfig, workdir, reliable_band=0.9, neutral_tol=1e-3) -> GlobalRelevance:
    workdir = Path(workdir)
    ds = Dataset.load(workdir / "dataset.npz")
    model, _ = load_checkpoint(workdir / "model_full.ckpt")
    g = aggregate(model, relevance_samples(cfg, ds), cfg.lrp["epsilon"])
    tax = categorize(g.r_sub, reliable_band, neutral_tol)
    _write_csv(workdir / "relevance.csv", ["subcarrier_index", "relevance", "category"],
               [(k, r, tax.category_of(k)) for k, r in enumerate(g.r_sub)])
    _write_csv(workdir / "relevance_layers.csv", ["layer", "neuron", "relevance"],
               [(l + 1, j, r) for l, layer in enumerate(g.r_arch) for j, r in enumerate(layer)])
    _write_json(workdir / "relevance.json", {
        **_provenance(cfg), "r_in": g.r_in, "r_sub": g.r_sub, "r_arch": g.r_arch,
        "n_samples": g.n_samples, "epsilon": g.epsilon,
        "taxonomy": tax.__dict__,
    })
    return g


def load_relevance(workdir) -> GlobalRelevance:
    d = json.loads((Path(workdir) / "relevance.json").read_text())
    return GlobalRelevance(np.array(d["r_in"]), np.array(d["r_sub"]),
                           [np.array(r) for r in d["r_arch"]], d["n_samples"], d["epsilon"])


def make_ber_fn(cfg: ExperimentConfig, ev: EvalSet):
    def ber_fn(model, keep):
        return scheme_ber(ev, cfg.frame, "FNN", model, keep)[0]
    return ber_fn


def stage_prune(cfg: ExperimentConfig, workdir) -> SearchResult:
    workdir = Path(workdir)
    ds = Dataset.load(workdir / "dataset.npz")
    model, _ = load_checkpoint(workdir / "model_full.ckpt")
    g = load_relevance(workdir)
    ev = make_eval_set(cfg, cfg.search.ref_snr_db, stream=2)
    res = grid_search(model, (ds.X_train, ds.Y_train), (ds.X_val, ds.Y_val), g, cfg.search,
                      make_ber_fn(cfg, ev), cfg.retrain_cfg, cfg.warm_start, cfg.seeds["search"])
    save_checkpoint(res.best_model, workdir / "model_pruned.ckpt",
                    {**_provenance(cfg), "masks": res.best_masks.to_dict(),
                     "no_improvement": res.no_improvement})
    _write_json(workdir / "search_result.json", {**_provenance(cfg), **res.summary()})
    _write_csv(workdir / "trace.csv", ["tau", "percentile", "val_loss", "ber", "flops", "accepted"],
               [(r["tau"], r["percentile"], r["val_loss"], r["ber"],
                 "" if r["flops"] is None else r["flops"], r["accepted"]) for r in res.trace])
    return res


def _load_pruned(workdir):
    model, meta = load_checkpoint(Path(workdir) / "model_pruned.ckpt")
    return model, MaskPair.from_dict(meta["masks"])


def stage_evaluate(cfg: ExperimentConfig, workdir) -> list[tuple]:
    workdir = Path(workdir)
    full, _ = load_checkpoint(workdir / "model_full.ckpt")
    pruned, masks = _load_pruned(workdir)
    rows = []
    for snr in cfg.snr_grid_db:
        ev = make_eval_set(cfg, snr, stream=1)
        for scheme in SCHEMES:
            if scheme == "STA-FNN-full":
                ber, bits = scheme_ber(ev, cfg.frame, scheme, full)
            elif scheme == "STA-FNN-pruned":
                ber, bits = scheme_ber(ev, cfg.frame, scheme, pruned, masks.kept_inputs)
            else:
                ber, bits = scheme_ber(ev, cfg.frame, scheme)
            rows.append((scheme, snr, ber, bits))
    _write_csv(workdir / "ber.csv", ["scheme", "snr_db", "ber", "bits"], rows)
    return rows


def stage_report(cfg: ExperimentConfig, workdir) -> list[tuple]:
    """FLOPs of the full model, the input-filtered full architecture, and
    the pruned model, each with its reduction against the full model."""
    workdir = Path(workdir)
    g = load_relevance(workdir)
    _, masks = _load_pruned(workdir)
    sizes = cfg.layer_sizes
    c0 = flops_from_widths(sizes)
    m_in = input_mask(g.r_sub, cfg.search.taus[0])
    c_in = flops(m_in, [np.ones(n) for n in sizes[1:-1]], sizes)
    c_pr = flops(masks.m_in, masks.m_arch, sizes)
    rows = [
        (cfg.scenario, "baseline", c0, reduction(c0, c0)),
        (cfg.scenario, "input-filtered", c_in, reduction(c_in, c0)),
        (cfg.scenario, "pruned", c_pr, reduction(c_pr, c0)),
    ]
    _write_csv(workdir / "flops.csv", ["scenario", "scheme", "flops", "reduction_pct"], rows)
    return rows


STAGES = {
    "simulate": stage_simulate,
    "train": stage_train,
    "explain": stage_explain,
    "prune": stage_prune,
    "evaluate": stage_evaluate,
    "report": stage_report,
}


def run_stage(name, cfg, workdir, **kw):
    try:
        return STAGES[name](cfg, workdir, **kw)
    except RelpruneError as exc:
        if isinstance(exc, StageError):
            raise
        raise StageError(name, exc) from exc
    except (OSError, KeyError, ValueError) as exc:
        raise StageError(name, exc) from exc


def run_pipeline(cfg: ExperimentConfig, workdir) -> dict:
    """Run every stage in order and return their outputs by stage name."""
    return {name: run_stage(name, cfg, workdir) for name in STAGES}
