"""
Relevance-driven pruning and its cost
=====================================

Inputs are dropped when their relevance falls below a threshold tau.
Hidden neurons are dropped by percentile within each layer. A grid over
(tau, P) retrains each candidate and keeps it only if validation loss
improves and the bit error rate does not get worse.
"""

# %%
import numpy as np

from relprune import SearchGrid, arch_mask, flops, flops_from_widths, input_mask, reduction

# Cost of a dense stack: 2*in*out multiply-adds plus one bias add per output.
for widths in ([104, 15, 15, 15, 104], [8, 15, 15, 15, 104], [8, 14, 11, 9, 104]):
    c = flops_from_widths(widths)
    print(f"{str(widths):24s} {c:5d} FLOPs  reduction {reduction(c, 7289):5.2f}%")

# %%
r_sub = np.array([1.0, 0.4, 0.0, -0.2])
print("input mask at tau=0+:", input_mask(r_sub))
(m,) = arch_mask([np.arange(1, 11)], 30)
print("30th percentile on 1..10 keeps:", np.flatnonzero(m) + 1)

# %%
# A full search on a small LF run.
from relprune import ExperimentConfig, fit_standardization, generate_dataset, grid_search, init_model, train
from relprune.harness import make_ber_fn, make_eval_set
from relprune.lrp import aggregate

cfg = ExperimentConfig.from_dict({"channel": {"name": "LF"}, "dataset_size": 5000, "train": {"epochs": 100}})
ds = generate_dataset(cfg)
base = fit_standardization(init_model(cfg.layer_sizes, 0), ds.X_train)
base, _ = train(base, ds.X_train, ds.Y_train, cfg.train)
g = aggregate(base, ds.X_train[:1000])

ber_fn = make_ber_fn(cfg, make_eval_set(cfg, 20.0, stream=2))
for warm in (False, True):
    res = grid_search(base, (ds.X_train, ds.Y_train), (ds.X_val, ds.Y_val), g, SearchGrid(),
                      ber_fn, cfg.retrain_cfg, warm_start=warm)
    print(f"\nwarm start = {warm}, BER target {res.ber_target:.4f}")
    for row in res.trace:
        print(f"  P={row['percentile']:4.0f}  widths {row['widths']}  val {row['val_loss']:.4f}  "
              f"BER {row['ber']:.4f}  {'accepted' if row['accepted'] else ''}")
    print(f"  selected {res.best_masks.widths}, {res.flops} FLOPs, {res.reduction_pct}% fewer")
