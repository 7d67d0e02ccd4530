"""
A small feed-forward denoiser on top of STA
===========================================

The network maps the 104 real numbers of one STA estimate to the true
channel. It is trained with Adam on a small simulated dataset.
"""

# %%
import numpy as np

from relprune import ExperimentConfig, fit_standardization, generate_dataset, init_model, train
from relprune.harness import make_eval_set, scheme_ber

cfg = ExperimentConfig.from_dict({
    "channel": {"name": "LF"},
    "dataset_size": 5000,
    "train": {"epochs": 100},
    "snr_grid_db": [10, 20, 30],
})
ds = generate_dataset(cfg)
print("train / validation samples:", len(ds.X_train), len(ds.X_val))

# %%
model = fit_standardization(init_model(cfg.layer_sizes, seed=0), ds.X_train)
print("layers:", model.layer_sizes, "parameters:", model.n_params)
model, hist = train(model, ds.X_train, ds.Y_train, cfg.train, ds.X_val, ds.Y_val)
for epoch in (0, 10, 50, 100):
    print(f"epoch {epoch:3d}  train {hist.train[epoch]:.4f}  validation {hist.val[epoch]:.4f}")

# %%
# Bit error rate on held-out frames.
for snr in cfg.snr_grid_db:
    ev = make_eval_set(cfg, snr)
    row = {s: scheme_ber(ev, cfg.frame, s, model)[0] for s in ("DPA", "STA", "FNN")}
    print(f"SNR {snr:4.0f} dB  " + "  ".join(f"{k} {v:.4f}" for k, v in row.items()))
