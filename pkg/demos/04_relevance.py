"""
Explaining the denoiser with LRP-epsilon
========================================

Relevance starts at the output as the magnitude of each predicted
subcarrier, then flows back layer by layer. Averaging over many samples
gives one score per input subcarrier and per hidden neuron.
"""

# %%
import numpy as np

from relprune import ExperimentConfig, aggregate, categorize, explain, fit_standardization, generate_dataset
from relprune import init_model, train
from relprune.lrp import conservation_check

cfg = ExperimentConfig.from_dict({"channel": {"name": "LF"}, "dataset_size": 5000, "train": {"epochs": 100}})
ds = generate_dataset(cfg)
model = fit_standardization(init_model(cfg.layer_sizes, 0), ds.X_train)
model, _ = train(model, ds.X_train, ds.Y_train, cfg.train)

# %%
# One sample. Biases soak up part of the relevance, so the per-layer sums
# drift slightly from the output total.
rmap = explain(model, ds.X_val[0], epsilon=1e-6)
print("relevance per layer:", [round(float(r.sum()), 4) for r in rmap.R])
print("relative leakage:   ", conservation_check(rmap).round(4))

# %%
# Global scores over 1000 training samples.
g = aggregate(model, ds.X_train[:1000], epsilon=1e-6)
tax = categorize(g.r_sub)
print("top subcarriers:", np.argsort(-g.r_sub)[:8])
print("pilot scores:   ", g.r_sub[list(cfg.frame.pilot_indices)].round(2))
for name in ("reliable", "contributing", "neutral", "harmful"):
    print(f"{name:>12}: {len(getattr(tax, name))}")
print("hidden-neuron scores, layer 1:", g.r_arch[0].round(2))

# %%
# Sanity check: a feature that is always zero gets exactly zero relevance.
X = ds.X_train[:200].copy()
X[:, 3] = model.in_mean[3]
print("relevance of a constant input:", aggregate(model, X).r_in[3])
