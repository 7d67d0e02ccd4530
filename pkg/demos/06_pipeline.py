"""
The whole experiment in one call
================================

``run_pipeline`` chains simulate, train, explain, prune, evaluate and
report, writing every artifact into one directory. The same stages are
available from the shell:

    relprune pipeline --config cfg.json --workdir run
    relprune prune --workdir run --percentiles 15,20 --warm-start
"""

# %%
import csv
import sys
import tempfile
from pathlib import Path

from relprune import ExperimentConfig, run_pipeline

cfg = ExperimentConfig.from_dict({
    "channel": {"name": "LF"},
    "dataset_size": 5000,
    "train": {"epochs": 100},
    "search": {"warm_start": True},
    "n_eval_frames": 10,
})
workdir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="relprune-"))
run_pipeline(cfg, workdir)
print("artifacts in", workdir)
for p in sorted(workdir.iterdir()):
    print(f"  {p.name:24s} {p.stat().st_size:8d} bytes")

# %%
for name in ("ber.csv", "flops.csv"):
    print(f"\n{name}")
    with open(workdir / name) as fh:
        for row in csv.reader(fh):
            print("  " + ", ".join(row))
