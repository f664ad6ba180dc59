"""
Sweeping load and sparsity
==========================

A scaled-down version of the load and sparsity sweeps.  The same
functions sit behind ``ldsnoma sweep-k`` and ``ldsnoma sweep-d``.
"""

from ldsnoma.harness import (ExperimentConfig, relative_gain, run_sweep_d, run_sweep_K,
                             summarize, write_csv)

# Few drops and trials so this finishes in seconds.
cfg = ExperimentConfig(F=20, K=(20, 40, 60), d=(1,), drops=5, fading_trials=50, seed=1)
summary = summarize(run_sweep_K(cfg))
print(write_csv(summary, columns=("method", "K", "d", "det_emi", "mc_emi"),
                rate_columns=("det_emi", "mc_emi")))

# Greedy over random at 300% load, d = 1.
print("gain at K=60:", relative_gain(summary, "greedy", "random", 60, 1))

# Sparsity sweep at fixed load; drops and fading draws are shared across d.
cfg = ExperimentConfig(F=20, K=(60,), d=(1, 2, 4), drops=5, fading_trials=50, seed=1)
summary = summarize(run_sweep_d(cfg))
for s in summary:
    if s["method"] == "greedy":
        print(f"d = {s['d']}: sparsity gain {s['sparsity_gain']:.4f} nats")
