"""Episodic 5-way evaluation and the worst-case episode metrics."""
import numpy as np

from ibm2.config import RunConfig
from ibm2.episodes import run_experiment
from ibm2.metrics import gain_histogram, sigma_from_ci

# spherical: five support rows give a range vector that mostly tracks the class means
cfg = RunConfig(mode="fsl", method="ibm2", sampling="spherical", shots=[1], episodes=100, runs=1,
                data={"preset": "fsl", "seed": 0})
doc = run_experiment(cfg)
block = doc["results"][0]
for name in ("metrics", "baseline_metrics"):
    m = block["runs"][0][name]
    print(f"{name:17s} " + "  ".join(f"{k}={100 * m[k]:.2f}" for k in ("acc_mean", "std", "acc_1", "acc_10", "acc_100", "ci95")))

# a tight interval can hide a wide spread: recover the std from a reported CI
print("CI 0.18% over 10000 episodes implies std", round(sigma_from_ci(0.18, 10000), 2), "%")

base = np.array([e["baseline_accuracy"] for e in block["episodes"]])
ibm2 = np.array([e["accuracy"] for e in block["episodes"]])
print("mean gain by baseline-accuracy decile:", np.round(100 * gain_histogram(base, ibm2), 2))
