"""Sampling shape and replica count on the anisotropic preset."""
from dataclasses import replace

from ibm2.config import RunConfig
from ibm2.episodes import run_experiment

base = RunConfig(mode="pfsl", shots=[1], runs=3, data={"preset": "aniso", "seed": 0})

print("sampling   accuracy")
for method, sampling in (("baseline", "ellipsoidal"), ("ibm2", "spherical"), ("ibm2", "ellipsoidal")):
    block = run_experiment(replace(base, method=method, sampling=sampling))["results"][0]
    label = "baseline" if method == "baseline" else sampling
    print(f"{label:11s} {100 * block['accuracy_mean']:.2f}")

print("\nR     accuracy")
for r in (1, 10, 50, 200):
    block = run_experiment(replace(base, R=r))["results"][0]
    print(f"{r:<5d} {100 * block['accuracy_mean']:.2f}")
