"""Many-way few-shot probing on the synthetic 20-class mixture: baseline vs IbM2."""
from ibm2.config import RunConfig
from ibm2.episodes import run_experiment
from ibm2.report import to_text

cfg = RunConfig(mode="pfsl", shots=[1, 5], runs=3, data={"preset": "iso", "seed": 0})
doc = run_experiment(cfg)
print(to_text(doc))
for block in doc["results"]:
    hats = [round(t["eps_hat"], 3) for t in block["tasks"]]
    print(f"k={block['shots']}: eps_hat per run {hats}")
