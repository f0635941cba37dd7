"""Watch the binary search for the noise radius on a small two-class problem."""
import numpy as np

from ibm2.features import FeatureDataset, l2_normalize
from ibm2.linear import TrainConfig
from ibm2.noise import compute_range_vector
from ibm2.search import SearchConfig, search_epsilon

rng = np.random.default_rng(0)
x = np.concatenate([rng.normal(1, 0.4, (5, 8)), rng.normal(-1, 0.4, (5, 8))])
data = l2_normalize(FeatureDataset(x, [0] * 5 + [1] * 5, 2))
s = compute_range_vector(data, "ellipsoidal")
print("range vector:", np.round(s.s, 3))

train_cfg = TrainConfig(init_lr=1.0, batch_size=256, epochs=20, seed=1)
for threshold in (0.99, 0.9, 0.7):
    cfg = SearchConfig(threshold=threshold, replicas=100, epochs=20, seed=2)
    trace = search_epsilon(data, s, cfg, train_cfg)
    print(f"\nthreshold {threshold}")
    for st in trace.steps:
        verdict = "pass" if st.accuracy > trace.threshold else "fail"
        print(f"  eps={st.tested_eps:6.3f}  train acc={st.accuracy:.3f}  {verdict}  "
              f"-> [{st.left:.3f}, {st.right:.3f}]")
    print(f"  eps_hat = {trace.eps_hat:.3f}")
