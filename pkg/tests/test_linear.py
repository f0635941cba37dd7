import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ibm2.features import FeatureDataset, MixtureSpec, nearest_mean_predict, synth_mixture
from ibm2.linear import (
    Adam,
    LinearHead,
    TrainConfig,
    TrainingDivergedError,
    cosine_lr,
    evaluate,
    grad_smoothed_ce,
    init_head,
    load_head,
    logits,
    save_head,
    smoothed_ce,
    softmax,
    train,
)


def literal_ce(z, label, alpha, c):
    m = max(z)
    lse = m + math.log(sum(math.exp(v - m) for v in z))
    return -sum(((1 - alpha) * (j == label) + alpha / c) * (z[j] - lse) for j in range(c))


def fd_grad(head, x, y, alpha, h=1e-6):
    def loss(h_):
        return float(np.mean(smoothed_ce(logits(h_, x), y, alpha, h_.num_classes)))

    gw = np.zeros_like(head.W)
    gb = np.zeros_like(head.b)
    for idx in np.ndindex(head.W.shape):
        up, dn = head.copy(), head.copy()
        up.W[idx] += h
        dn.W[idx] -= h
        gw[idx] = (loss(up) - loss(dn)) / (2 * h)
    for k in range(head.b.size):
        up, dn = head.copy(), head.copy()
        up.b[k] += h
        dn.b[k] -= h
        gb[k] = (loss(up) - loss(dn)) / (2 * h)
    return gw, gb


def rel_err(a, b):
    return np.abs(a - b).max() / max(np.abs(a).max(), np.abs(b).max(), 1e-12)


def test_init_head():
    a, b = init_head(7, 3, 42), init_head(7, 3, 42)
    assert np.array_equal(a.W, b.W) and np.array_equal(a.b, b.b)
    assert np.array_equal(a.b, np.zeros(3))
    big = init_head(100, 100, 1)
    assert abs(big.W.std() - 0.01) <= 0.001


def test_logits_examples():
    head = LinearHead(np.eye(2), np.zeros(2))
    assert logits(head, [3.0, 4.0]).tolist() == [3.0, 4.0]
    head = LinearHead(np.eye(2), np.array([1.0, -1.0]))
    assert logits(head, [0.0, 0.0]).tolist() == [1.0, -1.0]
    with pytest.raises(ValueError):
        logits(head, [1.0, 2.0, 3.0])


def test_logits_random_vs_dot_products():
    rng = np.random.default_rng(0)
    head = LinearHead(rng.normal(size=(5, 8)), rng.normal(size=5))
    x = rng.normal(size=8)
    oracle = [sum(head.W[c, j] * x[j] for j in range(8)) + head.b[c] for c in range(5)]
    assert np.abs(logits(head, x) - oracle).max() <= 1e-12


def test_smoothed_ce_examples():
    for alpha in (0.0, 0.1, 0.5):
        assert smoothed_ce(np.full(6, 2.5), 3, alpha, 6) == pytest.approx(math.log(6), abs=1e-12)
    z = np.zeros(4)
    z[1] = 1000.0
    assert smoothed_ce(z, 1, 0.0, 4) < 1e-6
    rng = np.random.default_rng(3)
    for _ in range(20):
        z = rng.normal(scale=3, size=4)
        y = int(rng.integers(4))
        assert abs(smoothed_ce(z, y, 0.1, 4) - literal_ce(z.tolist(), y, 0.1, 4)) <= 1e-12


def test_smoothed_ce_extreme_logits_finite():
    assert math.isfinite(smoothed_ce(np.array([1e300, -1e300, 0.0]), 1, 0.1, 3))


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 8), st.floats(0.0, 0.9), st.integers(0, 10**6))
def test_loss_properties(c, alpha, seed):
    rng = np.random.default_rng(seed)
    z = rng.normal(scale=4, size=c)
    y = int(rng.integers(c))
    p = softmax(z)
    assert np.all(p >= 0) and abs(p.sum() - 1) <= 1e-12
    q = np.full(c, alpha / c)
    q[y] += 1 - alpha
    entropy = -sum(v * math.log(v) for v in q if v > 0)
    assert smoothed_ce(z, y, alpha, c) >= entropy - 1e-12


def test_zero_gradient_at_target():
    alpha, c = 0.2, 4
    q = np.full(c, alpha / c)
    q[2] += 1 - alpha
    head = LinearHead(np.zeros((c, 3)), np.log(q))
    gw, gb = grad_smoothed_ce(head, np.array([[0.3, -1.0, 2.0]]), np.array([2]), alpha)
    assert np.abs(gw).max() <= 1e-15 and np.abs(gb).max() <= 1e-15


def test_gradient_finite_differences_1d():
    head = LinearHead(np.array([[0.3], [-0.2]]), np.array([0.1, 0.05]))
    x, y = np.array([[1.7]]), np.array([1])
    gw, gb = grad_smoothed_ce(head, x, y, 0.1)
    fw, fb = fd_grad(head, x, y, 0.1)
    assert rel_err(np.concatenate([gw.ravel(), gb]), np.concatenate([fw.ravel(), fb])) < 1e-6


def test_gradient_finite_differences_random():
    rng = np.random.default_rng(11)
    for _ in range(25):
        c, d = int(rng.integers(2, 6)), int(rng.integers(1, 6))
        head = LinearHead(rng.normal(size=(c, d)), rng.normal(size=c))
        x = rng.normal(size=(1, d))
        y = rng.integers(0, c, 1)
        alpha = float(rng.uniform(0, 0.5))
        gw, gb = grad_smoothed_ce(head, x, y, alpha)
        fw, fb = fd_grad(head, x, y, alpha)
        assert rel_err(np.concatenate([gw.ravel(), gb]), np.concatenate([fw.ravel(), fb])) < 1e-5


def test_batch_gradient_is_mean():
    rng = np.random.default_rng(2)
    head = LinearHead(rng.normal(size=(3, 4)), rng.normal(size=3))
    x = rng.normal(size=(6, 4))
    y = rng.integers(0, 3, 6)
    gw, gb = grad_smoothed_ce(head, x, y, 0.1)
    parts = [grad_smoothed_ce(head, x[i:i + 1], y[i:i + 1], 0.1) for i in range(6)]
    assert np.allclose(gw, np.mean([p[0] for p in parts], axis=0), atol=1e-15)
    assert np.allclose(gb, np.mean([p[1] for p in parts], axis=0), atol=1e-15)


def test_cosine_lr():
    assert cosine_lr(0, 100, 0.4) == 0.4
    assert abs(cosine_lr(100, 100, 0.4)) <= 1e-15
    assert cosine_lr(50, 100, 0.4) == pytest.approx(0.2, abs=1e-15)


def test_adam_zero_gradient_is_noop():
    p = {"w": np.array([1.0, -2.0])}
    opt = Adam()
    for _ in range(3):
        opt.step(p, {"w": np.zeros(2)}, lr=1.0)
    assert p["w"].tolist() == [1.0, -2.0]


def test_train_separable_pair():
    ds = FeatureDataset([[1.0], [-1.0]], [0, 1], 2)
    _, acc = train(ds, 1, 2, TrainConfig(init_lr=0.1, epochs=200))
    assert acc == 1.0


def test_train_descends():
    ds = FeatureDataset([[0.5, -0.3]], [1], 3)
    cfg = TrainConfig(init_lr=0.05, epochs=20, label_smoothing=0.0, seed=4)
    before = smoothed_ce(logits(init_head(2, 3, 4), ds.features[0]), 1, 0.0, 3)
    head, _ = train(ds, 2, 3, cfg)
    assert smoothed_ce(logits(head, ds.features[0]), 1, 0.0, 3) < before


def test_train_matches_nearest_mean_on_mixture():
    spec = MixtureSpec(2.0 * np.eye(4, 16), np.full(16, 0.3), shots=32, test_per_class=250, seed=8)
    tr, te = synth_mixture(spec)
    head, _ = train(tr, 16, 4, TrainConfig(init_lr=0.05, epochs=100, batch_size=32))
    means = np.stack([tr.features[tr.labels == c].mean(axis=0) for c in range(4)])
    oracle = (nearest_mean_predict(means, te.features) == te.labels).mean()
    assert abs(evaluate(head, te) - oracle) <= 0.02


def test_train_deterministic():
    rng = np.random.default_rng(1)
    ds = FeatureDataset(rng.normal(size=(40, 5)), rng.integers(0, 3, 40), 3)
    cfg = TrainConfig(init_lr=0.1, epochs=5, batch_size=8, seed=9)
    a, _ = train(ds, 5, 3, cfg)
    b, _ = train(ds, 5, 3, cfg)
    assert np.array_equal(a.W, b.W) and np.array_equal(a.b, b.b)


def test_train_warm_start_updates_given_head():
    ds = FeatureDataset([[1.0], [-1.0]], [0, 1], 2)
    head = init_head(1, 2, 0)
    before = head.W.copy()
    out, _ = train(ds, 1, 2, TrainConfig(init_lr=0.1, epochs=3), head=head)
    assert out is head and not np.array_equal(head.W, before)
    with pytest.raises(ValueError):
        train(ds, 1, 2, TrainConfig(), head=init_head(2, 2, 0))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_train_aborts_on_nan():
    ds = FeatureDataset([[np.inf], [1.0]], [0, 1], 2)
    with pytest.raises(TrainingDivergedError) as err:
        train(ds, 1, 2, TrainConfig(epochs=1))
    assert err.value.step == 0


def test_evaluate_examples():
    head = LinearHead(np.array([[1.0], [-1.0]]), np.zeros(2))
    assert evaluate(head, FeatureDataset([[1.0], [-1.0]], [0, 1], 2)) == 1.0
    zero = LinearHead(np.zeros((3, 2)), np.zeros(3))
    assert evaluate(zero, FeatureDataset(np.ones((4, 2)), [0] * 4, 3)) == 1.0


def test_evaluate_vs_row_loop():
    rng = np.random.default_rng(6)
    head = LinearHead(rng.normal(size=(5, 4)), rng.normal(size=5))
    ds = FeatureDataset(rng.normal(size=(300, 4)), rng.integers(0, 5, 300), 5)
    hits = 0
    for x, y in zip(ds.features, ds.labels):
        scores = [float(head.W[c] @ x + head.b[c]) for c in range(5)]
        hits += scores.index(max(scores)) == y
    assert evaluate(head, ds) == hits / 300


def test_head_file_round_trip(tmp_path):
    head = init_head(6, 4, 3)
    head.b[:] = [0.5, -1.0, 2.0, 0.0]
    save_head(head, tmp_path / "h.bin")
    raw = (tmp_path / "h.bin").read_bytes()
    assert raw[:8] == b"IBM2HEAD" and len(raw) == 20 + 8 * (24 + 4)
    back = load_head(tmp_path / "h.bin")
    assert np.array_equal(back.W, head.W) and np.array_equal(back.b, head.b)
