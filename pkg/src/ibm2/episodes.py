"""Task / episode sampling and the end-to-end baseline and IbM2 pipelines."""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import __version__
from .config import BASELINE, FSL, IBM2, PFSL, RunConfig
from .features import FeatureDataset, l2_normalize, load_feature_file, synth_mixture
from .linear import LinearHead, evaluate, predict, train
from .metrics import episode_metrics
from .noise import NoiseBank, RangeVector, VirtualSetSpec, compute_range_vector
from .presets import preset_spec
from .rng import generator, mix64
from .search import SearchTrace, search_epsilon

REPORT_FORMAT = 1
_PROBE_SALT = 0x9B0BE


@dataclass(frozen=True, eq=False)
class PfslTask:
    train: FeatureDataset
    test: FeatureDataset
    shots: int
    seed: int
    rows: np.ndarray  # pool rows used for training


@dataclass(frozen=True, eq=False)
class FslEpisode:
    way: int
    shots: int
    query_per_class: int
    support: FeatureDataset
    query: FeatureDataset
    classes: np.ndarray  # original class ids, position = remapped label
    support_rows: np.ndarray
    query_rows: np.ndarray
    seed: int

    # uniform (train, test) access shared with PfslTask
    @property
    def train(self) -> FeatureDataset:
        return self.support

    @property
    def test(self) -> FeatureDataset:
        return self.query


def _rows_by_class(pool: FeatureDataset) -> list[np.ndarray]:
    return [np.flatnonzero(pool.labels == c) for c in range(pool.num_classes)]


def sample_pfsl_task(pool: FeatureDataset, test: FeatureDataset, shots: int, seed: int) -> PfslTask:
    """``shots`` rows from every class of ``pool``, uniformly without replacement."""
    by_class = _rows_by_class(pool)
    for c, rows in enumerate(by_class):
        if len(rows) < shots:
            raise ValueError(f"class {c} has {len(rows)} rows, fewer than k={shots}")
    rng = generator(seed, 0x7A5C)
    picked = np.concatenate([rng.choice(rows, size=shots, replace=False) for rows in by_class])
    picked.sort()
    return PfslTask(pool.subset(picked), test, shots, seed, picked)


def sample_fsl_episode(pool: FeatureDataset, way: int, shots: int, query: int, seed: int) -> FslEpisode:
    """N classes, then k support and q query rows per class, all without
    replacement; labels are remapped to the rank of the original id."""
    by_class = _rows_by_class(pool)
    eligible = [c for c, rows in enumerate(by_class) if len(rows) > 0]
    if len(eligible) < way:
        raise ValueError(f"pool has {len(eligible)} classes, episode needs {way}")
    rng = generator(seed, 0xE915)
    classes = np.sort(rng.choice(eligible, size=way, replace=False))
    support_rows, query_rows = [], []
    for c in classes:
        rows = by_class[c]
        if len(rows) < shots + query:
            raise ValueError(f"class {c} has {len(rows)} rows, episode needs {shots + query}")
        chosen = rng.choice(rows, size=shots + query, replace=False)
        support_rows.append(chosen[:shots])
        query_rows.append(chosen[shots:])
    s_rows = np.concatenate(support_rows)
    q_rows = np.concatenate(query_rows)
    remap = np.full(pool.num_classes, -1)
    remap[classes] = np.arange(way)
    names = None
    if pool.class_names is not None:
        names = tuple(pool.class_names[c] for c in classes)

    def build(rows):
        return FeatureDataset(pool.features[rows], remap[pool.labels[rows]], way, names, pool.normalized)

    return FslEpisode(way, shots, query, build(s_rows), build(q_rows), classes, s_rows, q_rows, seed)


# --------------------------------------------------------------------------
# pipeline


@dataclass
class TaskResult:
    accuracy: float
    baseline_accuracy: float
    lr: float
    baseline_lr: float
    head: LinearHead
    predictions: np.ndarray
    eps_hat: float | None = None
    acc_up: float | None = None
    trace: SearchTrace | None = None
    lr_grid: dict | None = None

    def record(self) -> dict:
        out = {
            "accuracy": self.accuracy,
            "baseline_accuracy": self.baseline_accuracy,
            "lr": self.lr,
            "baseline_lr": self.baseline_lr,
        }
        if self.trace is not None:
            out["eps_hat"] = self.eps_hat
            out["acc_up"] = self.acc_up
            out["trace"] = self.trace.to_dict()
        if self.lr_grid is not None:
            out["lr_grid"] = self.lr_grid
        return out


@dataclass
class PreparedTask:
    """Normalised splits plus everything the final training stage needs."""

    train: FeatureDataset
    test: FeatureDataset
    seed: int
    method: str
    range_vec: RangeVector | None = None
    trace: SearchTrace | None = None
    acc_up: float | None = None
    virtual: VirtualSetSpec | None = None
    _baseline: dict = field(default_factory=dict)


def _seeds(seed: int) -> dict:
    return {"noise": mix64(seed, 10), "final": mix64(seed, 11), "up": mix64(seed, 12)}


def prepare_task(train_set: FeatureDataset, test_set: FeatureDataset, cfg: RunConfig,
                 seed: int, method: str | None = None) -> PreparedTask:
    method = method or cfg.method
    train_set = l2_normalize(train_set)
    test_set = l2_normalize(test_set)
    prep = PreparedTask(train_set, test_set, seed, method)
    if method != IBM2:
        return prep
    seeds = _seeds(seed)
    # the training accuracy reachable on the original set caps the threshold
    _, prep.acc_up = train(train_set, train_set.dim, train_set.num_classes,
                           cfg.search_train_config(seeds["up"]))
    prep.range_vec = compute_range_vector(train_set, cfg.sampling)
    search = cfg.search_config(seeds["noise"])
    prep.trace = search_epsilon(train_set, prep.range_vec, search,
                                cfg.search_train_config(seeds["final"]), acc_up=prep.acc_up)
    eps_hat = prep.trace.eps_hat
    if eps_hat > 0:
        noise_seed = seeds["noise"] if not search.resample_per_step else mix64(seeds["noise"], 3)
        bank = NoiseBank(noise_seed, train_set.size, cfg.R, train_set.dim)
        prep.virtual = VirtualSetSpec(train_set, eps_hat, cfg.R, prep.range_vec, noise_seed, bank)
    return prep


def fit_baseline(prep: PreparedTask, cfg: RunConfig, lr: float) -> tuple[LinearHead, float]:
    if lr not in prep._baseline:
        tcfg = cfg.train_config(lr, _seeds(prep.seed)["final"])
        head, _ = train(prep.train, prep.train.dim, prep.train.num_classes, tcfg)
        prep._baseline[lr] = (head, evaluate(head, prep.test))
    return prep._baseline[lr]


def fit_method(prep: PreparedTask, cfg: RunConfig, lr: float) -> tuple[LinearHead, float]:
    """Final-stage probe for the prepared method at initial learning rate ``lr``."""
    if prep.method == BASELINE or prep.virtual is None:
        # eps_hat == 0 makes the virtual set a copy of the original one
        return fit_baseline(prep, cfg, lr)
    tcfg = cfg.train_config(lr, _seeds(prep.seed)["final"])
    head, _ = train(prep.virtual, prep.train.dim, prep.train.num_classes, tcfg)
    return head, evaluate(head, prep.test)


def _result(prep: PreparedTask, head: LinearHead, acc: float, lr: float,
            base_acc: float, base_lr: float) -> TaskResult:
    res = TaskResult(acc, base_acc, lr, base_lr, head, predict(head, prep.test.features))
    if prep.trace is not None:
        res.eps_hat = prep.trace.eps_hat
        res.acc_up = prep.acc_up
        res.trace = prep.trace
    return res


def run_pipeline(task_train: FeatureDataset, task_test: FeatureDataset, cfg: RunConfig,
                 seed: int = 0, lr: float | None = None, baseline_lr: float | None = None) -> TaskResult:
    """Normalise, fit the baseline probe, and for IbM2 search eps, build the
    virtual set and fit the final probe on it; evaluate on ``task_test``."""
    lr = cfg.default_lr() if lr is None else lr
    if baseline_lr is None:
        baseline_lr = lr if cfg.method == BASELINE else cfg.default_lr(BASELINE)
    prep = prepare_task(task_train, task_test, cfg, seed)
    base_head, base_acc = fit_baseline(prep, cfg, baseline_lr)
    if prep.method == IBM2 and prep.virtual is None:
        # eps_hat == 0: nothing to add over the original set, IbM2 is the baseline
        return _result(prep, base_head, base_acc, baseline_lr, base_acc, baseline_lr)
    head, acc = fit_method(prep, cfg, lr)
    return _result(prep, head, acc, lr, base_acc, baseline_lr)


def run_pipeline_grid(task_train: FeatureDataset, task_test: FeatureDataset, cfg: RunConfig,
                      seed: int, candidates: Sequence[float]) -> dict[float, TaskResult]:
    """One search, then a final probe for every candidate learning rate."""
    prep = prepare_task(task_train, task_test, cfg, seed)
    out = {}
    for lr in candidates:
        base_head, base_acc = fit_baseline(prep, cfg, lr)
        head, acc = fit_method(prep, cfg, lr)
        out[lr] = _result(prep, head, acc, lr, base_acc, lr)
    return out


def select_lr(probe_episodes: Sequence, candidate_lrs: Sequence[float], cfg: RunConfig,
              method: str | None = None) -> float:
    """Candidate with the best mean test accuracy over the probe episodes;
    ties go to the smaller learning rate.  Each probe episode needs
    ``train``/``test`` datasets and a ``seed``."""
    if not probe_episodes:
        raise ValueError("need at least one probe episode")
    if not candidate_lrs:
        raise ValueError("need at least one candidate learning rate")
    method = method or cfg.method
    preps = [prepare_task(ep.train, ep.test, cfg, ep.seed, method) for ep in probe_episodes]
    best_lr, best = None, -1.0
    for lr in sorted(candidate_lrs):
        mean = float(np.mean([fit_method(p, cfg, lr)[1] for p in preps]))
        if mean > best:
            best_lr, best = lr, mean
    return best_lr


# --------------------------------------------------------------------------
# experiments


def load_data(data: dict) -> tuple[FeatureDataset, FeatureDataset | None]:
    """Resolve the config's data section into (pool, test)."""
    if "preset" in data:
        return synth_mixture(preset_spec(data["preset"], int(data.get("seed", 0))))
    pool = load_feature_file(data["pool"])
    test = load_feature_file(data["test"]) if "test" in data else None
    return pool, test


def _pfsl_probe_tasks(pool: FeatureDataset, shots: int, cfg: RunConfig, run: int) -> list[PfslTask]:
    tasks = []
    for e in range(cfg.lr.probe_episodes):
        seed = mix64(cfg.seed, _PROBE_SALT, shots, run, e)
        t = sample_pfsl_task(pool, pool, shots, seed)
        rest = np.setdiff1d(np.arange(pool.size), t.rows)
        if rest.size == 0:
            raise ValueError("probe LR selection needs pool rows beyond the k shots")
        tasks.append(PfslTask(t.train, pool.subset(rest), shots, seed, t.rows))
    return tasks


def _fsl_probe_episodes(pool: FeatureDataset, shots: int, cfg: RunConfig, run: int) -> list[FslEpisode]:
    return [
        sample_fsl_episode(pool, cfg.way, shots, cfg.query, mix64(cfg.seed, _PROBE_SALT, shots, run, e))
        for e in range(cfg.lr.probe_episodes)
    ]


def _choose_lrs(cfg: RunConfig, probes) -> tuple[float, float]:
    if cfg.lr.policy != "probe":
        lr = cfg.default_lr()
        return lr, (lr if cfg.method == BASELINE else cfg.default_lr(BASELINE))
    lr = select_lr(probes, cfg.lr.candidates, cfg, cfg.method)
    base_lr = lr if cfg.method == BASELINE else select_lr(probes, cfg.lr.candidates, cfg, BASELINE)
    return lr, base_lr


def _task_job(args) -> dict:
    """Run one task/episode; returns ``{lr: record}`` (one entry unless grid)."""
    train_set, test_set, cfg, seed, lr, base_lr = args
    if cfg.lr.policy == "grid":
        results = run_pipeline_grid(train_set, test_set, cfg, seed, cfg.lr.candidates)
        return {k: v.record() for k, v in results.items()}
    res = run_pipeline(train_set, test_set, cfg, seed, lr=lr, baseline_lr=base_lr)
    return {lr: res.record()}


def _map(jobs: int, fn, items: list) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


def _pick_grid(records: list[dict], candidates: Sequence[float], key: str) -> float:
    best_lr, best = None, -1.0
    for lr in sorted(candidates):
        m = float(np.mean([r[lr][key] for r in records]))
        if m > best:
            best_lr, best = lr, m
    return best_lr


def _flatten(records: list[dict], cfg: RunConfig) -> tuple[list[dict], dict | None]:
    """Collapse per-LR records to one record per task."""
    if cfg.lr.policy != "grid":
        return [next(iter(r.values())) for r in records], None
    cands = cfg.lr.candidates
    lr = _pick_grid(records, cands, "accuracy")
    base_lr = _pick_grid(records, cands, "baseline_accuracy")
    grid = {
        "candidates": list(cands),
        "mean_accuracy": [float(np.mean([r[c]["accuracy"] for r in records])) for c in cands],
        "mean_baseline_accuracy": [float(np.mean([r[c]["baseline_accuracy"] for r in records])) for c in cands],
    }
    flat = []
    for r in records:
        rec = dict(r[lr])
        rec["baseline_accuracy"] = r[base_lr]["baseline_accuracy"]
        rec["baseline_lr"] = base_lr
        flat.append(rec)
    return flat, grid


def _mean_std(values: list[float]) -> tuple[float, float]:
    a = np.asarray(values, dtype=np.float64)
    return float(a.mean()), float(a.std(ddof=1)) if a.size > 1 else 0.0


def _run_pfsl(cfg: RunConfig, pool, test, jobs: int) -> list[dict]:
    if test is None:
        raise ValueError("pfsl mode needs a test split")
    blocks = []
    for k in cfg.shots:
        jobs_in = []
        for run in range(cfg.runs):
            seed = mix64(cfg.seed, k, run)
            task = sample_pfsl_task(pool, test, k, seed)
            probes = _pfsl_probe_tasks(pool, k, cfg, run) if cfg.lr.policy == "probe" else None
            lr, base_lr = _choose_lrs(cfg, probes)
            jobs_in.append((task.train, task.test, cfg, seed, lr, base_lr))
        records, grid = _flatten(_map(jobs, _task_job, jobs_in), cfg)
        for run, rec in enumerate(records):
            rec["run"] = run
            rec["seed"] = jobs_in[run][3]
        acc_m, acc_s = _mean_std([r["accuracy"] for r in records])
        base_m, base_s = _mean_std([r["baseline_accuracy"] for r in records])
        block = {
            "shots": k,
            "accuracy_mean": acc_m,
            "accuracy_std": acc_s,
            "baseline_mean": base_m,
            "baseline_std": base_s,
            "tasks": records,
        }
        if grid is not None:
            block["lr_grid"] = grid
        blocks.append(block)
    return blocks


def _run_fsl(cfg: RunConfig, pool, jobs: int) -> list[dict]:
    blocks = []
    for k in cfg.shots:
        runs, episodes = [], []
        for run in range(cfg.runs):
            probes = _fsl_probe_episodes(pool, k, cfg, run) if cfg.lr.policy == "probe" else None
            lr, base_lr = _choose_lrs(cfg, probes)
            jobs_in = []
            for e in range(cfg.episodes):
                seed = mix64(cfg.seed, k, run, e)
                ep = sample_fsl_episode(pool, cfg.way, k, cfg.query, seed)
                jobs_in.append((ep.support, ep.query, cfg, seed, lr, base_lr))
            records, grid = _flatten(_map(jobs, _task_job, jobs_in), cfg)
            for e, rec in enumerate(records):
                rec["run"] = run
                rec["episode"] = e
                rec["seed"] = jobs_in[e][3]
            run_block = {
                "run": run,
                "metrics": episode_metrics([r["accuracy"] for r in records]).to_dict(),
                "baseline_metrics": episode_metrics([r["baseline_accuracy"] for r in records]).to_dict(),
            }
            if grid is not None:
                run_block["lr_grid"] = grid
            runs.append(run_block)
            episodes.extend(records)
        keys = runs[0]["metrics"].keys()
        blocks.append({
            "shots": k,
            "way": cfg.way,
            "query": cfg.query,
            "metrics_mean": {key: float(np.mean([r["metrics"][key] for r in runs])) for key in keys},
            "baseline_metrics_mean": {
                key: float(np.mean([r["baseline_metrics"][key] for r in runs])) for key in keys
            },
            "runs": runs,
            "episodes": episodes,
        })
    return blocks


def run_experiment(cfg: RunConfig, jobs: int = 1) -> dict:
    """Run the configured grid and return the JSON-ready report.

    pFSL: one task per (shots, run), mean and std over runs.  FSL:
    ``episodes`` episodes per (shots, run) summarised by the episode metrics.
    Every random choice derives from ``cfg.seed`` through ``mix64``.
    """
    cfg = cfg.resolved().validate()
    start = time.perf_counter()
    pool, test = load_data(cfg.data)
    if cfg.mode == PFSL:
        results = _run_pfsl(cfg, pool, test, jobs)
    else:
        results = _run_fsl(cfg, pool, jobs)
    return {
        "artifact": "ibm2",
        "version": __version__,
        "report_format": REPORT_FORMAT,
        "master_seed": cfg.seed,
        "config": cfg.to_dict(),
        "results": results,
        "wall_clock_seconds": time.perf_counter() - start,
    }
