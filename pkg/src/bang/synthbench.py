"""Synthetic motif benchmark: train each method per task, sample, count motifs."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, asdict

import numpy as np

from .nn import checkpoint as ckpt_io
from .nn.model import TOY, ModelConfig
from .training.data import TaskSpec
from .training.loop import TrainConfig, train

# method name -> training objective
METHOD_OBJECTIVE = {
    "bang": "bang",
    "ar": "autoregressive",
    "iter-logit": "iterative_mask",
    "iter-entropy": "iterative_mask",
    "iang-logit": "iang",
    "iang-entropy": "iang",
    "random": None,
}
METHODS = tuple(METHOD_OBJECTIVE)

TASK_PRESETS = {
    "SingleBind": TaskSpec("SingleBind"),
    "DoubleBind": TaskSpec("DoubleBind"),
    "DualBindMix": TaskSpec("DualBindMix", separation=3),
    "DualBindMixRandom": TaskSpec("DualBindMixRandom", separation=None),
    "SingleBind-L100": TaskSpec("SingleBind", seq_len=100),
    "SingleBind-L200": TaskSpec("SingleBind", seq_len=200),
    "SingleBind-U40-50": TaskSpec("SingleBind", seq_len=(40, 50)),
}


def motif_stats(seqs, motifs):
    """Fractions of sequences holding only the first motif, only the second, both.

    ``any_correct`` counts a sequence once if it holds at least one motif.
    """
    if not motifs:
        raise ValueError("need at least one motif")
    m1 = motifs[0]
    m2 = motifs[1] if len(motifs) > 1 else None
    n = len(seqs)
    first = second = both = 0
    for s in seqs:
        h1 = m1 in s
        h2 = m2 is not None and m2 in s
        if h1 and h2:
            both += 1
        elif h1:
            first += 1
        elif h2:
            second += 1
    if n == 0:
        return {"first": 0.0, "second": 0.0, "both": 0.0, "none": 0.0, "any_correct": 0.0}
    none = n - first - second - both
    return {"first": first / n, "second": second / n, "both": both / n, "none": none / n,
            "any_correct": (first + second + both) / n}


def cell_key(task: TaskSpec, model_cfg: ModelConfig, train_cfg: TrainConfig):
    blob = json.dumps({"task": task.key(), "model": model_cfg.to_dict(),
                       "train": train_cfg.to_dict()}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def default_cache_dir():
    return os.environ.get("BANG_CACHE", os.path.join(os.path.expanduser("~"), ".cache", "bang"))


def trained_checkpoint(task: TaskSpec, model_cfg: ModelConfig, train_cfg: TrainConfig,
                       cache_dir=None, progress=None):
    """Load the cached checkpoint for this cell or train and cache it."""
    cache_dir = cache_dir or default_cache_dir()
    os.makedirs(cache_dir, exist_ok=True)
    key = cell_key(task, model_cfg, train_cfg)
    path = os.path.join(cache_dir, f"{key}.ckpt")
    if os.path.exists(path):
        return ckpt_io.load(path), path
    with open(os.path.join(cache_dir, f"{key}.loss.tsv"), "w") as log:
        ck = train(model_cfg, train_cfg, task, log=log, progress=progress)
    tmp = path + ".tmp"
    ckpt_io.save(ck, tmp)
    os.replace(tmp, path)
    return ck, path


TSV_COLUMNS = ("task", "method", "seed", "n", "first", "second", "both", "none",
               "any_correct", "exclusive_correct", "mean_length", "checkpoint")


@dataclass(frozen=True)
class BenchRow:
    task: str
    method: str
    seed: int
    n: int
    first: float
    second: float
    both: float
    none: float
    any_correct: float
    exclusive_correct: float      # first + second, sequences with both motifs not counted
    mean_length: float
    checkpoint: str

    def as_dict(self):
        return asdict(self)


def format_row(row: BenchRow):
    vals = []
    for c in TSV_COLUMNS:
        v = getattr(row, c)
        vals.append(f"{v:.4f}" if isinstance(v, float) else str(v))
    return "\t".join(vals)


def _task_motifs(task: TaskSpec):
    return task.motifs[:1] if task.task == "SingleBind" else task.motifs[:2]


def _gen_rng(seed, task_name, method):
    tag = int.from_bytes(hashlib.sha256(f"{task_name}|{method}".encode()).digest()[:4], "little")
    return np.random.default_rng([seed, tag])


def run_benchmark(task, method, model_cfg=TOY, train_cfg=None, gen_cfg=None, n=1000,
                  cache_dir=None, task_name=None, progress=None) -> BenchRow:
    """Train (or load) the method's checkpoint, sample `n` sequences, score them."""
    from .sampling import GenConfig, generate
    if method not in METHOD_OBJECTIVE:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    if isinstance(task, str):
        task_name, task = task, TASK_PRESETS[task]
    task_name = task_name or task.key()
    train_cfg = train_cfg or TrainConfig()
    # generation may run as long as the longest training sequence
    gen_cfg = gen_cfg or GenConfig(max_len=max(50, task.max_len), fixed_len=max(50, task.max_len))
    rng = _gen_rng(train_cfg.seed, task_name, method)
    objective = METHOD_OBJECTIVE[method]
    model, ck_name = None, "-"
    if objective is not None:
        tcfg = train_cfg.with_(objective=objective)
        ck, path = trained_checkpoint(task, model_cfg, tcfg, cache_dir, progress)
        model, ck_name = ck.to_model(), os.path.basename(path)
    seqs = generate(method, model, gen_cfg, n, rng=rng)
    st = motif_stats(seqs, _task_motifs(task))
    return BenchRow(task_name, method, train_cfg.seed, n, st["first"], st["second"], st["both"],
                    st["none"], st["any_correct"], st["first"] + st["second"],
                    float(np.mean([len(s) for s in seqs])) if seqs else 0.0, ck_name)


def _cell(args):
    return run_benchmark(*args)


def run_grid(tasks, methods, seeds, model_cfg=TOY, train_cfg=None, gen_cfg=None, n=1000,
             cache_dir=None, jobs=1):
    """Every (task, method, seed) cell; with ``jobs > 1`` cells run in worker processes.

    Cells sharing a checkpoint are trained once: the first wave trains one cell
    per distinct checkpoint, the remaining cells then load it from the cache.
    """
    train_cfg = train_cfg or TrainConfig()
    cache_dir = cache_dir or default_cache_dir()
    cells = [(TASK_PRESETS[t], m, model_cfg, train_cfg.with_(seed=s), gen_cfg, n, cache_dir, t)
             for t in tasks for s in seeds for m in methods]
    if jobs <= 1:
        return [_cell(c) for c in cells]
    from concurrent.futures import ProcessPoolExecutor
    first, rest, seen = [], [], set()
    for i, c in enumerate(cells):
        obj = METHOD_OBJECTIVE[c[1]]
        key = None if obj is None else cell_key(c[0], model_cfg, c[3].with_(objective=obj))
        (rest if key in seen else first).append(i)
        if key is not None:
            seen.add(key)
    out = [None] * len(cells)
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        for wave in (first, rest):
            for i, row in zip(wave, pool.map(_cell, [cells[i] for i in wave])):
                out[i] = row
    return out
