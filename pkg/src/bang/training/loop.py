"""Train configuration and the training loop for every objective."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, asdict, fields, replace

import numpy as np

from ..errors import DivergedLoss
from ..nn.checkpoint import Checkpoint
from ..nn.model import Model, ModelConfig, ProteinInput
from ..seqcore import SeqRecord
from .data import OBJECTIVES, TaskSpec, make_batch, synth_sample
from .optim import Adam, cross_entropy, lr_at

PRETRAIN_WINDOW = 300


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 80_000
    batch: int = 8
    lr0: float = 1e-4
    warmup_steps: int = 0
    decay_gamma: float = 1.0
    decay_period: int = 1000
    optimizer: str = "adam"
    objective: str = "bang"
    mask_rate: float = 0.5
    anchor_loss_weight: float = 1.0
    anchor_loss_window: int = 4
    seed: int = 0
    log_every: int = 100

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ValueError(f"unknown objective {self.objective!r}; expected one of {OBJECTIVES}")
        if self.optimizer not in ("adam", "amsgrad"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.objective in ("iterative_mask", "iang") and not 0.0 < self.mask_rate < 1.0:
            raise ValueError("mask_rate must lie in (0, 1)")
        if not 0.0 < self.anchor_loss_weight <= 1.0:
            raise ValueError("anchor_loss_weight must lie in (0, 1]")
        if self.steps < 0 or self.batch < 1:
            raise ValueError("steps must be >= 0 and batch >= 1")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        kinds = {f.name: f.type for f in fields(cls)}
        out = {}
        for k, v in d.items():
            if k not in kinds:
                raise ValueError(f"unknown train config key {k!r}")
            if isinstance(v, str):
                v = {"int": int, "float": float, "str": str}[kinds[k]](v.strip())
            out[k] = v
        return cls(**out)

    def with_(self, **kw):
        return replace(self, **kw)


def read_kv(text):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {n}: expected key = value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def write_kv(d):
    return "".join(f"{k} = {v}\n" for k, v in d.items())


# --- data streams ------------------------------------------------------------

class SynthStream:
    """Fresh i.i.d. synthetic samples every step."""

    def __init__(self, spec: TaskSpec, rng):
        self.spec = spec
        self.rng = rng

    def next(self, n):
        pairs = [synth_sample(self.spec, self.rng) for _ in range(n)]
        return [p[0] for p in pairs], [p[1] for p in pairs], None, None


class FastaStream:
    """Records drawn uniformly with a random anchor; long records are cut to a
    window centred on the anchor."""

    def __init__(self, records, rng, window=PRETRAIN_WINDOW):
        self.records = [r for r in records if len(r.residues) > 0]
        if not self.records:
            raise ValueError("no non-empty records to train on")
        self.rng = rng
        self.window = window

    def _cut(self, rec: SeqRecord):
        seq = rec.residues.upper().replace("T", "U")
        after = int(self.rng.integers(-1, len(seq)))
        if len(seq) > self.window:
            lo = min(max(0, after + 1 - self.window // 2), len(seq) - self.window)
            seq = seq[lo: lo + self.window]
            after -= lo
            after = min(max(after, -1), len(seq) - 1)
        return seq, after, rec.kind_flag

    def next(self, n):
        picks = self.rng.integers(0, len(self.records), size=n)
        cut = [self._cut(self.records[i]) for i in picks]
        return [c[0] for c in cut], [c[1] for c in cut], np.array([c[2] for c in cut]), None


class ConditionedStream:
    """One protein per step with a batch of its interacting RNAs.

    `pairs` holds ``(ProteinInput, records, anchor_sets)`` where each anchor set
    lists candidate residue indices (interacting nucleotides); an empty set
    falls back to a uniformly random anchor.
    """

    def __init__(self, pairs, rng, window=PRETRAIN_WINDOW):
        if not pairs:
            raise ValueError("no protein/RNA pairs")
        self.pairs = pairs
        self.rng = rng
        self.window = window

    def next(self, n):
        prot, records, anchor_sets = self.pairs[int(self.rng.integers(0, len(self.pairs)))]
        seqs, anchors, kinds = [], [], []
        for _ in range(n):
            i = int(self.rng.integers(0, len(records)))
            rec = records[i]
            cand = anchor_sets[i] if anchor_sets else None
            seq = rec.residues.upper().replace("T", "U")
            after = int(self.rng.choice(cand)) if cand else int(self.rng.integers(-1, len(seq)))
            if len(seq) > self.window:
                lo = min(max(0, after + 1 - self.window // 2), len(seq) - self.window)
                seq, after = seq[lo: lo + self.window], after - lo
            seqs.append(seq)
            anchors.append(after)
            kinds.append(rec.kind_flag)
        return seqs, anchors, np.array(kinds), prot


def make_stream(data, rng):
    if isinstance(data, TaskSpec):
        return SynthStream(data, rng)
    if isinstance(data, (list, tuple)) and data and isinstance(data[0], SeqRecord):
        return FastaStream(data, rng)
    if isinstance(data, (list, tuple)) and data and isinstance(data[0][0], ProteinInput):
        return ConditionedStream(data, rng)
    if hasattr(data, "next"):
        return data
    raise TypeError(f"cannot train on {type(data).__name__}")


# --- loop ----------------------------------------------------------------------

def train_step(model: Model, opt: Adam, tcfg: TrainConfig, stream, rng, step):
    seqs, anchors, kinds, prot = stream.next(tcfg.batch)
    batch = make_batch(tcfg.objective, seqs, anchors, rng, tcfg.mask_rate,
                       tcfg.anchor_loss_weight, tcfg.anchor_loss_window)
    if kinds is not None:
        batch.inp.kind = kinds
    model.zero_grad()
    logits = model.forward(batch.inp, prot)
    loss, dlogits = cross_entropy(logits, batch.targets, batch.weights)
    if not math.isfinite(loss):
        raise DivergedLoss(f"loss became {loss} at step {step}")
    model.backward(dlogits.astype(model.dtype, copy=False))
    lr = lr_at(step, tcfg.lr0, tcfg.warmup_steps, tcfg.decay_gamma, tcfg.decay_period)
    opt.step(model.params, model.grads, lr)
    return loss, lr


def train(model_cfg: ModelConfig, train_cfg: TrainConfig, data, log=None, model=None,
          progress=None) -> Checkpoint:
    """Train from scratch (or continue `model`) and return the final checkpoint.

    `data` is a TaskSpec (synthetic stream), a list of SeqRecords (pretraining
    on sequences alone) or a list of conditioned protein/RNA pairs.  `log` is an
    optional writable text handle receiving ``step\\tlr\\tloss`` rows, where loss
    is averaged over the steps since the previous row.
    """
    seed = train_cfg.seed
    if model is None:
        model = Model(model_cfg, seed=seed)
    data_rng = np.random.default_rng([seed, 1])
    mask_rng = np.random.default_rng([seed, 2])
    stream = make_stream(data, data_rng)
    opt = Adam(model.params, amsgrad=train_cfg.optimizer == "amsgrad")
    if log is not None:
        log.write("step\tlr\tloss\n")
    acc, n_acc, t0 = 0.0, 0, time.time()
    history = []
    for step in range(1, train_cfg.steps + 1):
        loss, lr = train_step(model, opt, train_cfg, stream, mask_rng, step)
        acc += loss
        n_acc += 1
        if step % train_cfg.log_every == 0 or step == train_cfg.steps:
            mean = acc / n_acc
            history.append((step, lr, mean))
            if log is not None:
                log.write(f"{step}\t{lr:.6g}\t{mean:.6f}\n")
                log.flush()
            if progress is not None:
                progress(step, lr, mean, time.time() - t0)
            acc, n_acc = 0.0, 0
    meta = {"step": train_cfg.steps, "seed": seed, "objective": train_cfg.objective}
    meta.update({f"train.{k}": v for k, v in train_cfg.to_dict().items()})
    if isinstance(data, TaskSpec):
        meta["task"] = data.key()
    ckpt = Checkpoint.from_model(model, **meta)
    ckpt.history = history
    return ckpt
