"""Cross-entropy objective, Adam/AMSGrad and the warmup + step-decay schedule."""

from __future__ import annotations

import math

import numpy as np

from ..errors import NonFiniteGradient, ShapeMismatch
from ..maskgen import NONE


def log_softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def cross_entropy(logits, targets, weights=None):
    """Weighted mean of ``-log p(target)`` over positions with a target.

    Returns ``(loss, dlogits)``.  The weights enter both numerator and
    denominator, so uniform weights reduce to the plain mean.
    """
    logits = np.asarray(logits)
    targets = np.asarray(targets)
    if logits.shape[:-1] != targets.shape:
        raise ShapeMismatch(f"logits {logits.shape} vs targets {targets.shape}")
    has = targets != NONE
    w = has.astype(logits.dtype) if weights is None else np.where(has, weights, 0.0).astype(logits.dtype)
    total = w.sum()
    lp = log_softmax(logits)
    safe = np.where(has, targets, 0)
    nll = -np.take_along_axis(lp, safe[..., None], axis=-1)[..., 0]
    if total <= 0:
        return 0.0, np.zeros_like(logits)
    loss = float(np.sum(w * nll) / total)
    grad = np.exp(lp)
    flat = grad.reshape(-1, grad.shape[-1])
    idx = np.flatnonzero(has.reshape(-1))
    flat[idx, safe.reshape(-1)[idx]] -= 1.0
    grad *= (w / total)[..., None]
    return loss, grad


def lr_at(step, lr0, warmup_steps=0, decay_gamma=1.0, decay_period=1000):
    """Linear warmup to `lr0`, then ``lr0 * gamma ** floor((step - warmup) / period)``."""
    if step < 0:
        raise ValueError("step must be >= 0")
    if warmup_steps > 0 and step <= warmup_steps:
        return lr0 * step / warmup_steps
    return lr0 * decay_gamma ** math.floor((step - warmup_steps) / decay_period)


class Adam:
    """Adam with optional AMSGrad running max of the second moment."""

    def __init__(self, params: dict, betas=(0.9, 0.999), eps=1e-8, amsgrad=False):
        self.b1, self.b2 = betas
        self.eps = eps
        self.amsgrad = amsgrad
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.vmax = {k: np.zeros_like(v) for k, v in params.items()} if amsgrad else None

    def step(self, params: dict, grads: dict, lr: float):
        for k, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradient(f"non-finite gradient in {k}")
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, p in params.items():
            g = grads[k]
            m, v = self.m[k], self.v[k]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            if self.amsgrad:
                np.maximum(self.vmax[k], v, out=self.vmax[k])
                v = self.vmax[k]
            p -= (lr / c1) * m / (np.sqrt(v / c2) + self.eps)

    def state(self):
        out = {"t": self.t}
        for name, d in (("m", self.m), ("v", self.v), ("vmax", self.vmax)):
            if d is not None:
                out.update({f"{name}.{k}": a for k, a in d.items()})
        return out
