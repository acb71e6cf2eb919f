"""Parameter store and the dense building blocks (linear, RMSNorm, GELU MLP, embeddings).

Every layer keeps the activations of its latest ``forward`` call and turns an
upstream gradient into input gradients in ``backward``, accumulating parameter
gradients into the shared store.  One forward must be followed by at most one
backward; layers are not re-entrant.
"""

from __future__ import annotations

import math

import numpy as np

RMS_EPS = 1e-6
_GELU_C = math.sqrt(2.0 / math.pi)


class ParamStore:
    """Named parameter arrays plus gradient buffers of the same shape."""

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self.params: dict = {}
        self.grads: dict = {}

    def add(self, name, value):
        if name in self.params:
            raise KeyError(f"duplicate parameter {name}")
        value = np.ascontiguousarray(value, dtype=self.dtype)
        self.params[name] = value
        self.grads[name] = np.zeros_like(value)
        return value

    def __getitem__(self, name):
        return self.params[name]

    def __contains__(self, name):
        return name in self.params

    def names(self):
        return list(self.params)

    def zero_grad(self):
        for g in self.grads.values():
            g.fill(0.0)

    def astype(self, dtype):
        """Cast every parameter in place (keeps dict identity for the layers)."""
        self.dtype = np.dtype(dtype)
        for k in list(self.params):
            self.params[k] = self.params[k].astype(dtype)
            self.grads[k] = np.zeros_like(self.params[k])

    def count(self):
        return int(sum(p.size for p in self.params.values()))


def uniform_init(rng, shape, fan_in):
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _flat(x):
    return x.reshape(-1, x.shape[-1])


def _sum_to(g, shape):
    """Reduce a broadcast gradient back to `shape`."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


class Layer:
    def __init__(self, store: ParamStore, prefix: str):
        self.store = store
        self.prefix = prefix

    def _name(self, leaf):
        return f"{self.prefix}.{leaf}"

    def p(self, leaf):
        return self.store.params[self._name(leaf)]

    def g(self, leaf):
        return self.store.grads[self._name(leaf)]


class Linear(Layer):
    def __init__(self, store, prefix, d_in, d_out, rng, bias=True):
        super().__init__(store, prefix)
        self.bias = bias
        store.add(self._name("w"), uniform_init(rng, (d_in, d_out), d_in))
        if bias:
            store.add(self._name("b"), uniform_init(rng, (d_out,), d_in))

    def forward(self, x):
        self.x = x
        y = x @ self.p("w")
        if self.bias:
            y = y + self.p("b")
        return y

    def backward(self, dy):
        self.g("w")[...] += _flat(self.x).T @ _flat(dy)
        if self.bias:
            self.g("b")[...] += _flat(dy).sum(axis=0)
        return dy @ self.p("w").T


def rms_normalize(x, eps=RMS_EPS):
    r = np.sqrt(np.mean(x * x, axis=-1, keepdims=True) + eps)
    return x / r, r


def rms_normalize_backward(dy, xhat, r):
    """Gradient of ``x / rms(x)`` given the normalised output and the rms."""
    d = xhat.shape[-1]
    return (dy - xhat * np.sum(dy * xhat, axis=-1, keepdims=True) / d) / r


class RMSNorm(Layer):
    def __init__(self, store, prefix, dim):
        super().__init__(store, prefix)
        store.add(self._name("g"), np.ones(dim))

    def forward(self, x):
        self.xhat, self.r = rms_normalize(x)
        return self.xhat * self.p("g")

    def backward(self, dy):
        self.g("g")[...] += _flat(dy * self.xhat).sum(axis=0)
        return rms_normalize_backward(dy * self.p("g"), self.xhat, self.r)


def gelu(x):
    t = np.tanh(_GELU_C * (x + 0.044715 * (x * x * x)))
    return 0.5 * x * (1.0 + t), t


def gelu_backward(dy, x, t):
    du = _GELU_C * (1.0 + 3 * 0.044715 * x * x)
    return dy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)


class FeedForward(Layer):
    """``Linear -> GELU -> Linear`` with hidden width ``scale * dim``."""

    def __init__(self, store, prefix, dim, scale, rng):
        super().__init__(store, prefix)
        self.fc1 = Linear(store, f"{prefix}.fc1", dim, scale * dim, rng)
        self.fc2 = Linear(store, f"{prefix}.fc2", scale * dim, dim, rng)

    def forward(self, x):
        self.h = self.fc1.forward(x)
        a, self.t = gelu(self.h)
        return self.fc2.forward(a)

    def backward(self, dy):
        da = self.fc2.backward(dy)
        return self.fc1.backward(gelu_backward(da, self.h, self.t))


class Embedding(Layer):
    """Token table plus an optional additive per-sequence type table.

    The pad row starts at zero and never receives gradient.
    """

    def __init__(self, store, prefix, vocab_size, dim, rng, pad_id=0, n_types=0):
        super().__init__(store, prefix)
        tok = uniform_init(rng, (vocab_size, dim), dim)
        tok[pad_id] = 0.0
        store.add(self._name("tok"), tok)
        self.pad_id = pad_id
        self.vocab_size = vocab_size
        self.n_types = n_types
        if n_types:
            store.add(self._name("type"), uniform_init(rng, (n_types, dim), dim))

    def forward(self, ids, kind=None):
        ids = np.asarray(ids)
        if ids.size and (ids.min() < 0 or ids.max() >= self.vocab_size):
            from ..errors import InvalidTokenId
            raise InvalidTokenId(f"token id outside [0, {self.vocab_size})")
        self.ids = ids
        out = self.p("tok")[ids]
        self.kind = None
        if self.n_types and kind is not None:
            kind = np.broadcast_to(np.asarray(kind), ids.shape[:-1])
            self.kind = kind
            out = out + self.p("type")[kind][..., None, :]
        return out

    def backward(self, dy):
        flat_ids = self.ids.reshape(-1)
        onehot = np.zeros((flat_ids.size, self.vocab_size), dtype=dy.dtype)
        onehot[np.arange(flat_ids.size), flat_ids] = 1.0
        onehot[:, self.pad_id] = 0.0
        self.g("tok")[...] += onehot.T @ _flat(dy)
        if self.kind is not None:
            per_seq = dy.sum(axis=-2).reshape(-1, dy.shape[-1])
            np.add.at(self.g("type"), self.kind.reshape(-1), per_seq)
        return None
