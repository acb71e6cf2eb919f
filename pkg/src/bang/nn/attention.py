"""Multi-head attention with per-head QK RMS normalisation.

Self-attention rotates normalised queries/keys with RoPE; cross-attention adds
a sinusoidal code of the anchored query index to the query input and leaves the
keys position-free.
"""

from __future__ import annotations

import math

import numpy as np

from .layers import Layer, uniform_init, rms_normalize, rms_normalize_backward, _flat, _sum_to

ROPE_BASE = 10000.0


def rope_tables(pos, dim, dtype=np.float64, base=ROPE_BASE):
    """cos/sin of shape ``pos.shape + (dim,)`` in rotate-half layout."""
    half = dim // 2
    inv = base ** (-np.arange(half, dtype=np.float64) * 2.0 / dim)
    ang = np.asarray(pos, dtype=np.float64)[..., None] * inv
    cos = np.cos(ang)
    sin = np.sin(ang)
    return (np.concatenate([cos, cos], -1).astype(dtype),
            np.concatenate([sin, sin], -1).astype(dtype))


def _rotate_half(x):
    h = x.shape[-1] // 2
    return np.concatenate([-x[..., h:], x[..., :h]], axis=-1)


def _rotate_half_t(x):
    h = x.shape[-1] // 2
    return np.concatenate([x[..., h:], -x[..., :h]], axis=-1)


def apply_rope(x, cos, sin):
    return x * cos + _rotate_half(x) * sin


def apply_rope_backward(dy, cos, sin):
    return dy * cos + _rotate_half_t(dy * sin)


def sinusoidal(pos, dim, dtype=np.float64):
    """Interleaved ``(sin, cos)`` code; negative positions are used as is."""
    half = dim // 2
    inv = 10000.0 ** (-np.arange(half, dtype=np.float64) * 2.0 / dim)
    ang = np.asarray(pos, dtype=np.float64)[..., None] * inv
    out = np.empty(ang.shape[:-1] + (dim,), dtype=np.float64)
    out[..., 0::2] = np.sin(ang)
    out[..., 1::2] = np.cos(ang)
    return out.astype(dtype)


def masked_softmax(logits, allowed):
    z = np.where(allowed, logits, -np.inf)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_backward(da, a):
    return a * (da - np.sum(da * a, axis=-1, keepdims=True))


class MultiHeadAttention(Layer):
    """Projections, QK-norm, optional RoPE and masked softmax.

    ``forward(xq, xkv, allowed, q_pos=None, k_pos=None)`` with ``allowed``
    broadcastable to ``[B, Lq, Lk]``.  Returns ``[B, Lq, dim]``; the residual
    connection belongs to the caller.
    """

    def __init__(self, store, prefix, dim, heads, head_dim, rng):
        super().__init__(store, prefix)
        self.heads, self.head_dim = heads, head_dim
        inner = heads * head_dim
        for leaf in ("wq", "wk", "wv"):
            store.add(self._name(leaf), uniform_init(rng, (dim, inner), dim))
        store.add(self._name("wo"), uniform_init(rng, (inner, dim), inner))
        store.add(self._name("q_gain"), np.ones(head_dim))
        store.add(self._name("k_gain"), np.ones(head_dim))

    def _split(self, x):
        B, L, _ = x.shape
        return x.reshape(B, L, self.heads, self.head_dim).transpose(0, 2, 1, 3)

    def _merge(self, x):
        B, H, L, c = x.shape
        return x.transpose(0, 2, 1, 3).reshape(B, L, H * c)

    def forward(self, xq, xkv, allowed, q_pos=None, k_pos=None):
        c = self.head_dim
        self.xq, self.xkv = xq, xkv
        q = self._split(xq @ self.p("wq"))
        k = self._split(xkv @ self.p("wk"))
        v = self._split(xkv @ self.p("wv"))
        self.qhat, self.qr = rms_normalize(q)
        self.khat, self.kr = rms_normalize(k)
        qn = self.qhat * self.p("q_gain")
        kn = self.khat * self.p("k_gain")
        self.rope = q_pos is not None
        if self.rope:
            self.cq, self.sq = (t[:, None] for t in rope_tables(q_pos, c, qn.dtype))
            self.ck, self.sk = (t[:, None] for t in rope_tables(k_pos, c, kn.dtype))
            qn = apply_rope(qn, self.cq, self.sq)
            kn = apply_rope(kn, self.ck, self.sk)
        self.qn, self.kn, self.v = qn, kn, v
        scale = 1.0 / math.sqrt(c)
        allowed = np.asarray(allowed)
        self.allowed = allowed[:, None] if allowed.ndim == 3 else allowed
        logits = (qn @ kn.transpose(0, 1, 3, 2)) * scale
        self.a = masked_softmax(logits, self.allowed)
        self.o = self._merge(self.a @ v)
        return self.o @ self.p("wo")

    def backward(self, dy):
        c = self.head_dim
        scale = 1.0 / math.sqrt(c)
        self.g("wo")[...] += _flat(self.o).T @ _flat(dy)
        do = self._split(dy @ self.p("wo").T)
        dv = self.a.transpose(0, 1, 3, 2) @ do
        da = do @ self.v.transpose(0, 1, 3, 2)
        dlog = softmax_backward(da, self.a) * scale
        dqn = dlog @ self.kn
        dkn = dlog.transpose(0, 1, 3, 2) @ self.qn
        if self.rope:
            dqn = apply_rope_backward(dqn, self.cq, self.sq)
            dkn = apply_rope_backward(dkn, self.ck, self.sk)
        self.g("q_gain")[...] += (dqn * self.qhat).reshape(-1, c).sum(axis=0)
        self.g("k_gain")[...] += (dkn * self.khat).reshape(-1, c).sum(axis=0)
        dq = rms_normalize_backward(dqn * self.p("q_gain"), self.qhat, self.qr)
        dk = rms_normalize_backward(dkn * self.p("k_gain"), self.khat, self.kr)
        dq, dk, dv = self._merge(dq), self._merge(dk), self._merge(dv)
        self.g("wq")[...] += _flat(self.xq).T @ _flat(dq)
        xkv = np.broadcast_to(self.xkv, dk.shape[:-1] + (self.xkv.shape[-1],))
        self.g("wk")[...] += _flat(xkv).T @ _flat(dk)
        self.g("wv")[...] += _flat(xkv).T @ _flat(dv)
        dxq = dq @ self.p("wq").T
        dxkv = dk @ self.p("wk").T + dv @ self.p("wv").T
        return dxq, _sum_to(dxkv, self.xkv.shape)


class SelfAttention(MultiHeadAttention):
    def forward(self, x, allowed, pos):
        return super().forward(x, x, allowed, pos, pos)

    def backward(self, dy):
        dxq, dxkv = super().backward(dy)
        return dxq + dxkv


class CrossAttention(MultiHeadAttention):
    """Nucleotide queries (plus a sinusoidal anchored-position code) over protein keys."""

    def forward(self, x, ctx, cross_idx, ctx_allowed=None):
        if ctx is None or ctx.shape[-2] == 0:
            from ..errors import EmptyConditioning
            raise EmptyConditioning("cross-attention needs a non-empty protein representation")
        pe = sinusoidal(cross_idx, x.shape[-1], x.dtype)
        if ctx.ndim == 2:
            ctx = ctx[None]
        B, L = x.shape[0], x.shape[1]
        if ctx_allowed is None:
            allowed = np.ones((1, 1, ctx.shape[-2]), dtype=bool)
        else:
            allowed = np.asarray(ctx_allowed, dtype=bool)[:, None, :]
        allowed = np.broadcast_to(allowed, (B, L, ctx.shape[-2]))
        return super().forward(x + pe, ctx, allowed)
