"""Analytic backward passes against central finite differences (float64)."""

import numpy as np
import pytest

from bang import maskgen as mg
from bang.nn.attention import CrossAttention, SelfAttention
from bang.nn.geometry import GeometricAttention, frames_from_backbone
from bang.nn.layers import Embedding, FeedForward, Linear, ParamStore, RMSNorm
from bang.nn.model import Model, ModelConfig, NucInput, NucleotideBlock, ProteinBlock, ProteinInput

from tests.conftest import fd_check

TOL = 1e-4


def _jiggle(store, rng, scale=0.1):
    for v in store.params.values():
        v += scale * rng.standard_normal(v.shape)


def check_layer(fwd, bwd, store, x, rng):
    """FD-check parameters and the input of a layer with loss ``sum(W * out)``."""
    W = rng.standard_normal(fwd(x).shape)
    arrays = dict(store.params)
    arrays["__x"] = x

    def loss():
        return float(np.sum(fwd(x) * W))

    store.zero_grad()
    fwd(x)
    dx = bwd(W)
    grads = dict(store.grads)
    grads["__x"] = dx
    worst, where = fd_check(loss, arrays, grads, rng)
    assert worst < TOL, where


def _bang_slots(B=2):
    role = np.full((B, 7), mg.CONTENT, np.int8)
    role[:, 3], role[:, 4] = mg.ANCL_SLOT, mg.ANCR_SLOT
    off = np.array([[-3, -2, -1, 0, 0, 0, 1]] * B)
    role[1, 0] = mg.PAD_SLOT
    return role, off


def test_linear(rng):
    s = ParamStore(np.float64)
    lin = Linear(s, "l", 5, 3, rng)
    check_layer(lin.forward, lin.backward, s, rng.standard_normal((2, 4, 5)), rng)


def test_rmsnorm(rng):
    s = ParamStore(np.float64)
    n = RMSNorm(s, "n", 6)
    _jiggle(s, rng)
    check_layer(n.forward, n.backward, s, rng.standard_normal((2, 3, 6)), rng)


def test_feedforward(rng):
    s = ParamStore(np.float64)
    ff = FeedForward(s, "f", 4, 2, rng)
    check_layer(ff.forward, ff.backward, s, rng.standard_normal((2, 3, 4)), rng)


def test_embedding(rng):
    s = ParamStore(np.float64)
    emb = Embedding(s, "e", 11, 4, rng, n_types=2)
    ids = rng.integers(0, 11, size=(2, 5))
    ids[0, 0] = 0
    kind = np.array([0, 1])
    W = rng.standard_normal((2, 5, 4))
    s.zero_grad()
    emb.forward(ids, kind)
    emb.backward(W)
    worst, where = fd_check(lambda: float(np.sum(emb.forward(ids, kind) * W)),
                            {"e.type": s["e.type"]}, s.grads, rng)
    assert worst < TOL
    tok_g = s.grads["e.tok"]
    want = np.zeros_like(tok_g)
    for b in range(2):
        for i in range(5):
            if ids[b, i] != 0:
                want[ids[b, i]] += W[b, i]
    assert np.allclose(tok_g, want)
    assert not tok_g[0].any()


def test_self_attention_bang_masks(rng):
    s = ParamStore(np.float64)
    att = SelfAttention(s, "a", 8, 2, 4, rng)
    _jiggle(s, rng)
    role, off = _bang_slots()
    allowed = mg.bang_rows(role, off)
    pos = mg.rope_from_offsets(role, off)
    check_layer(lambda x: att.forward(x, allowed, pos), att.backward, s, rng.standard_normal((2, 7, 8)), rng)


def test_cross_attention(rng):
    s = ParamStore(np.float64)
    att = CrossAttention(s, "c", 8, 2, 4, rng)
    _jiggle(s, rng)
    ctx = rng.standard_normal((1, 5, 8))
    cross = np.array([[-2, -1, 0, 1, 2, 3]] * 2)
    x = rng.standard_normal((2, 6, 8))
    W = rng.standard_normal((2, 6, 8))

    def loss():
        return float(np.sum(att.forward(x, ctx, cross) * W))

    s.zero_grad()
    att.forward(x, ctx, cross)
    dx, dctx = att.backward(W)
    grads = dict(s.grads, x=dx, ctx=dctx)
    worst, where = fd_check(loss, dict(s.params, x=x, ctx=ctx), grads, rng)
    assert worst < TOL, where


def _frames(rng, r):
    N, CA, C = (rng.standard_normal((r, 3)) * 2 for _ in range(3))
    f = frames_from_backbone(N, CA, C)
    return f.R, f.t


def test_geometric_attention(rng):
    s = ParamStore(np.float64)
    g = GeometricAttention(s, "g", 6, 2, 2, 3, rng)
    _jiggle(s, rng)
    R, t = _frames(rng, 4)
    check_layer(lambda x: g.forward(x, R, t), g.backward, s, rng.standard_normal((4, 6)), rng)


def _small_cfg(**kw):
    base = dict(c_s=8, c_h=4, heads=2, n_protein_blocks=1, n_nucleotide_blocks=2, use_cross=True,
                use_geometric=True, n_query_points=2, n_value_points=3)
    base.update(kw)
    return ModelConfig(**base)


def test_protein_block(rng):
    cfg = _small_cfg()
    s = ParamStore(np.float64)
    blk = ProteinBlock(s, "p", cfg, rng)
    _jiggle(s, rng)
    R, t = _frames(rng, 5)
    allowed = np.ones((1, 5, 5), bool)
    pos = np.arange(5)[None]
    check_layer(lambda x: blk.forward(x, allowed, pos, R[None], t[None]), blk.backward, s,
                rng.standard_normal((1, 5, 8)), rng)


def test_nucleotide_block(rng):
    cfg = _small_cfg()
    s = ParamStore(np.float64)
    blk = NucleotideBlock(s, "n", cfg, rng)
    _jiggle(s, rng)
    role, off = _bang_slots()
    allowed = mg.bang_closed_rows(role, off)
    pos = mg.rope_from_offsets(role, off)
    cross = mg.cross_from_offsets(role, off)
    prot = rng.standard_normal((1, 4, 8))
    x = rng.standard_normal((2, 7, 8))
    W = rng.standard_normal((2, 7, 8))

    def loss():
        return float(np.sum(blk.forward(x, allowed, pos, prot, cross) * W))

    s.zero_grad()
    blk.forward(x, allowed, pos, prot, cross)
    dx, dprot = blk.backward(W)
    worst, where = fd_check(loss, dict(s.params, x=x, prot=prot), dict(s.grads, x=dx, prot=dprot), rng)
    assert worst < TOL, where


@pytest.mark.parametrize("conditioned", [False, True])
def test_full_model(rng, conditioned):
    cfg = _small_cfg() if conditioned else ModelConfig(c_s=8, c_h=4, heads=2, n_nucleotide_blocks=2)
    m = Model(cfg, seed=1, dtype=np.float64)
    _jiggle(m.store, rng)
    role, off = _bang_slots()
    toks = rng.integers(7, 11, size=role.shape)
    toks[role == mg.PAD_SLOT] = 0
    batch = NucInput(toks, mg.rope_from_offsets(role, off), mg.bang_closed_rows(role, off),
                     mg.bang_rows(role, off), mg.cross_from_offsets(role, off), np.array([0, 1]))
    prot = None
    if conditioned:
        R, t = _frames(rng, 5)
        prot = ProteinInput(rng.integers(1, 21, size=5), R, t)
    W = rng.standard_normal((2, 7, cfg.nuc_vocab))

    def loss():
        return float(np.sum(m.forward(batch, prot) * W))

    m.zero_grad()
    loss()
    m.backward(W)
    worst, where = fd_check(loss, m.params, m.grads, rng, per_array=2)
    assert worst < TOL, where


def test_two_token_loss_end_to_end(rng):
    """Cross-entropy of a 2-token sequence, differentiated through the whole model."""
    from bang.training.data import bang_batch, encode
    from bang.training.optim import cross_entropy
    m = Model(ModelConfig(c_s=8, c_h=4, heads=2), seed=2, dtype=np.float64)
    b = bang_batch([encode("GA")], [0])

    def loss():
        return cross_entropy(m.forward(b.inp), b.targets, b.weights)[0]

    m.zero_grad()
    _, d = cross_entropy(m.forward(b.inp), b.targets, b.weights)
    m.backward(d)
    worst, where = fd_check(loss, m.params, m.grads, rng, per_array=3)
    assert worst < TOL, where
