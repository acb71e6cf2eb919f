"""Top-k sampling and the generation strategies (BAnG, left-to-right, demasking).

Every generator runs a batch of sequences in lockstep over a fixed-width
buffer and recomputes the whole forward pass each step; there is no key/value
cache.  Models are duck-typed: anything with ``forward(NucInput, protein)``
returning ``[B, L, V]`` logits works, which the tests use for oracle models.

BAnG order is ``x_0, x_1, x_-1, x_2, x_-2, ...``: each right token is read off
the most recent right slot (``ancr`` for ``x_0``), each left token off the most
recent left slot (``ancl`` for ``x_-1``).  A direction closes when it emits
eos; the other one then runs alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .maskgen import CONTENT, PAD_SLOT, ANCL_SLOT, ANCR_SLOT, causal_rows, full_rows
from .seqcore import NUCLEOTIDES, NUCLEOTIDE_VOCAB
from .training.data import bang_input, linear_input, encode
from .training.optim import log_softmax

VOCAB = NUCLEOTIDE_VOCAB
RESIDUE_IDS = np.array(VOCAB.residue_ids())
OPEN_LEGAL = np.append(RESIDUE_IDS, VOCAB.eos)    # autoregressive / BAnG steps
RIGHT, LEFT = 1, -1


@dataclass(frozen=True)
class GenConfig:
    top_k: int = 4
    max_len: int = 50
    seed: int = 0
    fixed_len: int | None = 50
    chunk: int = 256

    def __post_init__(self):
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.max_len < 1:
            raise ValueError("max_len must be >= 1")
        if self.fixed_len is not None and self.fixed_len < 1:
            raise ValueError("fixed_len must be >= 1")


def top_k_sample(logits, k, rng):
    """Sample from the softmax of the `k` largest logits.

    Works on a vector (returns an int) or a ``[N, V]`` batch (returns ``[N]``).
    Equal logits are ranked by token id, so a tie at the cut keeps the lower id.
    """
    logits = np.asarray(logits, dtype=np.float64)
    single = logits.ndim == 1
    z = np.atleast_2d(logits)
    k = min(int(k), z.shape[-1])
    order = np.argsort(-z, axis=-1, kind="stable")[:, :k]
    top = np.take_along_axis(z, order, axis=-1)
    top = top - top[:, :1]
    p = np.exp(top)
    p /= p.sum(-1, keepdims=True)
    u = rng.random(z.shape[0])
    pick = np.minimum((np.cumsum(p, -1) < u[:, None]).sum(-1), k - 1)
    out = order[np.arange(z.shape[0]), pick]
    return int(out[0]) if single else out


def restrict(logits, legal):
    """Logits with every id outside `legal` set to -inf."""
    out = np.full(logits.shape, -np.inf)
    out[..., legal] = logits[..., legal]
    return out


def _forward_rows(model, inp_builder, rows, n, chunk, protein):
    """Logits at one row per sequence, computed in chunks.

    `inp_builder(idx)` returns the input and the buffer column its first slot
    came from, so callers can drop columns that are padding for the whole chunk.
    """
    out = []
    for lo in range(0, n, chunk):
        idx = np.arange(lo, min(n, lo + chunk))
        inp, col0 = inp_builder(idx)
        logits = model.forward(inp, protein)
        out.append(np.asarray(logits, dtype=np.float64)[np.arange(len(idx)), rows[idx] - col0])
    return np.concatenate(out, axis=0)


class _Sampler:
    """Draws one token per row from restricted top-k logits."""

    def __init__(self, k, rng):
        self.k, self.rng = k, rng

    def __call__(self, logits, legal, seq_idx, step):
        return top_k_sample(restrict(logits, legal), self.k, self.rng)


class _Forcer:
    """Replays fixed token streams, one list of tokens per sequence."""

    def __init__(self, streams):
        self.streams = streams

    def __call__(self, logits, legal, seq_idx, step):
        return np.array([self.streams[i][step[j]] for j, i in enumerate(seq_idx)])


# --- BAnG -------------------------------------------------------------------

class BangBuffer:
    """Fixed-width planned layout: ``x_-j`` at ``c - j``, ``ancl`` at ``c``,
    ``ancr`` at ``c + 1`` and ``x_j`` at ``c + 2 + j``."""

    def __init__(self, n, max_len):
        self.n = n
        self.c = max_len + 1
        W = 2 * max_len + 4
        self.tokens = np.full((n, W), VOCAB.pad, dtype=np.int64)
        self.role = np.full((n, W), PAD_SLOT, dtype=np.int8)
        pos = np.arange(W)
        self.offset = np.broadcast_to(np.where(pos < self.c, pos - self.c, pos - self.c - 2), (n, W)).copy()
        self.offset[:, self.c: self.c + 2] = 0
        self.tokens[:, self.c] = VOCAB.ancl
        self.tokens[:, self.c + 1] = VOCAB.ancr
        self.role[:, self.c] = ANCL_SLOT
        self.role[:, self.c + 1] = ANCR_SLOT
        self.n_right = np.zeros(n, dtype=np.int64)   # slots filled on each side (eos included)
        self.n_left = np.zeros(n, dtype=np.int64)

    def inputs(self, idx):
        # pad slots neither see nor are seen, so only the filled span is needed
        lo = self.c - int(self.n_left[idx].max(initial=0))
        hi = self.c + 2 + int(self.n_right[idx].max(initial=0))
        cols = slice(lo, hi)
        return bang_input(self.tokens[idx, cols], self.role[idx, cols], self.offset[idx, cols]), lo

    def predictor_row(self, direction):
        if direction == RIGHT:
            return self.c + 1 + self.n_right
        return self.c - self.n_left

    def put(self, seqs, direction, toks):
        if direction == RIGHT:
            slot = self.c + 2 + self.n_right[seqs]
            self.n_right[seqs] += 1
        else:
            slot = self.c - 1 - self.n_left[seqs]
            self.n_left[seqs] += 1
        self.tokens[seqs, slot] = toks
        self.role[seqs, slot] = CONTENT

    def strings(self):
        out = []
        for b in range(self.n):
            left = self.tokens[b, self.c - self.n_left[b]: self.c]
            right = self.tokens[b, self.c + 2: self.c + 2 + self.n_right[b]]
            ids = [t for t in np.concatenate([left, right]) if t != VOCAB.eos]
            out.append("".join(VOCAB.token(int(t)) for t in ids))
        return out


def _active_view(buf_inputs, act):
    return lambda idx: buf_inputs(act[idx])


def generate_bang_batch(model, cfg: GenConfig, rng, n, protein=None, traces=None):
    """`n` BAnG samples; `traces`, if a list of n lists, receives
    ``(direction, token, log_probs)`` per step."""
    buf = _bang_run(model, n, cfg.max_len, _Sampler(cfg.top_k, rng), cfg.chunk, protein, traces)
    return buf.strings()


def generate_bang(model, cfg: GenConfig, rng, protein=None):
    return generate_bang_batch(model, cfg, rng, 1, protein)[0]


def _bang_run(model, n, max_len, choose, chunk, protein, traces):
    # forward passes only cover rows that are still generating
    buf = BangBuffer(n, max_len)
    open_r = np.ones(n, dtype=bool)
    open_l = np.ones(n, dtype=bool)
    content = np.zeros(n, dtype=np.int64)
    produced = np.zeros(n, dtype=np.int64)
    right_turns = np.zeros(n, dtype=np.int64)
    last = np.full(n, LEFT)
    while True:
        active = (open_r | open_l) & (content < max_len)
        act = np.flatnonzero(active)
        if not len(act):
            break
        want_right = np.where(right_turns < 2, True, last == LEFT)
        direction = np.where(open_r & (want_right | ~open_l), RIGHT, LEFT)
        rows = np.where(direction == RIGHT, buf.predictor_row(RIGHT), buf.predictor_row(LEFT))
        logits = _forward_rows(model, _active_view(buf.inputs, act), rows[act], len(act), chunk, protein)
        toks = np.asarray(choose(logits, OPEN_LEGAL, act, produced[act]))
        dirs = direction[act]
        for d in (RIGHT, LEFT):
            sel = dirs == d
            if not sel.any():
                continue
            seqs = act[sel]
            buf.put(seqs, d, toks[sel])
            eos = toks[sel] == VOCAB.eos
            if d == RIGHT:
                open_r[seqs[eos]] = False
                right_turns[seqs] += 1
            else:
                open_l[seqs[eos]] = False
            content[seqs[~eos]] += 1
            last[seqs] = d
        if traces is not None:
            lp = log_softmax(logits)
            for j, s in enumerate(act):
                traces[s].append((int(dirs[j]), int(toks[j]), lp[j]))
        produced[act] += 1
    return buf


def bang_order(seq: str, anchor_after: int):
    """Token stream (with eos on both ends) in BAnG generation order, plus the
    matching direction of each step."""
    ids = list(encode(seq))
    left = ids[: anchor_after + 1][::-1] + [VOCAB.eos]   # x_-1, x_-2, ..., eos
    right = ids[anchor_after + 1:] + [VOCAB.eos]         # x_0, x_1, ..., eos
    toks, dirs = [], []
    i = j = 0
    turns = 0
    last = LEFT
    while i < len(right) or j < len(left):
        go_right = i < len(right) and (j >= len(left) or turns < 2 or last == LEFT)
        if go_right:
            toks.append(right[i]); dirs.append(RIGHT); i += 1; turns += 1; last = RIGHT
        else:
            toks.append(left[j]); dirs.append(LEFT); j += 1; last = LEFT
    return toks, dirs


def bang_forced_logprob(model, seq: str, anchor_after: int, protein=None):
    """Sum of per-step log-probabilities when generation is forced through `seq`.

    Uses full-vocabulary log-softmax, the quantity the training loss scores.
    """
    toks, _ = bang_order(seq, anchor_after)
    traces = [[]]
    _bang_run(model, 1, len(seq) + 1, _Forcer([toks]), 256, protein, traces)
    return float(sum(lp[t] for _, t, lp in traces[0])), traces[0]


# --- left to right -------------------------------------------------------------

def _ar_run(model, n, max_len, choose, chunk, protein, traces=None):
    W = max_len + 2
    tokens = np.full((n, W), VOCAB.pad, dtype=np.int64)
    tokens[:, 0] = VOCAB.sos
    length = np.ones(n, dtype=np.int64)            # filled slots
    done = np.zeros(n, dtype=bool)

    def build(idx):
        t = tokens[idx, : int(length[idx].max())]
        return linear_input(t, causal_rows(t != VOCAB.pad)), 0

    while True:
        act = np.flatnonzero(~done & (length - 1 < max_len))
        if not len(act):
            break
        logits = _forward_rows(model, lambda idx: build(act[idx]), length[act] - 1, len(act), chunk, protein)
        toks = np.asarray(choose(logits, OPEN_LEGAL, act, length[act] - 1))
        tokens[act, length[act]] = toks
        length[act] += 1
        done[act[toks == VOCAB.eos]] = True
        if traces is not None:
            lp = log_softmax(logits)
            for j, s in enumerate(act):
                traces[s].append((RIGHT, int(toks[j]), lp[j]))
    return ["".join(VOCAB.token(int(t)) for t in row if t in RESIDUE_IDS) for row in tokens]


def generate_autoregressive_batch(model, cfg: GenConfig, rng, n, protein=None, traces=None):
    return _ar_run(model, n, cfg.max_len, _Sampler(cfg.top_k, rng), cfg.chunk, protein, traces)


def generate_autoregressive(model, cfg: GenConfig, rng, protein=None):
    return generate_autoregressive_batch(model, cfg, rng, 1, protein)[0]


def ar_forced_logprob(model, seq: str, protein=None):
    toks = list(encode(seq)) + [VOCAB.eos]
    traces = [[]]
    _ar_run(model, 1, len(seq) + 1, _Forcer([toks]), 256, protein, traces)
    return float(sum(lp[t] for _, t, lp in traces[0])), traces[0]


# --- demasking -------------------------------------------------------------------

def _demask_run(model, tokens, cfg: GenConfig, rng, decoding, protein, orders=None):
    n, W = tokens.shape
    valid = np.ones((n, W), dtype=bool)
    allowed = full_rows(valid)
    while True:
        masked = tokens == VOCAB.mask
        if not masked.any():
            break
        rows_todo = np.flatnonzero(masked.any(1))
        logits_all = []
        for lo in range(0, len(rows_todo), cfg.chunk):
            idx = rows_todo[lo: lo + cfg.chunk]
            inp = linear_input(tokens[idx], allowed[idx])
            logits_all.append(np.asarray(model.forward(inp, protein), dtype=np.float64))
        logits = restrict(np.concatenate(logits_all, 0), RESIDUE_IDS)
        m = masked[rows_todo]
        if decoding == "max_logit":
            score = logits.max(-1)
        elif decoding == "entropy":
            lp = log_softmax(logits)
            p = np.exp(lp)
            score = np.sum(p * np.where(p > 0, lp, 0.0), -1)   # negative entropy
        else:
            raise ValueError(f"unknown decoding {decoding!r}")
        score = np.where(m, score, -np.inf)
        pos = np.argmax(score, axis=1)                # first index wins ties
        picked = logits[np.arange(len(rows_todo)), pos]
        toks = top_k_sample(picked, cfg.top_k, rng)
        tokens[rows_todo, pos] = toks
        if orders is not None:
            for j, b in enumerate(rows_todo):
                orders[b].append(int(pos[j]))
    return tokens


def _strings(tokens):
    return ["".join(VOCAB.token(int(t)) for t in row if t in RESIDUE_IDS) for row in tokens]


def generate_iterative_batch(model, cfg: GenConfig, rng, n, decoding="max_logit", protein=None, orders=None):
    L = cfg.fixed_len
    if L is None:
        raise ValueError("iterative decoding needs fixed_len")
    tokens = np.full((n, L + 2), VOCAB.mask, dtype=np.int64)
    tokens[:, 0] = VOCAB.sos
    tokens[:, -1] = VOCAB.eos
    return _strings(_demask_run(model, tokens, cfg, rng, decoding, protein, orders))


def generate_iterative(model, cfg: GenConfig, rng, decoding="max_logit", protein=None):
    return generate_iterative_batch(model, cfg, rng, 1, decoding, protein)[0]


def generate_iang_batch(model, cfg: GenConfig, rng, n, decoding="max_logit", protein=None,
                        placements=None, orders=None):
    """Demasking with one `<anc>` placed after a uniformly chosen content slot."""
    L = cfg.fixed_len
    if L is None:
        raise ValueError("iterative decoding needs fixed_len")
    after = rng.integers(0, L, size=n)
    tokens = np.full((n, L + 3), VOCAB.mask, dtype=np.int64)
    tokens[:, 0] = VOCAB.sos
    tokens[:, -1] = VOCAB.eos
    tokens[np.arange(n), after + 2] = VOCAB.anc
    if placements is not None:
        placements.extend(int(a) for a in after)
    return _strings(_demask_run(model, tokens, cfg, rng, decoding, protein, orders))


def generate_iang(model, cfg: GenConfig, rng, decoding="max_logit", protein=None):
    return generate_iang_batch(model, cfg, rng, 1, decoding, protein)[0]


def random_sequence(rng, lo=40, hi=50):
    L = int(rng.integers(lo, hi + 1))
    return "".join(rng.choice(list(NUCLEOTIDES), size=L))


def random_batch(rng, n, lo=40, hi=50):
    return [random_sequence(rng, lo, hi) for _ in range(n)]


METHODS = ("bang", "ar", "iter-logit", "iter-entropy", "iang-logit", "iang-entropy", "random")


def generate(method, model, cfg: GenConfig, n, rng=None, protein=None):
    """Dispatch by method name; `rng` defaults to one seeded from ``cfg.seed``."""
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    if method == "bang":
        return generate_bang_batch(model, cfg, rng, n, protein)
    if method == "ar":
        return generate_autoregressive_batch(model, cfg, rng, n, protein)
    if method in ("iter-logit", "iter-entropy"):
        dec = "max_logit" if method.endswith("logit") else "entropy"
        return generate_iterative_batch(model, cfg, rng, n, dec, protein)
    if method in ("iang-logit", "iang-entropy", "iang"):
        dec = "entropy" if method.endswith("entropy") else "max_logit"
        return generate_iang_batch(model, cfg, rng, n, dec, protein)
    if method == "random":
        return random_batch(rng, n)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
