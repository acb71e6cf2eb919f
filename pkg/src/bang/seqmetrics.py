"""Sequence identity, greedy-cluster diversity, novelty and PWM scanning."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import LengthMismatch, SequenceTooShort, UnknownResidue, EmptySequence

BASES = "ACGU"
_CODE = {b: i for i, b in enumerate(BASES)}
_CODE["T"] = _CODE["U"]


def encode_bases(seq: str):
    try:
        return np.array([_CODE[c] for c in seq.upper()], dtype=np.int8)
    except KeyError:
        bad = next(i for i, c in enumerate(seq.upper()) if c not in _CODE)
        raise UnknownResidue(bad, seq[bad]) from None


def _pack(seqs):
    codes = [encode_bases(s) for s in seqs]
    lens = np.array([len(c) for c in codes], dtype=np.int64)
    M = int(lens.max()) if len(codes) else 0
    out = np.full((len(codes), max(M, 1)), -1, dtype=np.int8)
    for i, c in enumerate(codes):
        out[i, : len(c)] = c
    return out, lens


def pairwise_identity(a: str, b: str) -> float:
    """Matches of the best gap-free-cost global alignment over the longer length.

    With match 1 and mismatch/gap 0 the best alignment's match count is the
    longest common subsequence.
    """
    if not a or not b:
        raise EmptySequence("identity needs non-empty sequences")
    refs, lens = _pack([b])
    m = int(_kernels.lcs_many(encode_bases(a), refs, lens)[0])
    return m / max(len(a), len(b))


def identities(query: str, refs):
    """Identity of `query` against each reference."""
    if not refs:
        return np.zeros(0)
    packed, lens = _pack(refs)
    m = _kernels.lcs_many(encode_bases(query), packed, lens)
    return m / np.maximum(lens, len(query))


def cluster_order(seqs):
    """Longest first, ties lexicographic."""
    return sorted(range(len(seqs)), key=lambda i: (-len(seqs[i]), seqs[i]))


def greedy_clusters(seqs, threshold=0.9, presorted=False):
    """Assign each sequence to the first representative it matches at
    `threshold` identity, or make it a new representative.

    Returns ``(representatives, labels)`` with labels indexing representatives.
    """
    order = range(len(seqs)) if presorted else cluster_order(seqs)
    reps, labels = [], [0] * len(seqs)
    if not seqs:
        return reps, labels
    width = max(len(s) for s in seqs)
    words = (width + 63) // 64
    masks = np.zeros((len(seqs), 4, words), dtype=np.uint64)
    span = np.zeros((len(seqs), words), dtype=np.uint64)
    lens = np.zeros(len(seqs), dtype=np.int64)
    for i in order:
        code = encode_bases(seqs[i])
        k = len(reps)
        if k:
            m = _kernels.lcs_prepared(code, masks[:k], span[:k])
            hit = np.flatnonzero(m / np.maximum(lens[:k], len(code)) >= threshold)
            if hit.size:
                labels[i] = int(hit[0])
                continue
        labels[i] = k
        reps.append(i)
        masks[k: k + 1], span[k: k + 1] = _kernels.prepare(code[None, :], np.array([len(code)]), words)
        lens[k] = len(code)
    return reps, labels


def diversity(seqs, threshold=0.9):
    """Number of greedy clusters divided by the number of sequences."""
    if not seqs:
        raise EmptySequence("diversity of an empty set")
    reps, _ = greedy_clusters(list(seqs), threshold)
    return len(reps) / len(seqs)


def novelty(seqs, reference, threshold=0.9):
    """Fraction of `seqs` whose best identity to any reference is below `threshold`.

    An identity cut-off stands in for a hit/no-hit similarity search.
    """
    if not seqs:
        raise EmptySequence("novelty of an empty set")
    reference = list(reference)
    if not reference:
        return 1.0
    packed, lens = _pack(reference)
    masks, span = _kernels.prepare(packed, lens)
    novel = 0
    for s in seqs:
        m = _kernels.lcs_prepared(encode_bases(s), masks, span)
        if np.max(m / np.maximum(lens, len(s))) < threshold:
            novel += 1
    return novel / len(seqs)


# --- position weight matrices ---------------------------------------------------

@dataclass(frozen=True)
class PWM:
    log_odds: np.ndarray                        # [L, 4] over A C G U
    background: tuple = (0.25, 0.25, 0.25, 0.25)

    def __post_init__(self):
        lo = np.asarray(self.log_odds, dtype=np.float64)
        if lo.ndim != 2 or lo.shape[1] != 4 or lo.shape[0] < 1:
            raise ValueError("log_odds must have shape [L, 4] with L >= 1")
        if not np.all(np.isfinite(lo)):
            raise ValueError("log_odds must be finite")
        if abs(sum(self.background) - 1.0) > 1e-9 or min(self.background) <= 0:
            raise ValueError("background must be positive and sum to 1")
        object.__setattr__(self, "log_odds", lo)

    @property
    def L(self):
        return self.log_odds.shape[0]

    def dumps(self):
        rows = [f"PWM L={self.L}"]
        rows += ["\t".join(repr(float(v)) for v in row) for row in self.log_odds]
        return "\n".join(rows) + "\n"

    @classmethod
    def loads(cls, text):
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("PWM L="):
            raise ValueError("PWM file must start with 'PWM L=<n>'")
        L = int(lines[0].split("=", 1)[1])
        rows = [[float(v) for v in ln.split("\t")] for ln in lines[1:]]
        if len(rows) != L or any(len(r) != 4 for r in rows):
            raise ValueError(f"expected {L} rows of 4 values")
        return cls(np.array(rows))


def pwm_from_kmers(kmers, pseudocount=0.5, background=(0.25, 0.25, 0.25, 0.25)):
    """Stack equal-length k-mers without gaps into a log-odds matrix."""
    if not kmers:
        raise EmptySequence("no k-mers")
    k = len(kmers[0])
    if any(len(m) != k for m in kmers):
        raise LengthMismatch("k-mers differ in length")
    codes = np.stack([encode_bases(m) for m in kmers])
    counts = np.stack([np.bincount(codes[:, c], minlength=4) for c in range(k)]).astype(np.float64)
    freq = (counts + pseudocount) / (len(kmers) + 4 * pseudocount)
    return PWM(np.log(freq / np.asarray(background)), tuple(background))


def window_scores(seq: str, pwm: PWM):
    codes = encode_bases(seq)
    if len(codes) < pwm.L:
        raise SequenceTooShort(f"sequence of length {len(codes)} shorter than motif {pwm.L}")
    return _kernels.window_scores(codes, pwm.log_odds)


def pwm_scan(seq: str, pwm: PWM):
    """Best window score, its leftmost position and the sigmoid of the score."""
    scores = window_scores(seq, pwm)
    pos = int(np.argmax(scores))
    best = float(scores[pos])
    return {"max_score": best, "position": pos, "sigmoid_score": 1.0 / (1.0 + math.exp(-best))}
