"""Hot loops for the sequence metrics, compiled with numba when available.

Common-subsequence lengths use the bit-parallel recurrence
``V <- (V + (V & M_c)) | (V & ~M_c)`` over 64-bit words (the LCS is the
number of zero bits left in the reference's span), so one query residue costs
a handful of word operations per reference instead of a DP row.

Set ``BANG_NO_NUMBA=1`` to force the vectorised numpy versions (also used
when numba is not importable).  Both backends return identical results:
match counts are integers and window scores are accumulated column by column
in the same order.
"""

from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("BANG_NO_NUMBA", "").strip().lower() not in ("", "0", "false", "no")

try:
    if _DISABLED:
        raise ImportError("disabled by BANG_NO_NUMBA")
    from numba import njit
    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False


# --- numpy --------------------------------------------------------------------

_ONE = np.uint64(1)
_BITS = np.left_shift(_ONE, np.arange(64, dtype=np.uint64))


def match_masks(refs, ref_lens):
    """``[R, 4, W]`` bit sets of where each base occurs in each reference."""
    R, M = refs.shape
    W = max(1, (M + 63) // 64)
    padded = np.full((R, W * 64), -1, dtype=np.int8)
    padded[:, :M] = refs
    padded[np.arange(W * 64)[None, :] >= ref_lens[:, None]] = -1
    out = np.zeros((R, 4, W), dtype=np.uint64)
    for c in range(4):
        hit = (padded == c).reshape(R, W, 64)
        out[:, c, :] = np.bitwise_or.reduce(np.where(hit, _BITS, np.uint64(0)), axis=-1)
    return out


def span_masks(ref_lens, W):
    """Bits ``0 .. len-1`` set, per reference."""
    words = np.arange(W)[None, :]
    full = ref_lens[:, None] // 64
    part = (ref_lens[:, None] % 64).astype(np.uint64)
    partial = np.left_shift(_ONE, part) - _ONE
    ones = np.uint64(0xFFFFFFFFFFFFFFFF)
    return np.where(words < full, ones, np.where(words == full, partial, np.uint64(0)))


def prepare(refs, ref_lens, width=None):
    """Bit masks and span masks for a reference set, reusable across queries.

    `width` fixes the word count so rows can be added to a preallocated set.
    """
    masks = match_masks(refs, ref_lens)
    if width is not None and masks.shape[-1] < width:
        masks = np.concatenate([masks, np.zeros(masks.shape[:2] + (width - masks.shape[-1],), np.uint64)], -1)
    return masks, span_masks(ref_lens, masks.shape[-1])


def lcs_prepared_np(query, masks, span):
    R, _, W = masks.shape
    if R == 0 or len(query) == 0:
        return np.zeros(R, dtype=np.int64)
    V = np.full((R, W), np.uint64(0xFFFFFFFFFFFFFFFF))
    for q in query:
        U = V & masks[:, q, :]
        keep = V & ~U
        carry = np.zeros(R, dtype=np.uint64)
        for w in range(W):
            s1 = V[:, w] + U[:, w]
            c1 = s1 < V[:, w]
            s2 = s1 + carry
            c2 = s2 < s1
            V[:, w] = s2 | keep[:, w]
            carry = (c1 | c2).astype(np.uint64)
    zeros = np.bitwise_count(~V & span).sum(-1)
    return zeros.astype(np.int64)


def lcs_many_np(query, refs, ref_lens):
    """Longest-common-subsequence length of `query` against each padded row of `refs`."""
    return lcs_prepared_np(query, *prepare(refs, ref_lens))


def lcs_dp(a, b):
    """Plain quadratic DP; the reference the fast paths are tested against."""
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def window_scores_np(seq, log_odds):
    L = log_odds.shape[0]
    n = len(seq) - L + 1
    acc = np.zeros(n)
    for c in range(L):
        acc = acc + log_odds[c, seq[c: c + n]]
    return acc


# --- numba -------------------------------------------------------------------------

if HAVE_NUMBA:
    @njit(cache=True)
    def _lcs_many_nb(query, masks, span):
        R, _, W = masks.shape
        out = np.zeros(R, dtype=np.int64)
        V = np.empty(W, dtype=np.uint64)
        for r in range(R):
            V[:] = np.uint64(0xFFFFFFFFFFFFFFFF)
            for i in range(query.shape[0]):
                q = query[i]
                carry = np.uint64(0)
                for w in range(W):
                    v = V[w]
                    u = v & masks[r, q, w]
                    s1 = v + u
                    c1 = s1 < v
                    s2 = s1 + carry
                    c2 = s2 < s1
                    V[w] = s2 | (v & ~u)
                    carry = np.uint64(1) if (c1 or c2) else np.uint64(0)
            n = 0
            for w in range(W):
                x = ~V[w] & span[r, w]
                while x:
                    x &= x - np.uint64(1)
                    n += 1
            out[r] = n
        return out

    @njit(cache=True)
    def _window_scores_nb(seq, log_odds):
        L = log_odds.shape[0]
        n = seq.shape[0] - L + 1
        acc = np.zeros(n)
        for c in range(L):
            for i in range(n):
                acc[i] = acc[i] + log_odds[c, seq[c + i]]
        return acc

    def lcs_prepared(query, masks, span):
        if masks.shape[0] == 0 or len(query) == 0:
            return np.zeros(masks.shape[0], dtype=np.int64)
        return _lcs_many_nb(np.asarray(query, dtype=np.int64), masks, span)

    def lcs_many(query, refs, ref_lens):
        return lcs_prepared(query, *prepare(refs, ref_lens))

    window_scores = _window_scores_nb
else:
    lcs_many = lcs_many_np
    lcs_prepared = lcs_prepared_np
    window_scores = window_scores_np


BACKEND = "numba" if HAVE_NUMBA else "numpy"
