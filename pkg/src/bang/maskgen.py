"""Attention masks, position indices and prediction targets.

All builders work on a *slot description* of a sequence: for every slot a role
(content, anchor-left, anchor-right, pad) and a signed offset relative to the
anchors (``x_-j`` -> ``-j``, ``x_j`` -> ``j``; terminal eos tokens count as the
next content slot outward).  Working on offsets instead of raw positions lets
the same code serve compact training tensors and the fixed-width buffers used
during batched generation.

Two BAnG masks exist.  ``bang_mask`` holds the conditioning window of each
predictor (rows of the output block).  Stacking it does not compose: a left
token's window reaches one slot further right than its right-hand partner's,
so a second layer would route the right target into the right predictor.
``bang_closed_mask`` is the largest mask whose rows are closed under
composition (each slot sees only what was generated no later than itself);
inner blocks use it so that the output rows stay exact at any depth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .seqcore import AnchoredSeq, Vocab, NUCLEOTIDE_VOCAB

NONE = -1

# slot roles
PAD_SLOT, CONTENT, ANCL_SLOT, ANCR_SLOT = 0, 1, 2, 3


@dataclass(frozen=True)
class AttentionMask:
    allowed: np.ndarray

    def __post_init__(self):
        if self.allowed.ndim != 2 or self.allowed.shape[0] != self.allowed.shape[1]:
            raise ValueError("attention mask must be square")

    @property
    def size(self):
        return self.allowed.shape[0]

    def render(self, anchors=None) -> str:
        n = self.size
        head = f"L={n}"
        if anchors is not None:
            head += f" anchors={anchors[0]},{anchors[1]}"
        rows = ["".join("#" if a else "." for a in row) for row in self.allowed]
        return "\n".join([head] + rows)


@dataclass(frozen=True)
class PositionIndices:
    rope_idx: np.ndarray
    cross_idx: np.ndarray


@dataclass(frozen=True)
class TargetMap:
    """``targets[p]`` is the slot predicted from position ``p`` (or NONE)."""

    targets: np.ndarray

    def pairs(self):
        return {int(p): (None if t == NONE else int(t)) for p, t in enumerate(self.targets)}


# --- slot descriptions -----------------------------------------------------

def slots_of(seq: AnchoredSeq):
    """(role, offset) arrays for an AnchoredSeq."""
    L = len(seq)
    a = seq.anchor_slot
    role = np.full(L, CONTENT, dtype=np.int8)
    role[a] = ANCL_SLOT
    role[a + 1] = ANCR_SLOT
    pad = seq.vocab.pad
    for i, t in enumerate(seq.tokens):
        if t == pad:
            role[i] = PAD_SLOT
    pos = np.arange(L)
    offset = np.where(pos < a, pos - a, pos - (a + 2)).astype(np.int64)
    offset[a] = 0
    offset[a + 1] = 0
    return role, offset


def _window_rows(role, offset, lo_right, hi_right, lo_left, hi_left, ancl_lo, ancl_hi):
    """Generic window mask over a batch of slot descriptions.

    Rows of a right content slot at offset j allow offsets
    ``[lo_right(j), hi_right(j)]``; left content at offset -j allow
    ``[lo_left(j), hi_left(j)]``; `<ancl>` allows ``[ancl_lo, ancl_hi]``
    (empty when lo > hi); `<ancr>` and pad rows allow no content.  Anchors are
    visible from every non-pad row and pads only see themselves.
    """
    role = np.asarray(role)
    offset = np.asarray(offset)
    content = role == CONTENT
    right = content & (offset >= 0)
    left = content & (offset < 0)
    j = np.abs(offset)
    lo = np.full(offset.shape, 1, dtype=np.int64)
    hi = np.full(offset.shape, 0, dtype=np.int64)
    lo = np.where(right, lo_right(j), lo)
    hi = np.where(right, hi_right(j), hi)
    lo = np.where(left, lo_left(j), lo)
    hi = np.where(left, hi_left(j), hi)
    lo = np.where(role == ANCL_SLOT, ancl_lo, lo)
    hi = np.where(role == ANCL_SLOT, ancl_hi, hi)
    q_lo, q_hi = lo[..., :, None], hi[..., :, None]
    k_off = offset[..., None, :]
    k_content = content[..., None, :]
    k_anchor = ((role == ANCL_SLOT) | (role == ANCR_SLOT))[..., None, :]
    allowed = k_content & (k_off >= q_lo) & (k_off <= q_hi)
    q_live = (role != PAD_SLOT)[..., :, None]
    allowed = (allowed | k_anchor) & q_live
    eye = np.eye(role.shape[-1], dtype=bool)
    allowed = allowed | (eye & (role == PAD_SLOT)[..., :, None])
    return allowed


def bang_rows(role, offset):
    """Prediction-window rows (batched); see `bang_mask`."""
    return _window_rows(
        role, offset,
        lo_right=lambda j: -j, hi_right=lambda j: j,
        lo_left=lambda j: -j, hi_left=lambda j: j + 1,
        ancl_lo=0, ancl_hi=1,
    )


def bang_closed_rows(role, offset):
    """Composition-closed rows (batched); see `bang_closed_mask`."""
    return _window_rows(
        role, offset,
        lo_right=lambda j: np.minimum(1 - j, 0), hi_right=lambda j: j,
        lo_left=lambda j: -j, hi_left=lambda j: j,
        ancl_lo=1, ancl_hi=0,
    )


def bang_mask(seq: AnchoredSeq) -> AttentionMask:
    """Rows realise the conditioning set of each predictor's target.

    Right ``x_j`` sees anchors and ``x_-j..x_j``; left ``x_-j`` sees anchors and
    ``x_-j..x_j+1``; `<ancr>` sees the anchors; `<ancl>` additionally ``x_0, x_1``.
    """
    role, offset = slots_of(seq)
    return AttentionMask(bang_rows(role, offset))


def bang_closed_mask(seq: AnchoredSeq) -> AttentionMask:
    role, offset = slots_of(seq)
    return AttentionMask(bang_closed_rows(role, offset))


def causal_mask(L: int) -> AttentionMask:
    if L < 1:
        raise ValueError("L must be >= 1")
    return AttentionMask(np.tril(np.ones((L, L), dtype=bool)))


def full_mask(L: int, pad=None) -> AttentionMask:
    if L < 1:
        raise ValueError("L must be >= 1")
    pad = np.zeros(L, dtype=bool) if pad is None else np.asarray(pad, dtype=bool)
    allowed = np.ones((L, L), dtype=bool) & ~pad[None, :]
    allowed |= np.eye(L, dtype=bool) & pad[:, None]
    return AttentionMask(allowed)


def causal_rows(valid):
    """Batched causal mask over ``valid`` [B, L] slots (pads see themselves)."""
    valid = np.asarray(valid, dtype=bool)
    L = valid.shape[-1]
    tri = np.tril(np.ones((L, L), dtype=bool))
    allowed = tri & valid[..., None, :] & valid[..., :, None]
    return allowed | (np.eye(L, dtype=bool) & ~valid[..., :, None])


def full_rows(valid):
    valid = np.asarray(valid, dtype=bool)
    L = valid.shape[-1]
    allowed = np.ones((L, L), dtype=bool) & valid[..., None, :] & valid[..., :, None]
    return allowed | (np.eye(L, dtype=bool) & ~valid[..., :, None])


# --- positions ---------------------------------------------------------------

def rope_from_offsets(role, offset):
    """RoPE index: content keeps consecutive indices, anchors copy their neighbours.

    ``<ancl>`` takes the index of ``x_-1`` and ``<ancr>`` that of ``x_0``; both
    follow from ``x_-1`` and ``x_0`` being adjacent, so the rule also covers the
    degenerate ``m = 0`` / ``n = 0`` cases.
    """
    role = np.asarray(role)
    offset = np.asarray(offset)
    rope = np.where(role == ANCL_SLOT, -1, offset)
    rope = np.where(role == ANCR_SLOT, 0, rope)
    return rope.astype(np.int64)


def cross_from_offsets(role, offset):
    role = np.asarray(role)
    offset = np.asarray(offset)
    cross = np.where(offset >= 0, offset + 2, offset)
    cross = np.where(role == ANCL_SLOT, 0, cross)
    cross = np.where(role == ANCR_SLOT, 1, cross)
    return cross.astype(np.int64)


def position_indices(seq: AnchoredSeq) -> PositionIndices:
    """RoPE and anchored cross-attention indices, shifted so the first slot is 0."""
    role, offset = slots_of(seq)
    rope = rope_from_offsets(role, offset)
    rope = rope - rope.min()
    return PositionIndices(rope, cross_from_offsets(role, offset))


# --- targets -----------------------------------------------------------------

def target_rows(role, offset):
    """Batched target map: position of the slot each position predicts, or NONE.

    ``<ancr>`` -> ``x_0``, ``<ancl>`` -> ``x_-1``, right ``x_j`` -> ``x_j+1``,
    left ``x_-j`` -> ``x_-j-1``.  Left and right neighbours are adjacent slots in
    every layout we build, so a target is the next slot outward when that slot
    holds content; terminal eos tokens therefore map to NONE.
    """
    role = np.asarray(role)
    offset = np.asarray(offset)
    L = role.shape[-1]
    content = role == CONTENT
    outward_right = (content & (offset >= 0)) | (role == ANCR_SLOT)
    outward_left = (content & (offset < 0)) | (role == ANCL_SLOT)
    pos = np.arange(L)
    nxt = np.concatenate([content[..., 1:], np.zeros(content.shape[:-1] + (1,), bool)], axis=-1)
    prv = np.concatenate([np.zeros(content.shape[:-1] + (1,), bool), content[..., :-1]], axis=-1)
    out = np.full(role.shape, NONE, dtype=np.int64)
    out = np.where(outward_right & nxt, pos + 1, out)
    out = np.where(outward_left & prv, pos - 1, out)
    return out


def target_map(seq: AnchoredSeq) -> TargetMap:
    role, offset = slots_of(seq)
    return TargetMap(target_rows(role, offset))


def conditioning_set(seq: AnchoredSeq, target_pos: int) -> set:
    """Content positions the factor for the token at `target_pos` conditions on.

    ``P(x_0)`` has no content context, ``P(x_i | x_-i+1..x_i-1)`` for right
    tokens and ``P(x_-i | x_-i+1..x_i)`` for left ones.
    """
    role, offset = slots_of(seq)
    o = int(offset[target_pos])
    if o >= 0:
        lo, hi = -o + 1, o - 1
    else:
        i = -o
        lo, hi = -i + 1, i
    return {p for p in range(len(seq)) if role[p] == CONTENT and lo <= offset[p] <= hi}


def anchors_of(seq: AnchoredSeq):
    return seq.anchor_slot, seq.anchor_slot + 1


def mask_for_dims(m: int, n: int, vocab: Vocab = NUCLEOTIDE_VOCAB):
    """Bang mask for a bare sequence with `m` left and `n` right tokens (no eos)."""
    from .seqcore import insert_anchors
    nuc = vocab.residue_ids()[0]
    seq = insert_anchors([nuc] * (m + n), m - 1, vocab)
    return seq, bang_mask(seq)
