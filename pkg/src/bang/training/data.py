"""Synthetic motif tasks and per-objective batch builders."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import MotifDoesNotFit
from ..maskgen import (
    CONTENT, PAD_SLOT, ANCL_SLOT, ANCR_SLOT, NONE,
    bang_rows, bang_closed_rows, causal_rows, full_rows,
    rope_from_offsets, cross_from_offsets, target_rows,
)
from ..nn.model import NucInput
from ..seqcore import NUCLEOTIDES, NUCLEOTIDE_VOCAB, RNA

VOCAB = NUCLEOTIDE_VOCAB
NUC_IDS = np.array(VOCAB.residue_ids())

TASKS = ("SingleBind", "DoubleBind", "DualBindMix", "DualBindMixRandom")
DEFAULT_MOTIFS = ("UGACUC", "CAAUUG")


@dataclass(frozen=True)
class TaskSpec:
    task: str = "SingleBind"
    motifs: tuple = DEFAULT_MOTIFS
    seq_len: object = 50          # int or (lo, hi) inclusive
    separation: object = 3        # int, or None for random (mix tasks only)

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if not self.motifs or any(len(m) < 1 for m in self.motifs):
            raise ValueError("motifs must be non-empty strings")
        if self.task != "SingleBind" and len(self.motifs) < 2:
            raise ValueError(f"{self.task} needs two motifs")
        lo, _ = self.length_range
        need = self._span_needed()
        if lo < need:
            raise MotifDoesNotFit(f"motif span {need} does not fit length {lo}")

    @property
    def length_range(self):
        if isinstance(self.seq_len, (tuple, list)):
            return int(self.seq_len[0]), int(self.seq_len[1])
        return int(self.seq_len), int(self.seq_len)

    @property
    def max_len(self):
        return self.length_range[1]

    def _span_needed(self):
        if self.task in ("DualBindMix", "DualBindMixRandom"):
            sep = self.separation if (self.task == "DualBindMix" and self.separation is not None) else 0
            return len(self.motifs[0]) + len(self.motifs[1]) + sep
        if self.task == "SingleBind":
            return len(self.motifs[0])
        return max(len(m) for m in self.motifs[:2])

    def key(self):
        return f"{self.task}:{','.join(self.motifs)}:{self.seq_len}:{self.separation}"


def anchor_after(motif_start, motif_len):
    """Residue index after which the anchors go: the centre of the motif."""
    return motif_start + (motif_len + 1) // 2 - 1


def synth_sample(spec: TaskSpec, rng):
    """One synthetic sequence and the index of the residue preceding the anchors."""
    lo, hi = spec.length_range
    L = int(rng.integers(lo, hi + 1))
    if L < spec._span_needed():
        raise MotifDoesNotFit(f"length {L} too short for the motifs")
    seq = list(rng.choice(list(NUCLEOTIDES), size=L))
    m1 = spec.motifs[0]
    if spec.task in ("SingleBind", "DoubleBind"):
        motif = m1 if spec.task == "SingleBind" or rng.random() < 0.5 else spec.motifs[1]
        start = int(rng.integers(0, L - len(motif) + 1))
        seq[start: start + len(motif)] = motif
        return "".join(seq), anchor_after(start, len(motif))
    a, b = spec.motifs[0], spec.motifs[1]
    if rng.random() < 0.5:
        a, b = b, a
    if spec.task == "DualBindMix" and spec.separation is not None:
        sep = int(spec.separation)
    else:
        sep = int(rng.integers(0, L - len(a) - len(b) + 1))
    span = len(a) + sep + len(b)
    start = int(rng.integers(0, L - span + 1))
    seq[start: start + len(a)] = a
    s2 = start + len(a) + sep
    seq[s2: s2 + len(b)] = b
    if rng.random() < 0.5:
        return "".join(seq), anchor_after(start, len(a))
    return "".join(seq), anchor_after(s2, len(b))


def encode(seq: str):
    return np.array([VOCAB.id(c) for c in seq], dtype=np.int64)


@dataclass
class TrainBatch:
    inp: NucInput
    targets: np.ndarray    # [B, L] token ids, NONE where no loss
    weights: np.ndarray    # [B, L]


# --- BAnG ------------------------------------------------------------------

def bang_layout(tokens_list, anchors, with_eos=True):
    """Pack anchored sequences into padded arrays of roles, offsets and ids."""
    rows = []
    for toks, after in zip(tokens_list, anchors):
        left, right = list(toks[: after + 1]), list(toks[after + 1:])
        ids = left + [VOCAB.ancl, VOCAB.ancr] + right
        if with_eos:
            ids = [VOCAB.eos] + ids + [VOCAB.eos]
            a = len(left) + 1
        else:
            a = len(left)
        rows.append((ids, a))
    L = max(len(r[0]) for r in rows)
    B = len(rows)
    tokens = np.full((B, L), VOCAB.pad, dtype=np.int64)
    role = np.full((B, L), PAD_SLOT, dtype=np.int8)
    offset = np.zeros((B, L), dtype=np.int64)
    for b, (ids, a) in enumerate(rows):
        n = len(ids)
        tokens[b, :n] = ids
        role[b, :n] = CONTENT
        role[b, a] = ANCL_SLOT
        role[b, a + 1] = ANCR_SLOT
        pos = np.arange(n)
        offset[b, :n] = np.where(pos < a, pos - a, pos - (a + 2))
        offset[b, a: a + 2] = 0
    return tokens, role, offset


def bang_input(tokens, role, offset, kind=None):
    return NucInput(
        tokens=tokens,
        rope=rope_from_offsets(role, offset),
        inner_mask=bang_closed_rows(role, offset),
        final_mask=bang_rows(role, offset),
        cross=cross_from_offsets(role, offset),
        kind=np.zeros(tokens.shape[0], dtype=np.int64) if kind is None else kind,
    )


def bang_batch(tokens_list, anchors, anchor_weight=1.0, anchor_window=4, kind=None):
    tokens, role, offset = bang_layout(tokens_list, anchors)
    tpos = target_rows(role, offset)
    has = tpos != NONE
    targets = np.where(has, np.take_along_axis(tokens, np.where(has, tpos, 0), axis=1), NONE)
    weights = has.astype(np.float64)
    if anchor_weight != 1.0:
        toff = np.take_along_axis(offset, np.where(has, tpos, 0), axis=1)
        near = has & (toff >= -anchor_window) & (toff <= anchor_window - 1)
        weights = np.where(near, anchor_weight, weights)
    return TrainBatch(bang_input(tokens, role, offset, kind), targets, weights)


# --- left-to-right and demasking baselines ----------------------------------

def _linear_layout(tokens_list, anc_after=None):
    """``[sos] x [eos]`` rows; with `anc_after`, an `<anc>` is inserted in each."""
    rows = []
    for i, toks in enumerate(tokens_list):
        toks = list(toks)
        if anc_after is not None:
            a = anc_after[i] + 1
            toks = toks[:a] + [VOCAB.anc] + toks[a:]
        rows.append([VOCAB.sos] + toks + [VOCAB.eos])
    L = max(len(r) for r in rows)
    tokens = np.full((len(rows), L), VOCAB.pad, dtype=np.int64)
    for b, r in enumerate(rows):
        tokens[b, : len(r)] = r
    return tokens


def linear_input(tokens, allowed):
    B, L = tokens.shape
    pos = np.broadcast_to(np.arange(L), (B, L))
    return NucInput(tokens=tokens, rope=pos, inner_mask=allowed, final_mask=allowed,
                    cross=pos, kind=np.zeros(B, dtype=np.int64))


def ar_batch(tokens_list):
    tokens = _linear_layout(tokens_list)
    valid = tokens != VOCAB.pad
    targets = np.full(tokens.shape, NONE, dtype=np.int64)
    targets[:, :-1] = np.where(valid[:, 1:], tokens[:, 1:], NONE)
    allowed = causal_rows(valid)
    return TrainBatch(linear_input(tokens, allowed), targets, (targets != NONE).astype(np.float64))


def demask_batch(tokens_list, rng, mask_rate=0.5, anc_after=None):
    """Replace a `mask_rate` fraction of residues by `<mask>`; loss on those slots."""
    tokens = _linear_layout(tokens_list, anc_after)
    valid = tokens != VOCAB.pad
    maskable = np.isin(tokens, NUC_IDS)
    targets = np.full(tokens.shape, NONE, dtype=np.int64)
    out = tokens.copy()
    for b in range(tokens.shape[0]):
        cand = np.flatnonzero(maskable[b])
        k = max(1, int(round(mask_rate * cand.size)))
        pick = rng.choice(cand, size=k, replace=False)
        targets[b, pick] = tokens[b, pick]
        out[b, pick] = VOCAB.mask
    allowed = full_rows(valid)
    return TrainBatch(linear_input(out, allowed), targets, (targets != NONE).astype(np.float64))


OBJECTIVES = ("bang", "autoregressive", "iterative_mask", "iang")


def make_batch(objective, seqs, anchors, rng, mask_rate=0.5, anchor_weight=1.0, anchor_window=4):
    toks = [encode(s) for s in seqs]
    if objective == "bang":
        return bang_batch(toks, anchors, anchor_weight, anchor_window)
    if objective == "autoregressive":
        return ar_batch(toks)
    if objective == "iterative_mask":
        return demask_batch(toks, rng, mask_rate)
    if objective == "iang":
        return demask_batch(toks, rng, mask_rate, anc_after=anchors)
    raise ValueError(f"unknown objective {objective!r}")
