"""Model configuration, the protein/nucleotide modules and the full forward/backward."""

from __future__ import annotations

from dataclasses import dataclass, asdict, fields, replace

import numpy as np

from ..errors import MissingConditioning
from ..seqcore import NUCLEOTIDE_VOCAB, PROTEIN_VOCAB
from .attention import SelfAttention, CrossAttention
from .geometry import GeometricAttention
from .layers import ParamStore, Linear, RMSNorm, FeedForward, Embedding


@dataclass(frozen=True)
class ModelConfig:
    c_s: int = 32
    c_h: int = 16
    heads: int = 2
    ff_scale: int = 2
    n_protein_blocks: int = 0
    n_nucleotide_blocks: int = 2
    nuc_vocab: int = len(NUCLEOTIDE_VOCAB)
    prot_vocab: int = len(PROTEIN_VOCAB)
    use_cross: bool = False
    use_geometric: bool = False
    n_query_points: int = 4
    n_value_points: int = 8

    def __post_init__(self):
        if self.c_s <= 0 or self.heads <= 0 or self.c_h <= 0:
            raise ValueError("c_s, c_h and heads must be positive")
        if self.c_h % 2 or self.c_s % 2:
            raise ValueError("c_h and c_s must be even (rotary/sinusoidal pairs)")
        if self.use_geometric and not self.use_cross:
            raise ValueError("geometric attention lives in the protein module, which needs use_cross")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        kinds = {f.name: f.type for f in fields(cls)}
        out = {}
        for k, v in d.items():
            if k not in kinds:
                continue
            if isinstance(v, str):
                if kinds[k] in ("bool", bool):
                    v = v.strip().lower() in ("1", "true", "yes")
                else:
                    v = int(v)
            out[k] = v
        return cls(**out)

    def with_(self, **kw):
        return replace(self, **kw)


# two blocks, FF width 64 (= 2 x 32), two heads: ~17k weights
TOY = ModelConfig()
FULL = ModelConfig(c_s=128, c_h=64, heads=12, ff_scale=2, n_protein_blocks=10,
                   n_nucleotide_blocks=10, use_cross=True, use_geometric=True)
PRESETS = {"toy": TOY, "full": FULL}


@dataclass
class NucInput:
    """A batch of nucleotide slots ready for the network.

    ``inner_mask`` drives every block but the last, ``final_mask`` the last.
    """

    tokens: np.ndarray          # [B, L]
    rope: np.ndarray            # [B, L]
    inner_mask: np.ndarray      # [B, L, L]
    final_mask: np.ndarray      # [B, L, L]
    cross: np.ndarray | None = None   # [B, L]
    kind: np.ndarray | None = None    # [B]


@dataclass
class ProteinInput:
    tokens: np.ndarray          # [r]
    R: np.ndarray               # [r, 3, 3]
    t: np.ndarray               # [r, 3]


class ProteinBlock:
    def __init__(self, store, prefix, cfg, rng):
        D = cfg.c_s
        self.attn_norm = RMSNorm(store, f"{prefix}.attn_norm", D)
        self.attn = SelfAttention(store, f"{prefix}.attn", D, cfg.heads, cfg.c_h, rng)
        self.geom = None
        if cfg.use_geometric:
            self.geom_norm = RMSNorm(store, f"{prefix}.geom_norm", D)
            self.geom = GeometricAttention(store, f"{prefix}.geom", D, cfg.heads,
                                           cfg.n_query_points, cfg.n_value_points, rng)
        self.ff_norm = RMSNorm(store, f"{prefix}.ff_norm", D)
        self.ff = FeedForward(store, f"{prefix}.ff", D, cfg.ff_scale, rng)

    def forward(self, x, allowed, pos, R, t):
        x = x + self.attn.forward(self.attn_norm.forward(x), allowed, pos)
        if self.geom is not None:
            x = x + self.geom.forward(self.geom_norm.forward(x), R, t)
        return x + self.ff.forward(self.ff_norm.forward(x))

    def backward(self, dx):
        dx = dx + self.ff_norm.backward(self.ff.backward(dx))
        if self.geom is not None:
            dx = dx + self.geom_norm.backward(self.geom.backward(dx))
        return dx + self.attn_norm.backward(self.attn.backward(dx))


class NucleotideBlock:
    def __init__(self, store, prefix, cfg, rng):
        D = cfg.c_s
        self.attn_norm = RMSNorm(store, f"{prefix}.attn_norm", D)
        self.attn = SelfAttention(store, f"{prefix}.attn", D, cfg.heads, cfg.c_h, rng)
        self.cross = None
        if cfg.use_cross:
            self.cross_norm = RMSNorm(store, f"{prefix}.cross_norm", D)
            self.cross = CrossAttention(store, f"{prefix}.cross", D, cfg.heads, cfg.c_h, rng)
        self.ff_norm = RMSNorm(store, f"{prefix}.ff_norm", D)
        self.ff = FeedForward(store, f"{prefix}.ff", D, cfg.ff_scale, rng)

    def forward(self, x, allowed, pos, prot=None, cross_idx=None):
        x = x + self.attn.forward(self.attn_norm.forward(x), allowed, pos)
        if self.cross is not None:
            x = x + self.cross.forward(self.cross_norm.forward(x), prot, cross_idx)
        return x + self.ff.forward(self.ff_norm.forward(x))

    def backward(self, dx):
        dprot = None
        dx = dx + self.ff_norm.backward(self.ff.backward(dx))
        if self.cross is not None:
            dq, dprot = self.cross.backward(dx)
            dx = dx + self.cross_norm.backward(dq)
        return dx + self.attn_norm.backward(self.attn.backward(dx)), dprot


class Model:
    """Protein module (optional) feeding a nucleotide module with a vocab head."""

    def __init__(self, cfg: ModelConfig, seed: int = 0, dtype=np.float32):
        self.cfg = cfg
        self.store = ParamStore(np.float64)
        rng = np.random.default_rng(seed)
        D = cfg.c_s
        if cfg.use_cross:
            self.prot_embed = Embedding(self.store, "prot.embed", cfg.prot_vocab, D, rng,
                                        pad_id=PROTEIN_VOCAB.pad)
            self.prot_blocks = [ProteinBlock(self.store, f"prot.blocks.{i}", cfg, rng)
                                for i in range(cfg.n_protein_blocks)]
            self.prot_norm = RMSNorm(self.store, "prot.final_norm", D)
        self.nuc_embed = Embedding(self.store, "nuc.embed", cfg.nuc_vocab, D, rng,
                                   pad_id=NUCLEOTIDE_VOCAB.pad, n_types=2)
        self.nuc_blocks = [NucleotideBlock(self.store, f"nuc.blocks.{i}", cfg, rng)
                           for i in range(cfg.n_nucleotide_blocks)]
        self.nuc_norm = RMSNorm(self.store, "nuc.final_norm", D)
        self.head = Linear(self.store, "nuc.head", D, cfg.nuc_vocab, rng)
        self.store.astype(dtype)

    # -- parameters ------------------------------------------------------------
    @property
    def params(self):
        return self.store.params

    @property
    def grads(self):
        return self.store.grads

    @property
    def dtype(self):
        return self.store.dtype

    def astype(self, dtype):
        self.store.astype(dtype)
        return self

    def zero_grad(self):
        self.store.zero_grad()

    def param_count(self):
        return self.store.count()

    # -- forward / backward ----------------------------------------------------
    def encode_protein(self, prot: ProteinInput):
        toks = np.asarray(prot.tokens)[None]
        r = toks.shape[-1]
        x = self.prot_embed.forward(toks)
        allowed = np.ones((1, r, r), dtype=bool)
        pos = np.arange(r)[None]
        R = np.asarray(prot.R)[None]
        t = np.asarray(prot.t)[None]
        for blk in self.prot_blocks:
            x = blk.forward(x, allowed, pos, R, t)
        return self.prot_norm.forward(x)

    def forward(self, batch: NucInput, protein: ProteinInput | None = None):
        """Logits ``[B, L, V]`` for a nucleotide batch (one shared protein)."""
        prot = None
        self._has_prot = False
        if self.cfg.use_cross:
            if protein is None:
                raise MissingConditioning("model has cross-attention but no protein was given")
            prot = self.encode_protein(protein)
            self._has_prot = True
        x = self.nuc_embed.forward(batch.tokens, batch.kind)
        x = x.astype(self.dtype, copy=False)
        nb = len(self.nuc_blocks)
        for i, blk in enumerate(self.nuc_blocks):
            allowed = batch.final_mask if i == nb - 1 else batch.inner_mask
            x = blk.forward(x, allowed, batch.rope, prot, batch.cross)
        return self.head.forward(self.nuc_norm.forward(x))

    def backward(self, dlogits):
        dx = self.nuc_norm.backward(self.head.backward(dlogits))
        dprot = None
        for blk in reversed(self.nuc_blocks):
            dx, dp = blk.backward(dx)
            if dp is not None:
                dprot = dp if dprot is None else dprot + dp
        self.nuc_embed.backward(dx)
        if self._has_prot and dprot is not None:
            dx = self.prot_norm.backward(dprot)
            for blk in reversed(self.prot_blocks):
                dx = blk.backward(dx)
            self.prot_embed.backward(dx)


def param_count(cfg: ModelConfig) -> int:
    """Exact number of trainable scalars (computed from the parameter schema)."""
    D, H, c, n = cfg.c_s, cfg.heads, cfg.c_h, cfg.ff_scale
    inner = H * c
    attn = 4 * D * inner + 2 * c
    ff = D * n * D + n * D + n * D * D + D
    nuc = attn + ff + 2 * D
    if cfg.use_cross:
        nuc += attn + D
    prot = 0
    if cfg.use_cross:
        prot = attn + ff + 2 * D
        if cfg.use_geometric:
            P, V = cfg.n_query_points, cfg.n_value_points
            feat = H * V * 4
            prot += D * H * P * 3 * 2 + D * H * V * 3 + H + feat * D + D + D
        prot = prot * cfg.n_protein_blocks + cfg.prot_vocab * D + D
    total = nuc * cfg.n_nucleotide_blocks + cfg.nuc_vocab * D + 2 * D + D
    total += D * cfg.nuc_vocab + cfg.nuc_vocab
    return int(total + prot)
