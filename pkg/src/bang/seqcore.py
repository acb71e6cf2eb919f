"""Vocabularies, tokenization, anchor insertion and FASTA I/O."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import EmptySequence, IndexOutOfRange, InvalidTokenId, MalformedHeader, UnknownResidue

NUCLEOTIDES = "ACGU"
AMINO_ACIDS = "ACDEFGHIKLMNPQRSTVWY"

AA3_TO_1 = {
    "ALA": "A", "CYS": "C", "ASP": "D", "GLU": "E", "PHE": "F",
    "GLY": "G", "HIS": "H", "ILE": "I", "LYS": "K", "LEU": "L",
    "MET": "M", "ASN": "N", "PRO": "P", "GLN": "Q", "ARG": "R",
    "SER": "S", "THR": "T", "VAL": "V", "TRP": "W", "TYR": "Y",
}

PAD, EOS, ANCL, ANCR, SOS, MASK, ANC = "<pad>", "<eos>", "<ancl>", "<ancr>", "<sos>", "<mask>", "<anc>"

# kind flags consumed by the nucleotide embedder
RNA, DNA = 0, 1
KIND_FLAGS = {"RNA": RNA, "DNA": DNA}

LEFT, ANCHOR, RIGHT = "left", "anchor", "right"


@dataclass(frozen=True)
class Vocab:
    kind: str
    tokens: tuple

    def __post_init__(self):
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.tokens)})

    def __len__(self):
        return len(self.tokens)

    def id(self, token: str) -> int:
        try:
            return self._index[token]
        except KeyError:
            raise InvalidTokenId(f"token {token!r} not in {self.kind} vocab") from None

    def has(self, token: str) -> bool:
        return token in self._index

    def token(self, idx: int) -> str:
        if not 0 <= idx < len(self.tokens):
            raise InvalidTokenId(f"token id {idx} outside [0, {len(self.tokens)})")
        return self.tokens[idx]

    @property
    def pad(self):
        return self._index[PAD]

    @property
    def eos(self):
        return self._index.get(EOS)

    @property
    def ancl(self):
        return self._index.get(ANCL)

    @property
    def ancr(self):
        return self._index.get(ANCR)

    @property
    def sos(self):
        return self._index.get(SOS)

    @property
    def mask(self):
        return self._index.get(MASK)

    @property
    def anc(self):
        return self._index.get(ANC)

    @property
    def residues(self) -> str:
        return NUCLEOTIDES if self.kind == "nucleotide" else AMINO_ACIDS

    def residue_ids(self) -> list:
        return [self._index[c] for c in self.residues]

    def special_ids(self) -> list:
        return [i for i, t in enumerate(self.tokens) if t.startswith("<")]

    def dumps(self) -> str:
        return f"{self.kind}:" + ",".join(self.tokens)

    @classmethod
    def loads(cls, text: str) -> "Vocab":
        kind, _, toks = text.partition(":")
        return cls(kind, tuple(toks.split(",")))


NUCLEOTIDE_VOCAB = Vocab("nucleotide", (PAD, EOS, ANCL, ANCR, SOS, MASK, ANC) + tuple(NUCLEOTIDES))
PROTEIN_VOCAB = Vocab("protein", (PAD,) + tuple(AMINO_ACIDS))


def vocab_for(kind: str) -> Vocab:
    return PROTEIN_VOCAB if kind == "protein" else NUCLEOTIDE_VOCAB


@dataclass(frozen=True)
class SeqRecord:
    id: str
    residues: str
    kind: str = "RNA"

    @property
    def kind_flag(self) -> int:
        return KIND_FLAGS.get(self.kind, RNA)


def _alphabet(kind: str) -> str:
    if kind == "protein":
        return AMINO_ACIDS
    if kind == "DNA":
        return "ACGT"
    return NUCLEOTIDES


def tokenize(record: SeqRecord, vocab: Vocab | None = None) -> list:
    """Map residues to token ids; DNA thymine is folded onto the U token."""
    vocab = vocab or vocab_for("protein" if record.kind == "protein" else "nucleotide")
    alphabet = _alphabet(record.kind)
    out = []
    for i, ch in enumerate(record.residues.upper()):
        if ch not in alphabet:
            raise UnknownResidue(i, ch)
        if record.kind == "DNA" and ch == "T":
            ch = "U"
        out.append(vocab.id(ch))
    return out


def detokenize(ids: Iterable[int], vocab: Vocab = NUCLEOTIDE_VOCAB, kind: str = "RNA") -> str:
    """Inverse of `tokenize` for residue tokens; special tokens are dropped."""
    chars = []
    for i in ids:
        tok = vocab.token(int(i))
        if tok.startswith("<"):
            continue
        chars.append("T" if (kind == "DNA" and tok == "U") else tok)
    return "".join(chars)


@dataclass(frozen=True)
class AnchoredSeq:
    """Token ids with an `<ancl><ancr>` pair inserted and per-token side labels.

    Layout: ``[eos?] x_-m .. x_-1 <ancl> <ancr> x_0 .. x_n [eos?]``.
    """

    tokens: tuple
    anchor_slot: int
    side: tuple
    kind_flag: int = RNA
    vocab: Vocab = field(default=NUCLEOTIDE_VOCAB, compare=False, repr=False)

    def __len__(self):
        return len(self.tokens)

    def _content(self, toks):
        specials = set(self.vocab.special_ids())
        return sum(1 for t in toks if t not in specials)

    @property
    def m(self) -> int:
        return self._content(self.tokens[: self.anchor_slot])

    @property
    def n(self) -> int:
        return self._content(self.tokens[self.anchor_slot + 2:])

    def strip(self) -> list:
        """Token list with the anchor pair removed."""
        return list(self.tokens[: self.anchor_slot]) + list(self.tokens[self.anchor_slot + 2:])

    def with_eos(self) -> "AnchoredSeq":
        eos = self.vocab.eos
        toks = (eos,) + self.tokens + (eos,)
        return AnchoredSeq(toks, self.anchor_slot + 1, (LEFT,) + self.side + (RIGHT,),
                           self.kind_flag, self.vocab)


def insert_anchors(tokens: Sequence[int], after: int, vocab: Vocab = NUCLEOTIDE_VOCAB,
                   kind_flag: int = RNA, eos: bool = False) -> AnchoredSeq:
    """Insert `<ancl><ancr>` right after ``tokens[after]``; ``after=-1`` puts them first.

    With ``eos=True`` an end token is added on both outer ends.
    """
    tokens = list(tokens)
    if after != -1 and not 0 <= after < len(tokens):
        raise IndexOutOfRange(f"anchor position {after} outside [-1, {len(tokens)})")
    left, right = tokens[: after + 1], tokens[after + 1:]
    toks = tuple(left) + (vocab.ancl, vocab.ancr) + tuple(right)
    side = (LEFT,) * len(left) + (ANCHOR, ANCHOR) + (RIGHT,) * len(right)
    seq = AnchoredSeq(toks, len(left), side, kind_flag, vocab)
    return seq.with_eos() if eos else seq


def motif_anchor(motif_start: int, motif_len: int = 6) -> int:
    """Index of the residue after which anchors go for a motif at `motif_start`."""
    return motif_start + (motif_len + 1) // 2 - 1


# --- FASTA -----------------------------------------------------------------

def read_fasta(text: str, kind: str = "RNA") -> list:
    records = []
    header = None
    chunks: list = []

    def flush():
        if header is None:
            return
        seq = "".join(chunks)
        if not seq:
            raise EmptySequence(f"record {header!r} has no residues")
        records.append(SeqRecord(header, seq, _guess_kind(seq, kind)))

    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith(";"):
            continue
        if line.startswith(">"):
            flush()
            header = line[1:].split()[0] if line[1:].strip() else ""
            if not header:
                raise MalformedHeader("empty FASTA header")
            chunks = []
        else:
            if header is None:
                raise MalformedHeader("sequence data before the first '>' header")
            chunks.append(line)
    flush()
    return records


def _guess_kind(seq: str, default: str) -> str:
    if default == "RNA" and "T" in seq.upper() and "U" not in seq.upper():
        return "DNA"
    return default


def write_fasta(records: Iterable[SeqRecord], width: int = 60) -> str:
    lines = []
    for rec in records:
        lines.append(f">{rec.id}")
        seq = rec.residues
        if width:
            lines.extend(seq[i: i + width] for i in range(0, len(seq), width))
        else:
            lines.append(seq)
    return "\n".join(lines) + ("\n" if lines else "")
