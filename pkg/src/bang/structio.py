"""Backbone extraction from fixed-column PDB text and per-residue frames."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ChainNotFound, IncompleteResidue, MalformedAtomRecord, NonStandardResidue
from .nn.geometry import Frame, frames_from_backbone
from .seqcore import AA3_TO_1, PROTEIN_VOCAB

BACKBONE = ("N", "CA", "C")


@dataclass(frozen=True)
class Residue:
    resname: str
    resseq: int
    N: np.ndarray
    CA: np.ndarray
    C: np.ndarray


@dataclass
class BackboneChain:
    chain_id: str
    residues: list
    skipped_altloc: int = 0
    skipped_insertion: int = 0
    warnings: list = field(default_factory=list)

    def __len__(self):
        return len(self.residues)

    def coords(self):
        """``(N, CA, C)`` arrays of shape ``[r, 3]``."""
        return tuple(np.array([getattr(r, a) for r in self.residues]) for a in BACKBONE)


def _field(line, lo, hi):
    # 1-based inclusive PDB columns
    return line[lo - 1: hi]


def parse_pdb_backbone(text: str, chain: str) -> BackboneChain:
    """N/CA/C of every residue of `chain`, from the first MODEL only.

    Alternate locations other than blank/'A' and insertion-coded residues are
    dropped and counted.  Records for non-backbone atoms are ignored.
    """
    atoms = {}        # resseq -> {"resname", atom -> xyz}
    order = []
    seen_chains = set()
    skipped_alt = 0
    skipped_ins = set()
    in_model = False
    for n, line in enumerate(text.splitlines(), 1):
        rec = line[:6]
        if rec.startswith("MODEL"):
            if in_model:
                break
            in_model = True
            continue
        if rec.startswith("ENDMDL"):
            break
        if rec != "ATOM  ":
            continue
        if len(line) < 54:
            raise MalformedAtomRecord(n, "line shorter than 54 columns")
        ch = _field(line, 22, 22)
        seen_chains.add(ch)
        if ch != chain:
            continue
        name = _field(line, 13, 16).strip()
        alt = _field(line, 17, 17)
        resname = _field(line, 18, 20).strip()
        icode = _field(line, 27, 27)
        try:
            resseq = int(_field(line, 23, 26))
            xyz = np.array([float(_field(line, 31, 38)), float(_field(line, 39, 46)),
                            float(_field(line, 47, 54))])
        except ValueError as exc:
            raise MalformedAtomRecord(n, str(exc)) from exc
        if icode.strip():
            skipped_ins.add((resseq, icode))
            continue
        if alt not in (" ", "A"):
            skipped_alt += 1
            continue
        if name not in BACKBONE:
            continue
        if resseq not in atoms:
            if order and resseq < order[-1]:
                raise MalformedAtomRecord(n, f"residue {resseq} after {order[-1]}")
            atoms[resseq] = {"resname": resname}
            order.append(resseq)
        atoms[resseq].setdefault(name, xyz)
    if chain not in seen_chains:
        raise ChainNotFound(f"chain {chain!r} not in file (found {''.join(sorted(seen_chains)) or 'none'})")
    residues = []
    for rs in order:
        a = atoms[rs]
        missing = [x for x in BACKBONE if x not in a]
        if missing:
            raise IncompleteResidue(rs, missing)
        residues.append(Residue(a["resname"], rs, a["N"], a["CA"], a["C"]))
    warnings = []
    if skipped_alt:
        warnings.append(f"ignored {skipped_alt} alternate-location records")
    if skipped_ins:
        warnings.append(f"skipped {len(skipped_ins)} insertion-coded residues")
    return BackboneChain(chain, residues, skipped_alt, len(skipped_ins), warnings)


def format_atom(serial, name, resname, chain, resseq, xyz, altloc=" "):
    """One ATOM line in fixed-column layout (80 columns)."""
    nm = f" {name:<3}" if len(name) < 4 else name
    return (f"ATOM  {serial:>5} {nm}{altloc}{resname:>3} {chain}{resseq:>4}    "
            f"{xyz[0]:>8.3f}{xyz[1]:>8.3f}{xyz[2]:>8.3f}{1.0:>6.2f}{0.0:>6.2f}"
            f"          {name[0]:>2}  ")


def write_pdb_backbone(chain: BackboneChain) -> str:
    lines = []
    serial = 1
    for r in chain.residues:
        for a in BACKBONE:
            lines.append(format_atom(serial, a, r.resname, chain.chain_id, r.resseq, getattr(r, a)))
            serial += 1
    lines.append("END")
    return "\n".join(lines) + "\n"


def chain_to_frames(chain: BackboneChain):
    """Per-residue frames and protein-vocabulary token ids."""
    if not chain.residues:
        raise IncompleteResidue(None, BACKBONE)
    tokens = []
    for r in chain.residues:
        one = AA3_TO_1.get(r.resname.upper())
        if one is None:
            raise NonStandardResidue(r.resname)
        tokens.append(PROTEIN_VOCAB.id(one))
    N, CA, C = chain.coords()
    stacked = frames_from_backbone(N, CA, C)
    frames = [Frame(stacked.R[i], stacked.t[i]) for i in range(len(tokens))]
    return frames, tokens


def protein_input(chain: BackboneChain):
    """Model-ready protein conditioning for a parsed chain."""
    from .nn.model import ProteinInput
    frames, tokens = chain_to_frames(chain)
    return ProteinInput(np.array(tokens), np.stack([f.R for f in frames]), np.stack([f.t for f in frames]))


def frames_tsv(chain: BackboneChain) -> str:
    frames, _ = chain_to_frames(chain)
    head = ["resseq", "resname"] + [f"r{i}{j}" for i in range(3) for j in range(3)] + ["tx", "ty", "tz"]
    rows = ["\t".join(head)]
    for r, f in zip(chain.residues, frames):
        vals = list(f.R.reshape(-1)) + list(f.t)
        rows.append("\t".join([str(r.resseq), r.resname] + [f"{v:.6f}" for v in vals]))
    return "\n".join(rows) + "\n"
