import numpy as np
import pytest
from hypothesis import given, strategies as st

from bang.errors import ChainNotFound, DegenerateBackbone, IncompleteResidue, MalformedAtomRecord, NonStandardResidue
from bang.seqcore import PROTEIN_VOCAB
from bang.structio import chain_to_frames, frames_tsv, parse_pdb_backbone, protein_input, write_pdb_backbone
from tests.test_geometry import random_rotation

STANDARD = ["ALA", "ARG", "ASN", "ASP", "CYS", "GLN", "GLU", "GLY", "HIS", "ILE",
            "LEU", "LYS", "MET", "PHE", "PRO", "SER", "THR", "TRP", "TYR", "VAL"]


def atom_line(name, resname, chain, resseq, xyz, altloc=" ", icode=" ", serial=1, record="ATOM  "):
    """Place each field at its 1-based PDB columns in an 80-column line."""
    cols = [" "] * 80

    def put(lo, text):
        cols[lo - 1: lo - 1 + len(text)] = list(text)

    put(1, record)
    put(7, f"{serial:>5}")
    put(13, f" {name:<3}" if len(name) < 4 else name)
    put(17, altloc)
    put(18, f"{resname:>3}")
    put(22, chain)
    put(23, f"{resseq:>4}")
    put(27, icode)
    put(31, f"{xyz[0]:8.3f}")
    put(39, f"{xyz[1]:8.3f}")
    put(47, f"{xyz[2]:8.3f}")
    put(55, "  1.00  0.00")
    return "".join(cols)


def residue_block(resname, chain, resseq, N, CA, C, **kw):
    return [atom_line(a, resname, chain, resseq, x, **kw) for a, x in (("N", N), ("CA", CA), ("C", C))]


def test_single_residue_exact_coordinates():
    text = "\n".join(residue_block("GLY", "A", 7, (1.25, -2.5, 3.125), (0.0, 0.0, 0.0), (-10.5, 20.25, 999.999)))
    ch = parse_pdb_backbone(text, "A")
    assert len(ch) == 1
    r = ch.residues[0]
    assert r.resname == "GLY" and r.resseq == 7
    assert np.array_equal(r.N, [1.25, -2.5, 3.125])
    assert np.array_equal(r.C, [-10.5, 20.25, 999.999])


def test_missing_c_atom():
    text = "\n".join(residue_block("GLY", "A", 1, (0, 1, 0), (0, 0, 0), (1, 0, 0))[:2])
    with pytest.raises(IncompleteResidue):
        parse_pdb_backbone(text, "A")


def test_chain_not_found():
    text = "\n".join(residue_block("GLY", "A", 1, (0, 1, 0), (0, 0, 0), (1, 0, 0)))
    with pytest.raises(ChainNotFound):
        parse_pdb_backbone(text, "Z")


def test_malformed_records():
    good = residue_block("GLY", "A", 1, (0, 1, 0), (0, 0, 0), (1, 0, 0))
    with pytest.raises(MalformedAtomRecord) as e:
        parse_pdb_backbone("\n".join(good + [good[0][:40]]), "A")
    assert e.value.line_no == 4
    bad = good[0][:30] + "   x.yz " + good[0][38:]
    with pytest.raises(MalformedAtomRecord):
        parse_pdb_backbone(bad, "A")
    later = residue_block("GLY", "A", 5, (0, 1, 0), (0, 0, 0), (1, 0, 0))
    with pytest.raises(MalformedAtomRecord):
        parse_pdb_backbone("\n".join(later + good), "A")


def test_altloc_insertion_models_and_other_records():
    lines = ["HEADER    TEST", "MODEL        1"]
    lines += residue_block("ALA", "A", 1, (0, 1, 0), (0, 0, 0), (1, 0, 0), altloc="A")
    lines += residue_block("ALA", "A", 1, (5, 5, 5), (6, 6, 6), (7, 7, 7), altloc="B")
    lines += residue_block("SER", "A", 2, (0, 1, 0), (0, 0, 0), (1, 0, 0), icode="A")
    lines += [atom_line("CB", "ALA", "A", 1, (9, 9, 9))]
    lines += [atom_line("O", "HOH", "A", 90, (1, 1, 1), record="HETATM")]
    lines += residue_block("GLY", "B", 1, (0, 1, 0), (0, 0, 0), (1, 0, 0))
    lines += ["ENDMDL", "MODEL        2"]
    lines += residue_block("TRP", "A", 9, (0, 1, 0), (0, 0, 0), (1, 0, 0))
    ch = parse_pdb_backbone("\n".join(lines), "A")
    assert [r.resname for r in ch.residues] == ["ALA"]
    assert np.array_equal(ch.residues[0].CA, [0, 0, 0])
    assert ch.skipped_altloc == 3 and ch.skipped_insertion == 1
    assert len(ch.warnings) == 2


def test_frames_and_tokens():
    text = "\n".join(residue_block("GLY", "A", 1, (0, 1, 0), (0, 0, 0), (1, 0, 0)))
    frames, toks = chain_to_frames(parse_pdb_backbone(text, "A"))
    assert np.allclose(frames[0].R, np.eye(3)) and np.allclose(frames[0].t, 0)
    assert toks == [PROTEIN_VOCAB.id("G")]
    tsv = frames_tsv(parse_pdb_backbone(text, "A")).splitlines()
    assert tsv[0].split("\t")[:3] == ["resseq", "resname", "r00"] and len(tsv[0].split("\t")) == 14
    assert tsv[1].split("\t")[:3] == ["1", "GLY", "1.000000"]


def test_nonstandard_and_degenerate():
    text = "\n".join(residue_block("XYZ", "A", 1, (0, 1, 0), (0, 0, 0), (1, 0, 0)))
    with pytest.raises(NonStandardResidue):
        chain_to_frames(parse_pdb_backbone(text, "A"))
    text = "\n".join(residue_block("GLY", "A", 1, (2, 0, 0), (0, 0, 0), (1, 0, 0)))
    with pytest.raises(DegenerateBackbone):
        chain_to_frames(parse_pdb_backbone(text, "A"))


def test_rotated_file_gives_moved_frames(rng):
    r = 6
    CA = rng.standard_normal((r, 3)) * 8
    N, C = CA + rng.standard_normal((r, 3)), CA + rng.standard_normal((r, 3))
    Q, s = random_rotation(rng), rng.standard_normal(3) * 5

    def text(n, ca, c):
        lines = []
        for i in range(r):
            lines += residue_block(STANDARD[i], "A", i + 1, n[i], ca[i], c[i])
        return "\n".join(lines)

    f0, _ = chain_to_frames(parse_pdb_backbone(text(N, CA, C), "A"))
    f1, _ = chain_to_frames(parse_pdb_backbone(text(N @ Q.T + s, CA @ Q.T + s, C @ Q.T + s), "A"))
    # coordinates are rounded to 1e-3 on the way through the file
    for a, b in zip(f0, f1):
        assert np.abs(b.R - Q @ a.R).max() < 5e-3
        assert np.abs(b.t - (Q @ a.t + s)).max() < 2e-3
    pi = protein_input(parse_pdb_backbone(text(N, CA, C), "A"))
    assert pi.R.shape == (r, 3, 3) and pi.t.shape == (r, 3) and len(pi.tokens) == r


coord = st.integers(-999_999, 9_999_999).map(lambda v: v / 1000)
residue = st.tuples(st.sampled_from(STANDARD), st.tuples(coord, coord, coord),
                    st.tuples(coord, coord, coord), st.tuples(coord, coord, coord))


@given(st.lists(residue, min_size=1, max_size=8), st.sampled_from("ABXz1"), st.integers(-999, 9000))
def test_column_exact_parse_and_idempotent_write(res, chain, first):
    lines = []
    for i, (name, n, ca, c) in enumerate(res):
        lines += residue_block(name, chain, first + i, n, ca, c)
    parsed = parse_pdb_backbone("\n".join(lines), chain)
    assert [r.resname for r in parsed.residues] == [r[0] for r in res]
    assert [r.resseq for r in parsed.residues] == list(range(first, first + len(res)))
    for r, (_, n, ca, c) in zip(parsed.residues, res):
        assert tuple(r.N) == n and tuple(r.CA) == ca and tuple(r.C) == c
    out = write_pdb_backbone(parsed)
    again = parse_pdb_backbone(out, chain)
    assert write_pdb_backbone(again) == out
    assert [tuple(r.CA) for r in again.residues] == [tuple(r.CA) for r in parsed.residues]
