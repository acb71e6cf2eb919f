import numpy as np
import pytest

from bang.cli import main
from bang.nn import checkpoint as ck
from bang.nn.model import TOY, Model
from bang.seqcore import read_fasta
from tests.test_structio import residue_block


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_dump_mask_five_by_five(capsys):
    code, out, _ = run(capsys, "dump-mask", "--m", "1", "--n", "1")
    assert code == 0
    assert out.splitlines() == ["L=5 anchors=1,2", "#####", ".####", ".##..", ".###.", "#####"]


def test_unknown_flag_exits_2(capsys):
    with pytest.raises(SystemExit) as e:
        main(["dump-mask", "--m", "1", "--n", "1", "--bogus"])
    assert e.value.code == 2
    assert "usage:" in capsys.readouterr().err


def test_runtime_error_exits_1(capsys, tmp_path):
    code, _, err = run(capsys, "info", "--checkpoint", str(tmp_path / "missing.ckpt"))
    assert code == 1 and err.startswith("bang: error:") and len(err.strip().splitlines()) == 1


def test_info_reports_toy_size(capsys, tmp_path):
    path = tmp_path / "toy.ckpt"
    ck.save(ck.Checkpoint.from_model(Model(TOY), step=0), path)
    code, out, _ = run(capsys, "info", "--checkpoint", str(path))
    assert code == 0
    assert "params ≈ 17.6k" in out
    assert "params\t17579" in out


def test_gen_data_is_seeded(capsys, tmp_path, monkeypatch):
    a, b, c = tmp_path / "a.fa", tmp_path / "b.fa", tmp_path / "c.fa"
    run(capsys, "gen-data", "--task", "DoubleBind", "--n", "20", "--seed", "3", "--out", str(a))
    monkeypatch.setenv("BANG_SEED", "3")
    run(capsys, "gen-data", "--task", "DoubleBind", "--n", "20", "--out", str(b))
    run(capsys, "gen-data", "--task", "DoubleBind", "--n", "20", "--seed", "4", "--out", str(c))
    assert a.read_text() == b.read_text() != c.read_text()
    recs = read_fasta(a.read_text())
    assert len(recs) == 20
    assert all("UGACUC" in r.residues or "CAAUUG" in r.residues for r in recs)


def test_train_generate_and_metrics(capsys, tmp_path):
    cfg = tmp_path / "t.cfg"
    cfg.write_text("# tiny run\nsteps = 20\nlr0 = 1e-3\nmodel.n_nucleotide_blocks = 1\ntask = DoubleBind\n")
    out1, out2 = tmp_path / "m1.ckpt", tmp_path / "m2.ckpt"
    for out in (out1, out2):
        code, _, err = run(capsys, "train", "--config", str(cfg), "--steps", "10", "--seed", "5",
                           "--log", str(tmp_path / "loss.tsv"), "--out", str(out))
        assert code == 0, err
    assert out1.read_bytes() == out2.read_bytes()
    c = ck.load(out1)
    assert c.meta["step"] == "10"             # flag beats config file
    assert c.meta["train.lr0"] == "0.001"     # config file beats preset
    assert c.config.n_nucleotide_blocks == 1
    assert c.meta["task"].startswith("DoubleBind")
    assert (tmp_path / "loss.tsv").read_text().startswith("step\tlr\tloss\n")

    fa1, fa2 = tmp_path / "g1.fa", tmp_path / "g2.fa"
    for fa in (fa1, fa2):
        code, _, err = run(capsys, "generate", "--checkpoint", str(out1), "--method", "bang", "--n", "5",
                           "--max-len", "12", "--seed", "8", "--out", str(fa))
        assert code == 0, err
    assert fa1.read_text() == fa2.read_text()
    assert len(read_fasta(fa1.read_text())) == 5

    pwm = tmp_path / "m.pwm"
    pwm.write_text("PWM L=2\n1\t0\t0\t0\n0\t1\t0\t0\n")
    code, out, err = run(capsys, "eval", "metrics", "--fasta", str(fa1), "--pwm", str(pwm),
                         "--reference", str(fa1))
    assert code == 0, err
    table = dict(line.split("\t") for line in out.splitlines()[1:])
    assert table["n"] == "5" and float(table["novelty_identity_approx"]) == 0.0
    assert 0 < float(table["diversity"]) <= 1


def test_generate_random_needs_no_checkpoint(capsys, tmp_path):
    code, _, _ = run(capsys, "generate", "--method", "random", "--n", "50", "--seed", "1",
                     "--out", str(tmp_path / "r.fa"))
    assert code == 0
    lens = [len(r.residues) for r in read_fasta((tmp_path / "r.fa").read_text())]
    assert len(lens) == 50 and 40 <= min(lens) and max(lens) <= 50
    code, _, err = run(capsys, "generate", "--method", "bang", "--n", "1")
    assert code == 1 and "--checkpoint" in err


def test_frames(capsys, tmp_path):
    pdb = tmp_path / "x.pdb"
    pdb.write_text("\n".join(residue_block("GLY", "A", 1, (0, 1, 0), (0, 0, 0), (1, 0, 0))
                             + residue_block("ALA", "A", 2, (3, 1, 0), (3, 0, 0), (4, 0, 1))) + "\n")
    code, out, _ = run(capsys, "frames", "--pdb", str(pdb), "--chain", "A")
    rows = out.splitlines()
    assert code == 0 and len(rows) == 3
    assert rows[1].split("\t")[2:11] == ["1.000000", "0.000000", "0.000000", "0.000000", "1.000000",
                                        "0.000000", "0.000000", "0.000000", "1.000000"]
    code, _, err = run(capsys, "frames", "--pdb", str(pdb), "--chain", "Q")
    assert code == 1 and "chain" in err


def test_eval_synth_random_cell(capsys, tmp_path):
    code, out, err = run(capsys, "eval", "synth", "--tasks", "SingleBind", "--methods", "random",
                         "--n", "200", "--seeds", "0,1", "--cache", str(tmp_path))
    assert code == 0, err
    lines = out.splitlines()
    assert lines[0].startswith("task\tmethod\tseed") and len(lines) == 3
