import numpy as np
import pytest

from bang.errors import MissingConditioning
from bang.maskgen import CONTENT, NONE, target_rows
from bang.nn.geometry import frames_from_backbone
from bang.nn.model import FULL, TOY, Model, ModelConfig, ProteinInput, param_count
from bang.training.data import NUC_IDS, bang_batch, bang_layout

SMALL_COND = ModelConfig(c_s=16, c_h=8, heads=2, n_protein_blocks=1, n_nucleotide_blocks=3,
                         use_cross=True, use_geometric=True, n_query_points=2, n_value_points=2)


def protein(rng, r=5):
    CA = rng.standard_normal((r, 3)) * 3
    f = frames_from_backbone(CA + rng.standard_normal((r, 3)), CA, CA + rng.standard_normal((r, 3)))
    return ProteinInput(rng.integers(1, 21, r), f.R, f.t)


def test_toy_param_count_near_17k():
    n = param_count(TOY)
    assert n == Model(TOY).param_count()
    assert abs(n - 17_000) <= 0.25 * 17_000


def test_full_param_count_near_14_5M():
    n = param_count(FULL)
    assert abs(n - 14_500_000) <= 0.10 * 14_500_000


def test_param_count_matches_built_model_with_conditioning():
    assert param_count(SMALL_COND) == Model(SMALL_COND).param_count()


def test_doubling_blocks_doubles_block_params():
    a = param_count(TOY.with_(n_nucleotide_blocks=1))
    b = param_count(TOY.with_(n_nucleotide_blocks=2))
    c = param_count(TOY.with_(n_nucleotide_blocks=4))
    assert c - a == 3 * (b - a)


def test_missing_conditioning():
    m = Model(SMALL_COND, dtype=np.float64)
    batch = bang_batch([[7, 8, 9]], [1])
    with pytest.raises(MissingConditioning):
        m.forward(batch.inp)


def test_logits_finite_and_shaped(rng):
    m = Model(SMALL_COND, dtype=np.float64)
    batch = bang_batch([list(rng.choice(NUC_IDS, 9)), list(rng.choice(NUC_IDS, 4))], [3, -1])
    out = m.forward(batch.inp, protein(rng))
    assert out.shape == batch.inp.tokens.shape + (SMALL_COND.nuc_vocab,)
    assert np.all(np.isfinite(out))


def test_forward_is_deterministic(rng):
    toks = [list(rng.choice(NUC_IDS, 8))]
    a = Model(TOY, seed=3).forward(bang_batch(toks, [2]).inp)
    b = Model(TOY, seed=3).forward(bang_batch(toks, [2]).inp)
    assert np.array_equal(a, b)


def _allowed_offsets(o):
    """Content offsets the factor for the token at offset `o` may see."""
    if o >= 0:
        return -o + 1, o - 1
    return o + 1, -o


def _leak_drift(model, rng, trials, prot=None):
    worst = 0.0
    for _ in range(trials):
        L = int(rng.integers(1, 13))
        toks = list(rng.choice(NUC_IDS, L))
        after = int(rng.integers(-1, L))
        tokens, role, offset = bang_layout([toks], [after])
        batch = bang_batch([toks], [after])
        rows = np.flatnonzero(batch.targets[0] != NONE)
        p = int(rng.choice(rows))
        tgt = int(target_rows(role, offset)[0, p])
        lo, hi = _allowed_offsets(int(offset[0, tgt]))
        content = role[0] == CONTENT
        hidden = content & ~((offset[0] >= lo) & (offset[0] <= hi))
        ref = model.forward(batch.inp, prot)[0, p]
        noisy = batch.inp.tokens.copy()
        noisy[0, hidden] = rng.choice(NUC_IDS, int(hidden.sum()))
        batch.inp.tokens = noisy
        out = model.forward(batch.inp, prot)[0, p]
        worst = max(worst, float(np.abs(out - ref).max()))
    return worst


def test_anti_leakage_thousand_trials(rng):
    model = Model(TOY.with_(n_nucleotide_blocks=3), seed=1, dtype=np.float64)
    assert _leak_drift(model, rng, 1000) <= 1e-6


def test_anti_leakage_conditioned(rng):
    model = Model(SMALL_COND, seed=2, dtype=np.float64)
    assert _leak_drift(model, rng, 150, protein(rng)) <= 1e-6


def test_visible_tokens_do_change_logits(rng):
    # sanity check on the harness: the drift is not zero because nothing flows
    model = Model(TOY, seed=1, dtype=np.float64)
    toks = [9, 10, 7, 8, 9, 10]
    batch = bang_batch([toks], [2])
    ancr = int(np.flatnonzero(batch.inp.tokens[0] == 3)[0])
    row = ancr + 2          # right x_1 predicts x_2, sees x_-1 .. x_1
    ref = model.forward(batch.inp)[0, row]
    batch.inp.tokens[0, ancr - 2] = 7 if toks[2] != 7 else 8
    assert np.abs(model.forward(batch.inp)[0, row] - ref).max() > 1e-6
