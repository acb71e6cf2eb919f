import numpy as np
import pytest

from bang.errors import CheckpointError
from bang.nn import checkpoint as ck
from bang.nn.model import TOY, Model
from tests.test_model import SMALL_COND


@pytest.mark.parametrize("cfg", [TOY, SMALL_COND], ids=["toy", "conditioned"])
def test_roundtrip_preserves_config_weights_and_meta(cfg, tmp_path):
    model = Model(cfg, seed=5)
    c = ck.Checkpoint.from_model(model, step=12, seed=5, objective="bang")
    path = tmp_path / "m.ckpt"
    ck.save(c, path)
    back = ck.load(path)
    assert back.config == cfg
    assert back.meta == {"step": "12", "seed": "5", "objective": "bang"}
    m2 = back.to_model()
    for k, v in model.params.items():
        assert np.array_equal(m2.params[k], v)
    assert back.param_count() == model.param_count()


def test_load_then_save_is_byte_identical(tmp_path):
    blob = ck.dumps(ck.Checkpoint.from_model(Model(SMALL_COND, seed=1), step=3))
    assert ck.dumps(ck.loads(blob)) == blob
    assert blob.startswith(b"BANGCKPT 1\n")


def test_every_weight_present_once():
    c = ck.Checkpoint.from_model(Model(TOY))
    head = ck.dumps(c).split(b"\n", 2)[2]
    names = [ln.split(b"=")[0] for ln in head.split(b"\n") if ln.startswith(b"tensor.")]
    assert len(names) == len(set(names)) == len(Model(TOY).params)


def test_errors():
    blob = ck.dumps(ck.Checkpoint.from_model(Model(TOY)))
    with pytest.raises(CheckpointError):
        ck.loads(b"garbage")
    with pytest.raises(CheckpointError):
        ck.loads(blob.replace(b"BANGCKPT", b"NOTACKPT", 1))
    with pytest.raises(CheckpointError):
        ck.loads(blob.replace(b"BANGCKPT 1", b"BANGCKPT 9", 1))
    with pytest.raises(CheckpointError):
        ck.loads(blob[:-8])
    c = ck.loads(blob)
    c.tensors.pop(next(iter(c.tensors)))
    with pytest.raises(CheckpointError):
        c.to_model()
    with pytest.raises(CheckpointError):
        ck.dumps(ck.Checkpoint(TOY, {}, {"bad": "two\nlines"}))
