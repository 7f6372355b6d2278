import json

import pytest
import torch

from radgraphgen.checkpoint import CheckpointError, blob_path, load_checkpoint, load_into, save_checkpoint
from radgraphgen.model import ModelConfig
from radgraphgen.network import RadGraphFormer

CFG = dict(num_queries=6, d_model=16, dec_layers=1, heads=2, ff_dim=32, gt_layers=1, enc_channels=(4, 8))


@pytest.fixture
def saved(tmp_path):
    model = RadGraphFormer(ModelConfig(**CFG), seed=2)
    path = save_checkpoint(model, tmp_path / "ck.json", extra={"model": {"d_model": 16}})
    return model, path


def test_roundtrip_bit_exact(saved):
    model, path = saved
    params, manifest = load_checkpoint(path)
    assert manifest["dtype"] == "f64" and manifest["endianness"] == "little"
    assert manifest["model"] == {"d_model": 16}
    own = dict(model.named_parameters())
    assert list(params) == list(own)
    for name, value in params.items():
        assert value.dtype == torch.float64
        assert value.numpy().tobytes() == own[name].detach().numpy().tobytes()
    fresh = load_into(RadGraphFormer(ModelConfig(**CFG), seed=9), params)
    for a, b in zip(fresh.parameters(), model.parameters()):
        assert torch.equal(a, b)


def test_truncated_blob(saved):
    _, path = saved
    blob = blob_path(path)
    blob.write_bytes(blob.read_bytes()[:-8])
    with pytest.raises(CheckpointError, match="blob length mismatch"):
        load_checkpoint(path)


def test_corrupt_manifest(saved):
    _, path = saved
    path.write_text("{not json")
    with pytest.raises(CheckpointError, match="corrupt manifest"):
        load_checkpoint(path)


def test_bad_offset(saved):
    _, path = saved
    manifest = json.loads(path.read_text())
    manifest["params"][1]["offset"] += 1
    path.write_text(json.dumps(manifest))
    with pytest.raises(CheckpointError, match="offset"):
        load_checkpoint(path)


def test_class_count_mismatch_names_parameter(saved):
    _, path = saved
    params, _ = load_checkpoint(path)
    other = RadGraphFormer(ModelConfig(**{**CFG, "num_classes": 7}))
    with pytest.raises(CheckpointError, match=r"shape mismatch for parameter heads\.cls\.weight"):
        load_into(other, params)


def test_mode_mismatch_names_parameters(saved):
    _, path = saved
    params, _ = load_checkpoint(path)
    with pytest.raises(CheckpointError, match="relation.rel_head"):
        load_into(RadGraphFormer(ModelConfig(**{**CFG, "mode": "vanilla"})), params)
