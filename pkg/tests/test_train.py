import json

import numpy as np
import pytest
import torch

from radgraphgen.dataset import synthetic_samples
from radgraphgen.gradcheck import TOLERANCE, model_gradcheck, random_problem, tiny_config
from radgraphgen.graph import NO_RELATION, make_graph
from radgraphgen.model import ModelConfig
from radgraphgen.network import RadGraphFormer
from radgraphgen.train import TrainConfig, build_model, compute_loss, evaluate, fit, relation_targets

SMALL = dict(num_queries=16, d_model=16, dec_layers=1, heads=2, ff_dim=32, gt_layers=1, enc_channels=(4, 8))


@pytest.fixture(scope="module")
def data():
    return synthetic_samples(8, seed=11)


def params_of(model):
    return [p.detach().clone() for p in model.parameters()]


def test_relation_targets():
    g = make_graph([(0, "uncertain"), (1, "uncertain"), (2, "uncertain")], [(0, 2, "suggestive_of"), (1, 0, "modify")])
    t = relation_targets(g)
    expected = np.full((3, 3), NO_RELATION)
    expected[0, 2], expected[1, 0] = 2, 0
    assert np.array_equal(t, expected)


def test_zero_epochs_leave_parameters(data, tmp_path):
    cfg = TrainConfig(epochs=0)
    model = build_model(ModelConfig(**SMALL), cfg)
    before = params_of(model)
    model, history = fit(data, cfg, model=model, log_path=tmp_path / "log.jsonl")
    assert history == []
    assert (tmp_path / "log.jsonl").read_text() == ""
    assert all(torch.equal(a, b) for a, b in zip(before, model.parameters()))


def test_same_seed_bit_identical(data, tmp_path):
    cfg = TrainConfig(epochs=2, batch_size=4, seed=5)
    runs = []
    for k in range(2):
        model, hist = fit(data, cfg, ModelConfig(**SMALL), log_path=tmp_path / f"{k}.jsonl")
        runs.append((params_of(model), hist))
    assert all(torch.equal(a, b) for a, b in zip(runs[0][0], runs[1][0]))
    assert runs[0][1] == runs[1][1]
    assert (tmp_path / "0.jsonl").read_bytes() == (tmp_path / "1.jsonl").read_bytes()
    assert [r["epoch"] for r in runs[0][1]] == [0, 1]


def test_log_records(data, tmp_path):
    _, hist = fit(data, TrainConfig(epochs=3, eval_every=2), ModelConfig(**SMALL), log_path=tmp_path / "l.jsonl")
    lines = [json.loads(x) for x in (tmp_path / "l.jsonl").read_text().splitlines()]
    assert lines == hist
    assert [r["epoch"] for r in hist] == [1, 2]
    assert set(hist[0]) == {"epoch", "loss", "entity_f1", "relation_f1"}


def test_max_steps_and_early_stop(data):
    _, hist = fit(data, TrainConfig(epochs=50, batch_size=4, max_steps=3), ModelConfig(**SMALL))
    assert hist[-1]["epoch"] == 1
    _, hist = fit(data, TrainConfig(epochs=50, batch_size=8), ModelConfig(**SMALL), on_epoch=lambda r: r["epoch"] >= 2)
    assert len(hist) == 3


@pytest.mark.parametrize("mode", ["prior", "prior_no_aecs", "prior_no_pkg", "vanilla"])
def test_aecs_switch(data, mode):
    cfg = TrainConfig(mode=mode)
    model = build_model(ModelConfig(**SMALL), cfg)
    images = torch.as_tensor(np.stack([s.image for s in data[:2]]))
    loss, parts = compute_loss(model, images, [s.graph for s in data[:2]], cfg, np.random.default_rng(0))
    values = parts.as_floats()
    assert torch.isfinite(loss)
    if mode in ("prior", "prior_no_pkg"):
        assert values["aecs"] > 0
    else:
        assert values["aecs"] == 0.0
    assert values["relation"] > 0


def test_training_reduces_loss(data):
    _, hist = fit(data, TrainConfig(epochs=8, batch_size=8, lr=1e-3), ModelConfig(**SMALL))
    assert hist[-1]["loss"] < hist[0]["loss"]


def test_too_many_entities_rejected(data):
    with pytest.raises(ValueError, match="entities"):
        fit(data, TrainConfig(epochs=1), ModelConfig(**{**SMALL, "num_queries": 3}))


def test_evaluate_on_ground_truth_shape(data):
    model = RadGraphFormer(ModelConfig(**SMALL))
    out = evaluate(model, data)
    assert set(out) == {"entity_f1", "relation_f1"}


def test_random_problem_graphs_fit_tiny_config():
    cfg = tiny_config()
    images, graphs = random_problem(cfg, batch=5, seed=3)
    assert images.shape == (5, 16, 16)
    for g in graphs:
        g.validate(cfg.num_classes)
        assert len(g.entities) <= cfg.num_queries


@pytest.mark.parametrize("mode", ["prior", "prior_no_aecs", "prior_no_pkg", "vanilla"])
def test_model_gradcheck_sampled(mode):
    assert model_gradcheck(tiny_config(mode), coords_per_param=4) < TOLERANCE
