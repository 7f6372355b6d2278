"""Whole-model gradient audit on a tiny configuration.

The training loss is made a deterministic function of the parameters by
freezing the Hungarian assignment and re-seeding the background-edge sampler
on every evaluation, then compared against central finite differences.
"""
from __future__ import annotations

import numpy as np
import torch

from . import autodiff as ad
from .graph import RadiologyGraph, Uncertainty, make_graph
from .model import ModelConfig
from .network import RadGraphFormer
from .train import TrainConfig, compute_loss, match_batch

TOLERANCE = 1e-4


def tiny_config(mode: str = "prior") -> ModelConfig:
    return ModelConfig(
        num_queries=4,
        num_classes=5,
        d_model=8,
        dec_layers=1,
        heads=2,
        ff_dim=16,
        gt_layers=1,
        steps=2,
        image_size=16,
        patch=8,
        enc_channels=(4, 4),
        mode=mode,
    )


def random_problem(cfg: ModelConfig, batch: int = 2, seed: int = 0) -> tuple[torch.Tensor, list[RadiologyGraph]]:
    """Random images plus random valid graphs that fit the token budget."""
    rng = np.random.default_rng(seed)
    images = torch.as_tensor(rng.random((batch, cfg.image_size, cfg.image_size)), dtype=ad.DTYPE)
    levels = list(Uncertainty)
    graphs = []
    for _ in range(batch):
        k = int(rng.integers(2, cfg.num_queries + 1))
        ents = [(int(rng.integers(cfg.num_classes)), levels[int(rng.integers(3))]) for _ in range(k)]
        rels = {}
        for _ in range(k):
            h, t = (int(x) for x in rng.choice(k, size=2, replace=False))
            rels[(h, t)] = ("modify", "located_at", "suggestive_of")[int(rng.integers(3))]
        graphs.append(make_graph(ents, [(h, t, r) for (h, t), r in sorted(rels.items())]))
    return images, graphs


def model_gradcheck(
    cfg: ModelConfig | None = None,
    seed: int = 0,
    coords_per_param: int | None = None,
    eps: float = 1e-5,
) -> float:
    """Max relative error of the full training-loss gradient (all coordinates by default)."""
    cfg = cfg or tiny_config()
    model = RadGraphFormer(cfg, seed=seed)
    tcfg = TrainConfig(mode=cfg.mode, steps=cfg.steps, seed=seed)
    images, graphs = random_problem(cfg, seed=seed)
    with torch.no_grad():
        frozen = match_batch(model(images), graphs)

    def loss_fn() -> torch.Tensor:
        loss, _ = compute_loss(model, images, graphs, tcfg, np.random.default_rng(seed), matches=frozen)
        return loss

    params = [p for p in model.parameters() if p.requires_grad]
    return ad.finite_difference_check(loss_fn, params, eps=eps, coords_per_param=coords_per_param, seed=seed)
