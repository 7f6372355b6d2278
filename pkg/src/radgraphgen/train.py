"""Training loop: matching, loss assembly, AdamW optimization and evaluation."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch

from . import autodiff as ad
from .dataset import Sample
from .graph import NO_RELATION, RadiologyGraph
from .losses import (
    LossParts,
    LossWeights,
    aecs_loss,
    focal_loss,
    stochastic_relation_loss,
    total_loss,
    uncertainty_ce_loss,
)
from .matching import MatchResult, hungarian_match
from .metrics import entity_micro_prf, relation_micro_prf
from .model import MODES, ModelConfig
from .network import ForwardOutput, RadGraphFormer

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    mode: str = "prior"
    steps: int = 2
    fg_bg_ratio: int = 3
    gamma: float = 2.0
    lr: float = 1e-4
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 1e-4
    batch_size: int = 32
    epochs: int = 1
    max_steps: int | None = None
    eval_every: int = 1
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)

    def __post_init__(self):
        self.betas = tuple(self.betas)
        if isinstance(self.weights, dict):
            self.weights = LossWeights(**self.weights)
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.fg_bg_ratio <= 0:
            raise ValueError("fg_bg_ratio must be positive")
        if self.batch_size <= 0 or self.epochs < 0 or self.steps < 1 or self.eval_every < 1:
            raise ValueError("batch_size > 0, epochs >= 0, steps >= 1 and eval_every >= 1 required")

    @property
    def uses_aecs(self) -> bool:
        return self.mode in ("prior", "prior_no_pkg")


def relation_targets(graph: RadiologyGraph) -> np.ndarray:
    """(E, E) relation index matrix in gt-entity order; NO_RELATION elsewhere."""
    n = len(graph.entities)
    target = np.full((n, n), NO_RELATION, dtype=np.int64)
    for r in graph.relations:
        target[r.head, r.tail] = r.type.index
    return target


def match_batch(out: ForwardOutput, graphs: Sequence[RadiologyGraph]) -> list[MatchResult]:
    with torch.no_grad():
        cp = ad.softmax(out.heads.class_logits).numpy()
        up = ad.softmax(out.heads.uncertainty_logits).numpy()
    return [hungarian_match(cp[b], up[b], g) for b, g in enumerate(graphs)]


def compute_loss(
    model: RadGraphFormer,
    images: torch.Tensor,
    graphs: Sequence[RadiologyGraph],
    cfg: TrainConfig,
    rng: np.random.Generator,
    matches: Sequence[MatchResult] | None = None,
) -> tuple[torch.Tensor, LossParts]:
    """Weighted training loss for one batch; ``matches`` overrides the Hungarian step."""
    out = model(images)
    c = model.cfg.num_classes
    b, n = out.heads.class_logits.shape[:2]
    if matches is None:
        matches = match_batch(out, graphs)

    cls_target = torch.full((b, n), c, dtype=torch.long)
    unc_rows, unc_target, selections = [], [], []
    for i, (m, g) in enumerate(zip(matches, graphs)):
        for t, j in m.assignment:
            e = g.entities[j]
            cls_target[i, t] = e.class_id
            unc_rows.append(out.heads.uncertainty_logits[i, t])
            unc_target.append(e.uncertainty.index)
        # selection ordered by gt entity index, so node j <-> gt entity j
        selections.append([t for t, _ in m.assignment])

    focal = focal_loss(out.heads.class_logits, cls_target, cfg.gamma)
    unc = uncertainty_ce_loss(
        torch.stack(unc_rows) if unc_rows else torch.zeros(0, 3), torch.as_tensor(unc_target, dtype=torch.long)
    )
    rel_out, mask = model.relations(out, selections, cfg.steps)
    relation = stochastic_relation_loss(
        rel_out.edge_logits, [relation_targets(g) for g in graphs], cfg.fg_bg_ratio, rng
    )
    aecs = torch.zeros(())
    if cfg.uses_aecs and rel_out.node_logits:
        node_target = torch.zeros(mask.shape, dtype=torch.long)
        for i, g in enumerate(graphs):
            for j, e in enumerate(g.entities):
                node_target[i, j] = e.class_id
        aecs = aecs_loss(rel_out.node_logits, node_target, mask)
    parts = LossParts(focal, unc, relation, aecs)
    return total_loss(parts, cfg.weights), parts


def stack_images(samples: Sequence[Sample]) -> torch.Tensor:
    return torch.as_tensor(np.stack([s.image for s in samples]), dtype=ad.DTYPE)


def predict_graphs(model: RadGraphFormer, samples: Sequence[Sample], batch_size: int = 64) -> list[RadiologyGraph]:
    model.eval()
    preds: list[RadiologyGraph] = []
    for k in range(0, len(samples), batch_size):
        preds.extend(model.predict(stack_images(samples[k : k + batch_size])))
    return preds


def evaluate(model: RadGraphFormer, samples: Sequence[Sample]) -> dict[str, float]:
    preds = predict_graphs(model, samples)
    gts = [s.graph for s in samples]
    return {
        "entity_f1": entity_micro_prf(preds, gts).f1,
        "relation_f1": relation_micro_prf(preds, gts).f1,
    }


def build_model(model_cfg: ModelConfig, train_cfg: TrainConfig) -> RadGraphFormer:
    if model_cfg.mode != train_cfg.mode or model_cfg.steps != train_cfg.steps:
        model_cfg = ModelConfig(**{**model_cfg.__dict__, "mode": train_cfg.mode, "steps": train_cfg.steps})
    return RadGraphFormer(model_cfg, seed=train_cfg.seed)


def fit(
    train: Sequence[Sample],
    cfg: TrainConfig,
    model_cfg: ModelConfig | None = None,
    val: Sequence[Sample] | None = None,
    model: RadGraphFormer | None = None,
    log_path: str | Path | None = None,
    on_epoch: Callable[[dict], None] | None = None,
) -> tuple[RadGraphFormer, list[dict]]:
    """Train with AdamW; returns the model and one metrics record per evaluated epoch.

    ``on_epoch`` receives each record; returning True stops training early.

    RNG draw order (single numpy stream seeded with ``cfg.seed``): per epoch
    one permutation of the training indices, then per batch the background
    edge draws of each sample in batch order.
    """
    if not train:
        raise ValueError("training dataset is empty")
    model = model or build_model(model_cfg or ModelConfig(), cfg)
    n = model.cfg.num_queries
    for s in train:
        if len(s.graph.entities) > n:
            raise ValueError(f"sample {s.name or '?'} has {len(s.graph.entities)} entities > {n} tokens")
    val = val if val is not None else train
    rng = np.random.default_rng(cfg.seed)
    opt = torch.optim.AdamW(
        model.parameters(), lr=cfg.lr, betas=cfg.betas, eps=cfg.eps, weight_decay=cfg.weight_decay
    )
    history: list[dict] = []
    sink = open(log_path, "w", encoding="utf-8") if log_path else None
    step = 0
    try:
        for epoch in range(cfg.epochs):
            model.train()
            order = rng.permutation(len(train))
            losses = []
            for k in range(0, len(order), cfg.batch_size):
                if cfg.max_steps is not None and step >= cfg.max_steps:
                    break
                batch = [train[i] for i in order[k : k + cfg.batch_size]]
                opt.zero_grad()
                loss, _ = compute_loss(model, stack_images(batch), [s.graph for s in batch], cfg, rng)
                ad.backward(loss)
                opt.step()
                losses.append(float(loss.detach()))
                step += 1
            done = cfg.max_steps is not None and step >= cfg.max_steps
            if (epoch + 1) % cfg.eval_every and epoch != cfg.epochs - 1 and not done:
                continue
            record = {"epoch": epoch, "loss": float(np.mean(losses)) if losses else float("nan"), **evaluate(model, val)}
            history.append(record)
            log.info("epoch %d loss %.4f entity_f1 %.4f relation_f1 %.4f", epoch, record["loss"], record["entity_f1"], record["relation_f1"])
            if sink:
                sink.write(json.dumps(record) + "\n")
                sink.flush()
            if on_epoch and on_epoch(record):
                break
            if cfg.max_steps is not None and step >= cfg.max_steps:
                break
    finally:
        if sink:
            sink.close()
    return model, history
