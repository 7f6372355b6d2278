"""The assembled image-to-graph model."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
from torch import nn

from .graph import RadiologyGraph
from .model import EntityHeadOutput, EntityHeads, ImageEncoder, ModelConfig, TokenDecoder, TokenSet, init_weights
from .pkg import AssimilationOutput, RelationModule, decode_graph, valid_tokens


@dataclass
class ForwardOutput:
    heads: EntityHeadOutput
    tokens: TokenSet


class RadGraphFormer(nn.Module):
    def __init__(self, cfg: ModelConfig, seed: int = 0):
        super().__init__()
        self.cfg = cfg
        self.encoder = ImageEncoder(cfg)
        self.decoder = TokenDecoder(cfg)
        self.heads = EntityHeads(cfg.d_model, cfg.num_classes)
        self.relation = RelationModule(cfg)
        init_weights(self, torch.Generator().manual_seed(seed))

    def forward(self, images: torch.Tensor) -> ForwardOutput:
        tokens = self.decoder(self.encoder(images))
        return ForwardOutput(self.heads(tokens), tokens)

    def relations(
        self, out: ForwardOutput, selections: Sequence[Sequence[int]], steps: int | None = None
    ) -> tuple[AssimilationOutput, torch.Tensor]:
        return self.relation(out.tokens, selections, steps)

    @torch.no_grad()
    def predict(self, images) -> list[RadiologyGraph]:
        images = torch.as_tensor(np.asarray(images, dtype=np.float64))
        if images.dim() == 2:
            images = images[None]
        out = self.forward(images)
        selections = [valid_tokens(out.heads.class_logits[b]) for b in range(images.shape[0])]
        rel, _ = self.relations(out, selections)
        last = rel.edge_coefficients[-1]
        return [
            decode_graph(out.heads.class_logits[b], out.heads.uncertainty_logits[b], sel, last[b])
            for b, sel in enumerate(selections)
        ]
