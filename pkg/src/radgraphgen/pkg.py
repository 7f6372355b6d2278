"""Prior-knowledge integration: initial embedding graph, graph transformer
stack, schemata assimilation, the relation heads of the ablation variants, and
decoding of model outputs into a :class:`RadiologyGraph`.

Tensors are padded per batch: nodes ``(B, K, d)``, edges ``(B, K, K, d)`` and
a boolean node mask ``(B, K)``. Edge slots on the diagonal or touching a
padded node are kept at zero.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch
from torch import nn

from . import autodiff as ad
from .graph import (
    NO_RELATION,
    NUM_RELATION_TYPES,
    Entity,
    RadiologyGraph,
    Relation,
    RelationType,
    Uncertainty,
)
from .model import FeedForward, ModelConfig, TokenSet

NUM_EDGE_CLASSES = NUM_RELATION_TYPES + 1


@dataclass
class InitialGraph:
    nodes: torch.Tensor  # (B, K, d)
    edges: torch.Tensor  # (B, K, K, d)
    mask: torch.Tensor  # (B, K) bool

    @property
    def pair_mask(self) -> torch.Tensor:
        """(B, K, K) True for ordered pairs i != j of real nodes."""
        m = self.mask[:, :, None] & self.mask[:, None, :]
        eye = torch.eye(self.mask.shape[1], dtype=torch.bool)
        return m & ~eye


@dataclass
class AssimilationOutput:
    """Per-step classification logits; coefficients are their softmax."""

    node_logits: list[torch.Tensor] = field(default_factory=list)  # each (B, K, C)
    edge_logits: list[torch.Tensor] = field(default_factory=list)  # each (B, K, K, 4)
    nodes: torch.Tensor | None = None
    edges: torch.Tensor | None = None

    @property
    def node_coefficients(self) -> list[torch.Tensor]:
        return [ad.softmax(x) for x in self.node_logits]

    @property
    def edge_coefficients(self) -> list[torch.Tensor]:
        return [ad.softmax(x) for x in self.edge_logits]


def gather_selection(tokens: TokenSet, selections: Sequence[Sequence[int]]):
    """Pad selected entity tokens per sample. Returns (ent (B,K,d), mask (B,K))."""
    n = tokens.ent_tokens.shape[1]
    k = max(1, max((len(s) for s in selections), default=0))
    b, d = tokens.ent_tokens.shape[0], tokens.ent_tokens.shape[2]
    index = torch.zeros(b, k, dtype=torch.long)
    mask = torch.zeros(b, k, dtype=torch.bool)
    for i, sel in enumerate(selections):
        sel = list(sel)
        if any(not 0 <= t < n for t in sel):
            raise IndexError(f"token index out of range 0..{n - 1}: {sel}")
        index[i, : len(sel)] = torch.as_tensor(sel, dtype=torch.long)
        mask[i, : len(sel)] = True
    ent = torch.gather(tokens.ent_tokens, 1, index[:, :, None].expand(b, k, d))
    return ent * mask[:, :, None], mask


def pair_features(ent: torch.Tensor, rln: torch.Tensor) -> torch.Tensor:
    """concat(ent_i, rln, ent_j) for every ordered pair: (B, K, K, 3d)."""
    b, k, d = ent.shape
    head = ent[:, :, None, :].expand(b, k, k, d)
    tail = ent[:, None, :, :].expand(b, k, k, d)
    mid = rln[:, None, None, :].expand(b, k, k, d)
    return ad.concat([head, mid, tail])


class EdgeProjection(nn.Module):
    """MLP projecting concat(ent_i, rln, ent_j) to the node width."""

    def __init__(self, d: int):
        super().__init__()
        self.mlp = FeedForward(3 * d, d, d)

    def forward(self, pairs):
        return self.mlp(pairs)


def build_initial_graph(
    tokens: TokenSet, selections: Sequence[Sequence[int]], proj: EdgeProjection
) -> InitialGraph:
    if any(len(s) == 0 for s in selections):
        raise ValueError("no valid entities: empty selection")
    ent, mask = gather_selection(tokens, selections)
    g = InitialGraph(ent, None, mask)
    edges = proj(pair_features(ent, tokens.rln_token))
    g.edges = edges * g.pair_mask[..., None]
    return g


class GraphTransformerLayer(nn.Module):
    """Edge-biased multi-head node attention followed by an edge update."""

    def __init__(self, d: int, heads: int, ff: int):
        super().__init__()
        self.heads = heads
        self.dh = d // heads
        self.q = nn.Linear(d, d)
        self.k = nn.Linear(d, d)
        self.v = nn.Linear(d, d)
        self.o = nn.Linear(d, d)
        self.edge_in = nn.Linear(d, d)
        self.edge_score = nn.Parameter(torch.randn(heads, d // heads) * 0.1)
        self.node_norm1 = ad.LayerNorm(d)
        self.node_norm2 = ad.LayerNorm(d)
        self.node_ffn = FeedForward(d, ff)
        self.edge_cat = nn.Linear(3 * d, d)
        self.edge_norm = ad.LayerNorm(d)
        self.edge_ffn = FeedForward(d, ff)

    def node_attention(self, nodes, edges, mask, pair_mask):
        b, k, d = nodes.shape
        split = lambda x: x.reshape(b, k, self.heads, self.dh).transpose(1, 2)  # noqa: E731
        q, kk, v = split(self.q(nodes)), split(self.k(nodes)), split(self.v(nodes))
        scores = ad.matmul(q, kk.transpose(-1, -2)) / math.sqrt(self.dh)  # (B, h, K, K)
        e = self.edge_in(edges).reshape(b, k, k, self.heads, self.dh)
        bias = (e * self.edge_score).sum(-1).permute(0, 3, 1, 2)  # (B, h, K, K)
        bias = bias * pair_mask[:, None]
        scores = (scores + bias).masked_fill(~mask[:, None, None, :], -1e30)
        attn = ad.softmax(scores)
        out = ad.matmul(attn, v).transpose(1, 2).reshape(b, k, d)
        return self.o(out), attn

    def forward(self, nodes, edges, mask, pair_mask):
        att, _ = self.node_attention(nodes, edges, mask, pair_mask)
        n = self.node_norm1(nodes + att)
        n = self.node_norm2(n + self.node_ffn(n))
        n = n * mask[:, :, None]
        b, k, d = n.shape
        cat = ad.concat([n[:, :, None, :].expand(b, k, k, d), edges, n[:, None, :, :].expand(b, k, k, d)])
        e = edges + self.edge_ffn(self.edge_norm(self.edge_cat(cat)))
        return n, e * pair_mask[..., None]


def graph_transformer_step(layer: GraphTransformerLayer, g: InitialGraph) -> InitialGraph:
    nodes, edges = layer(g.nodes, g.edges, g.mask, g.pair_mask)
    return InitialGraph(nodes, edges, g.mask)


class Assimilation(nn.Module):
    """Attention from features to schemata rows; coefficients are the class scores."""

    def __init__(self, d: int):
        super().__init__()
        self.d = d
        self.q = nn.Linear(d, d, bias=False)
        self.k = nn.Linear(d, d, bias=False)
        self.v = nn.Linear(d, d, bias=False)

    def logits(self, features, schemata):
        return ad.matmul(self.q(features), self.k(schemata).transpose(0, 1)) / math.sqrt(self.d)

    def forward(self, features, schemata):
        """Returns (logits, coefficients, features + coefficients @ (schemata W_v))."""
        lg = self.logits(features, schemata)
        coef = ad.softmax(lg)
        return lg, coef, features + ad.matmul(coef, self.v(schemata))


def assimilation_step(module: Assimilation, features, schemata):
    _, coef, out = module(features, schemata)
    return coef, out


class PriorKnowledge(nn.Module):
    """Schemata plus node/edge assimilation (separate projection weights)."""

    def __init__(self, d: int, num_classes: int):
        super().__init__()
        self.node_schemata = nn.Parameter(torch.randn(num_classes, d))
        self.edge_schemata = nn.Parameter(torch.randn(NUM_EDGE_CLASSES, d))
        self.node_assim = Assimilation(d)
        self.edge_assim = Assimilation(d)

    def forward(self, nodes, edges, steps: int) -> AssimilationOutput:
        out = AssimilationOutput()
        for _ in range(steps):
            nl, _, nodes = self.node_assim(nodes, self.node_schemata)
            el, _, edges = self.edge_assim(edges, self.edge_schemata)
            out.node_logits.append(nl)
            out.edge_logits.append(el)
        out.nodes, out.edges = nodes, edges
        return out


class RelationModule(nn.Module):
    """Everything after the decoder, switched by ablation mode.

    * ``vanilla``: MLP over concat(ent_i, rln, ent_j) gives edge logits.
    * ``prior_no_pkg``: graph transformers, then linear node/edge classifiers.
    * ``prior`` / ``prior_no_aecs``: graph transformers + schemata assimilation.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        d = cfg.d_model
        self.mode = cfg.mode
        self.steps = cfg.steps
        if cfg.mode == "vanilla":
            self.rel_head = FeedForward(3 * d, d, NUM_EDGE_CLASSES)
            return
        self.proj = EdgeProjection(d)
        self.gt_layers = nn.ModuleList(GraphTransformerLayer(d, cfg.heads, cfg.ff_dim) for _ in range(cfg.gt_layers))
        if cfg.mode == "prior_no_pkg":
            self.node_cls = nn.Linear(d, cfg.num_classes)
            self.edge_cls = nn.Linear(d, NUM_EDGE_CLASSES)
        else:
            self.prior = PriorKnowledge(d, cfg.num_classes)

    def forward(self, tokens: TokenSet, selections: Sequence[Sequence[int]], steps: int | None = None):
        """Returns (AssimilationOutput, node mask). Empty selections yield all-masked rows."""
        steps = self.steps if steps is None else steps
        if self.mode == "vanilla":
            ent, mask = gather_selection(tokens, selections)
            logits = self.rel_head(pair_features(ent, tokens.rln_token))
            return AssimilationOutput(edge_logits=[logits]), mask
        ent, mask = gather_selection(tokens, selections)
        g = InitialGraph(ent, None, mask)
        g.edges = self.proj(pair_features(ent, tokens.rln_token)) * g.pair_mask[..., None]
        for layer in self.gt_layers:
            g = graph_transformer_step(layer, g)
        if self.mode == "prior_no_pkg":
            return AssimilationOutput([self.node_cls(g.nodes)], [self.edge_cls(g.edges)], g.nodes, g.edges), mask
        return pkg_forward(self.prior, g, steps), mask


def pkg_forward(prior: PriorKnowledge, initial: InitialGraph, steps: int) -> AssimilationOutput:
    if steps < 1:
        raise ValueError("steps must be >= 1")
    return prior(initial.nodes, initial.edges, steps)


# --- decoding -----------------------------------------------------------------


def valid_tokens(class_logits: torch.Tensor) -> list[int]:
    """Token indices whose class argmax is not the trailing no-entity column."""
    arg = class_logits.argmax(-1)
    return [int(i) for i in torch.nonzero(arg != class_logits.shape[-1] - 1).flatten()]


def decode_graph(
    class_logits: torch.Tensor,
    uncertainty_logits: torch.Tensor,
    selection: Sequence[int],
    last_edge_coefficients: torch.Tensor | np.ndarray | None,
) -> RadiologyGraph:
    """Turn one sample's head outputs and last-step edge scores into a graph.

    ``selection`` lists the token indices that own rows/cols of
    ``last_edge_coefficients`` (shape (K, K, 4) or larger, padded). Entities
    with the same (class, uncertainty) are merged into their first
    occurrence; relations are remapped, and self-loops and repeats dropped.
    """
    selection = list(selection)
    if not selection:
        return RadiologyGraph()
    cls = class_logits.detach().argmax(-1)
    unc = uncertainty_logits.detach().argmax(-1)
    node_of: list[int] = []
    first: dict[tuple[int, int], int] = {}
    entities: list[Entity] = []
    for t in selection:
        key = (int(cls[t]), int(unc[t]))
        if key not in first:
            first[key] = len(entities)
            entities.append(Entity(len(entities), key[0], Uncertainty.from_index(key[1])))
        node_of.append(first[key])
    relations = set()
    if last_edge_coefficients is not None:
        if torch.is_tensor(last_edge_coefficients):
            last_edge_coefficients = last_edge_coefficients.detach()
        rel = torch.as_tensor(last_edge_coefficients).argmax(-1)
        k = len(selection)
        for i in range(k):
            for j in range(k):
                if i == j:
                    continue
                r = int(rel[i, j])
                if r == NO_RELATION:
                    continue
                h, t = node_of[i], node_of[j]
                if h != t:
                    relations.add(Relation(h, t, RelationType.from_index(r)))
    return RadiologyGraph(tuple(entities), tuple(relations)).validate()
