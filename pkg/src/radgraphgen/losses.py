"""Set-prediction losses: focal entity class, uncertainty CE, stochastic
relation loss on edge coefficients, and the extra entity-class supervision on
node coefficients (AECS)."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from . import autodiff as ad
from .graph import NO_RELATION


@dataclass(frozen=True)
class LossWeights:
    entity_class: float = 1.0
    uncertainty: float = 1.0
    relation: float = 3.0

    def __post_init__(self):
        if min(self.entity_class, self.uncertainty, self.relation) < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass
class LossParts:
    focal: torch.Tensor
    uncertainty: torch.Tensor
    relation: torch.Tensor
    aecs: torch.Tensor

    def as_floats(self) -> dict[str, float]:
        return {k: float(torch.as_tensor(getattr(self, k)).detach()) for k in ("focal", "uncertainty", "relation", "aecs")}


def _zero() -> torch.Tensor:
    return torch.zeros((), dtype=ad.DTYPE)


def focal_loss(logits: torch.Tensor, targets: torch.Tensor, gamma: float = 2.0) -> torch.Tensor:
    """Mean of -(1 - p_t)^gamma * log p_t over all rows of ``logits``."""
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    targets = torch.as_tensor(targets, dtype=torch.long)
    if targets.numel() == 0:
        return _zero()
    logp = ad.log_softmax(logits).reshape(-1, logits.shape[-1])
    logpt = logp.gather(1, targets.reshape(-1, 1)).squeeze(1)
    if gamma == 0:
        return -logpt.mean()
    pt = torch.exp(logpt)
    return (-(1.0 - pt).pow(gamma) * logpt).mean()


def cross_entropy(logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Mean negative log-likelihood; zero for an empty batch."""
    targets = torch.as_tensor(targets, dtype=torch.long)
    if targets.numel() == 0:
        return _zero()
    logp = ad.log_softmax(logits).reshape(-1, logits.shape[-1])
    return -logp.gather(1, targets.reshape(-1, 1)).mean()


def uncertainty_ce_loss(uncertainty_logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """``uncertainty_logits`` holds only matched-token rows."""
    return cross_entropy(uncertainty_logits, targets)


def background_sample_size(num_fg: int, num_bg: int, ratio: int = 3) -> int:
    return min(ratio * max(num_fg, 1), num_bg)


def sample_relation_pairs(target: np.ndarray, ratio: int, rng: np.random.Generator):
    """Pick supervised ordered pairs from a (K, K) target matrix.

    Returns (fg pairs, sampled bg pairs) as lists of (i, j). Background pairs
    are enumerated row-major and drawn without replacement with one
    ``rng.choice`` call.
    """
    k = target.shape[0]
    fg, bg = [], []
    for i in range(k):
        for j in range(k):
            if i == j:
                continue
            (bg if target[i, j] == NO_RELATION else fg).append((i, j))
    n = background_sample_size(len(fg), len(bg), ratio)
    if n == 0:
        return fg, []
    pick = rng.choice(len(bg), size=n, replace=False)
    return fg, [bg[p] for p in sorted(pick)]


def stochastic_relation_loss(
    edge_logits: list[torch.Tensor],
    targets: list[np.ndarray],
    ratio: int,
    rng: np.random.Generator,
) -> torch.Tensor:
    """Relation CE on last-axis softmax of ``edge_logits[step]`` (B, K, K, 4).

    ``targets[b]`` is the (K_b, K_b) relation-index matrix for sample b over its
    selected nodes (``NO_RELATION`` for unrelated pairs). The same pair sample
    is used for every step; losses are averaged over steps.
    """
    bi, ii, jj, tt = [], [], [], []
    for b, target in enumerate(targets):
        fg, bg = sample_relation_pairs(np.asarray(target), ratio, rng)
        for i, j in fg + bg:
            bi.append(b)
            ii.append(i)
            jj.append(j)
            tt.append(int(target[i, j]))
    if not bi or not edge_logits:
        return _zero()
    idx = [torch.as_tensor(x, dtype=torch.long) for x in (bi, ii, jj)]
    tgt = torch.as_tensor(tt, dtype=torch.long)
    per_step = [cross_entropy(lg[idx[0], idx[1], idx[2]], tgt) for lg in edge_logits]
    return torch.stack(per_step).mean()


def aecs_loss(node_logits: list[torch.Tensor], targets: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """CE of node coefficients (softmax of ``node_logits[step]``, (B, K, C))
    against matched classes ``targets`` (B, K) on ``mask`` nodes, averaged over steps."""
    if not node_logits or not bool(mask.any()):
        return _zero()
    per_step = [cross_entropy(lg[mask], targets[mask]) for lg in node_logits]
    return torch.stack(per_step).mean()


def total_loss(parts: LossParts, weights: LossWeights = LossWeights()) -> torch.Tensor:
    values = parts.as_floats()
    bad = [k for k, v in values.items() if not math.isfinite(v)]
    if bad:
        raise FloatingPointError(f"non-finite loss part(s): {', '.join(bad)} = {[values[k] for k in bad]}")
    return (
        weights.entity_class * (parts.focal + parts.aecs)
        + weights.uncertainty * parts.uncertainty
        + weights.relation * parts.relation
    )
