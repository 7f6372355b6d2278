"""Micro precision/recall/F1 over entities and relations, plus BLEU-1,
ROUGE-L and per-label binary F1 for the downstream outputs."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass
from typing import Mapping, Sequence

from .graph import RadiologyGraph


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    undefined: bool = False

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int, empty_is_perfect: bool = True) -> "PRF":
        if tp + fp + fn == 0:
            v = 1.0 if empty_is_perfect else 0.0
            return cls(v, v, v, 0, 0, 0, undefined=not empty_is_perfect)
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        return cls(p, r, f, tp, fp, fn)

    def to_dict(self) -> dict:
        return asdict(self)


def _multiset_counts(pred: Sequence[Counter], gt: Sequence[Counter]) -> tuple[int, int, int]:
    if len(pred) != len(gt):
        raise ValueError(f"length mismatch: {len(pred)} predictions vs {len(gt)} ground truths")
    tp = fp = fn = 0
    for p, g in zip(pred, gt):
        hit = sum(min(c, g[k]) for k, c in p.items())
        tp += hit
        fp += sum(p.values()) - hit
        fn += sum(g.values()) - hit
    return tp, fp, fn


def entity_keys(graph: RadiologyGraph, class_only: bool = False) -> Counter:
    if class_only:
        return Counter(e.class_id for e in graph.entities)
    return Counter((e.class_id, e.uncertainty) for e in graph.entities)


def relation_keys(graph: RadiologyGraph, class_only: bool = False) -> Counter:
    ent = {e.id: (e.class_id if class_only else (e.class_id, e.uncertainty)) for e in graph.entities}
    return Counter((ent[r.head], r.type, ent[r.tail]) for r in graph.relations)


def entity_micro_prf(pred: Sequence[RadiologyGraph], gt: Sequence[RadiologyGraph]) -> PRF:
    """An entity counts as correct when class and uncertainty both match."""
    return PRF.from_counts(*_multiset_counts([entity_keys(g) for g in pred], [entity_keys(g) for g in gt]))


def relation_micro_prf(
    pred: Sequence[RadiologyGraph], gt: Sequence[RadiologyGraph], class_only: bool = False
) -> PRF:
    """Relations compared as ((head class, unc), type, (tail class, unc)) triples.

    ``class_only`` drops uncertainty from the endpoint identity.
    """
    return PRF.from_counts(
        *_multiset_counts(
            [relation_keys(g, class_only) for g in pred], [relation_keys(g, class_only) for g in gt]
        )
    )


# --- text metrics -------------------------------------------------------------

_PUNCT = ".,;:!?"


def tokenize(text: str) -> list[str]:
    toks = []
    for t in text.lower().split():
        t = t.rstrip(_PUNCT)
        if t:
            toks.append(t)
    return toks


def bleu1(candidate: str, reference: str) -> float:
    cand, ref = tokenize(candidate), tokenize(reference)
    if not cand or not ref:
        return 0.0
    ref_counts = Counter(ref)
    clipped = sum(min(c, ref_counts[w]) for w, c in Counter(cand).items())
    bp = math.exp(min(0.0, 1.0 - len(ref) / len(cand)))
    return clipped / len(cand) * bp


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: str, reference: str) -> float:
    cand, ref = tokenize(candidate), tokenize(reference)
    if not cand or not ref:
        return 0.0
    lcs = lcs_length(cand, ref)
    if lcs == 0:
        return 0.0
    p, r = lcs / len(cand), lcs / len(ref)
    return 2 * p * r / (p + r)


# --- label classification -----------------------------------------------------


def chexpert_label_f1(
    pred: Sequence[Mapping[str, bool]], gt: Sequence[Mapping[str, bool]]
) -> dict[str, PRF]:
    """Binary F1 per label, positive class as target.

    When precision or recall has a zero denominator (no predicted or no true
    positives) the label's F1 is 0 and ``undefined`` is set.
    """
    if len(pred) != len(gt):
        raise ValueError(f"length mismatch: {len(pred)} vs {len(gt)}")
    labels = None
    for p, g in zip(pred, gt):
        if set(p) != set(g) or (labels is not None and set(p) != labels):
            raise ValueError("label-set mismatch")
        labels = set(p)
    out = {}
    for label in sorted(labels or ()):
        tp = sum(1 for p, g in zip(pred, gt) if p[label] and g[label])
        fp = sum(1 for p, g in zip(pred, gt) if p[label] and not g[label])
        fn = sum(1 for p, g in zip(pred, gt) if not p[label] and g[label])
        prf = PRF.from_counts(tp, fp, fn, empty_is_perfect=False)
        if tp + fp == 0 or tp + fn == 0:
            prf = PRF(prf.precision, prf.recall, 0.0, tp, fp, fn, undefined=True)
        out[label] = prf
    return out


def graph_report(pred: Sequence[RadiologyGraph], gt: Sequence[RadiologyGraph], class_only: bool = False) -> dict:
    return {
        "entity": entity_micro_prf(pred, gt).to_dict(),
        "relation": relation_micro_prf(pred, gt, class_only).to_dict(),
    }
