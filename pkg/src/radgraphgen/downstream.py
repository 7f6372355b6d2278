"""Rule-based report text and pathology labels derived from a graph."""
from __future__ import annotations

import fnmatch
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .graph import EntityClassSpace, GraphError, RadiologyGraph, RelationType, Uncertainty

_UNC_KEYS = tuple(u.value for u in Uncertainty)


def _default_templates() -> dict:
    return {
        "located_at": {
            "definitely_present": "There is {obs} located at {loc}.",
            "uncertain": "There is possibly {obs} located at {loc}.",
            "definitely_absent": "There is no {obs} located at {loc}.",
        },
        "suggestive_of": {
            "definitely_present": "{source} is suggestive of {target}.",
            "uncertain": "{source} is possibly suggestive of {target}.",
            "definitely_absent": "{source} is not suggestive of {target}.",
        },
        "isolated": {
            "definitely_present": "There is {obs}.",
            "uncertain": "There is possibly {obs}.",
            "definitely_absent": "There is no {obs}.",
        },
        "location": "{modifiers} of {anat}",
        "location_plain": "{anat}",
    }


@dataclass(frozen=True)
class ReportRules:
    """Sentence templates.

    ``located_at`` is keyed by the head (observation) uncertainty,
    ``suggestive_of`` by the target uncertainty. Modifier entities (heads of
    ``modify``) are folded in front of their target's name and get no sentence
    of their own unless they have another relation.
    """

    templates: dict = field(default_factory=_default_templates)

    def __post_init__(self):
        t = self.templates
        for kind in ("located_at", "suggestive_of", "isolated"):
            if kind not in t or set(t[kind]) != set(_UNC_KEYS):
                raise ValueError(f"rules need a {kind!r} template for every uncertainty level")
        for key in ("location", "location_plain"):
            if key not in t:
                raise ValueError(f"rules need a {key!r} template")

    @classmethod
    def load(cls, path: str | Path | None = None) -> "ReportRules":
        if path is None:
            return cls()
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))


def graph_to_report(graph: RadiologyGraph, classes: EntityClassSpace, rules: ReportRules | None = None) -> str:
    rules = rules or ReportRules()
    t = rules.templates
    ents = {e.id: e for e in graph.entities}
    name = {i: classes.name(e.class_id) for i, e in ents.items()}
    modifiers: dict[int, list[int]] = {i: [] for i in ents}
    covered: set[int] = set()
    for r in graph.relations:
        if r.type is RelationType.MODIFY:
            modifiers[r.tail].append(r.head)
            covered.add(r.head)

    def phrase(i: int) -> str:
        return " ".join([name[m] for m in sorted(modifiers[i])] + [name[i]])

    items: list[tuple[int, int, int, str]] = []
    for r in graph.relations:
        if r.type is RelationType.LOCATED_AT:
            mods = sorted(modifiers[r.tail])
            loc = (
                t["location"].format(modifiers=" ".join(name[m] for m in mods), anat=name[r.tail])
                if mods
                else t["location_plain"].format(anat=name[r.tail])
            )
            text = t["located_at"][ents[r.head].uncertainty.value].format(obs=phrase(r.head), loc=loc)
            items.append((r.head, 0, r.tail, text))
            covered.update((r.head, r.tail))
        elif r.type is RelationType.SUGGESTIVE_OF:
            text = t["suggestive_of"][ents[r.tail].uncertainty.value].format(
                source=phrase(r.head), target=phrase(r.tail)
            )
            items.append((r.head, 1, r.tail, text))
            covered.update((r.head, r.tail))
    for i, e in ents.items():
        if i not in covered:
            items.append((i, 2, -1, t["isolated"][e.uncertainty.value].format(obs=phrase(i))))
    sentences = [s[:1].upper() + s[1:] for *_, s in sorted(items)]
    return " ".join(sentences)


# --- labels -------------------------------------------------------------------


@dataclass(frozen=True)
class Trigger:
    entity: tuple[str, ...]
    anatomy: tuple[str, ...] = ()


@dataclass(frozen=True)
class PathologyMapping:
    labels: dict[str, tuple[Trigger, ...]]

    @classmethod
    def from_obj(cls, obj: dict, classes: EntityClassSpace | None = None) -> "PathologyMapping":
        labels = {}
        for label, triggers in obj.items():
            labels[label] = tuple(
                Trigger(tuple(tr["entity"]), tuple(tr.get("anatomy", ()))) for tr in triggers
            )
        mapping = cls(labels)
        if classes is not None:
            mapping.check(classes)
        return mapping

    @classmethod
    def load(cls, path: str | Path | None = None, classes: EntityClassSpace | None = None) -> "PathologyMapping":
        if path is None:
            text = resources.files("radgraphgen.data").joinpath("pathology_mapping.json").read_text("utf-8")
        else:
            text = Path(path).read_text(encoding="utf-8")
        return cls.from_obj(json.loads(text), classes)

    def check(self, classes: EntityClassSpace) -> None:
        for label, triggers in self.labels.items():
            for tr in triggers:
                for pat in tr.entity + tr.anatomy:
                    if not fnmatch.filter(classes.class_names, pat):
                        raise GraphError(f"label {label!r}: pattern {pat!r} matches no class")


def _matches(name: str, patterns: tuple[str, ...]) -> bool:
    return any(fnmatch.fnmatchcase(name, p) for p in patterns)


def graph_to_labels(graph: RadiologyGraph, classes: EntityClassSpace, mapping: PathologyMapping) -> dict[str, bool]:
    """Positive iff a definitely-present trigger entity exists (with a
    located_at edge to matching anatomy when the trigger names one)."""
    name = {e.id: classes.name(e.class_id) for e in graph.entities}
    out = {}
    for label, triggers in mapping.labels.items():
        hit = False
        for tr in triggers:
            for e in graph.entities:
                if e.uncertainty is not Uncertainty.DEFINITELY_PRESENT or not _matches(name[e.id], tr.entity):
                    continue
                if not tr.anatomy or any(
                    r.head == e.id and r.type is RelationType.LOCATED_AT and _matches(name[r.tail], tr.anatomy)
                    for r in graph.relations
                ):
                    hit = True
                    break
            if hit:
                break
        out[label] = hit
    return out
