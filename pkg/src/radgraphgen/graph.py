"""Radiology graph data model and its JSON interchange format.

A graph holds entities (class + uncertainty) and typed directed relations
between them. Class names live in an :class:`EntityClassSpace`; entities only
store the class index, so parsing and serializing take the class space as an
argument.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping


class GraphError(ValueError):
    """Raised when a graph document or graph value violates an invariant."""


class Uncertainty(str, enum.Enum):
    DEFINITELY_PRESENT = "definitely_present"
    UNCERTAIN = "uncertain"
    DEFINITELY_ABSENT = "definitely_absent"

    @property
    def index(self) -> int:
        return _UNC_INDEX[self]

    @classmethod
    def from_index(cls, i: int) -> "Uncertainty":
        return _UNC_ORDER[i]


class RelationType(str, enum.Enum):
    MODIFY = "modify"
    LOCATED_AT = "located_at"
    SUGGESTIVE_OF = "suggestive_of"

    @property
    def index(self) -> int:
        return _REL_INDEX[self]

    @classmethod
    def from_index(cls, i: int) -> "RelationType":
        return _REL_ORDER[i]


_UNC_ORDER = tuple(Uncertainty)
_UNC_INDEX = {u: i for i, u in enumerate(_UNC_ORDER)}
_REL_ORDER = tuple(RelationType)
_REL_INDEX = {r: i for i, r in enumerate(_REL_ORDER)}

NUM_UNCERTAINTY = len(_UNC_ORDER)
NUM_RELATION_TYPES = len(_REL_ORDER)
# index of the "no relation" class in 4-way edge classification outputs
NO_RELATION = NUM_RELATION_TYPES


@dataclass(frozen=True)
class EntityClassSpace:
    """Ordered list of canonical entity class names."""

    class_names: tuple[str, ...]

    def __post_init__(self):
        names = tuple(self.class_names)
        object.__setattr__(self, "class_names", names)
        if not names:
            raise GraphError("class space must not be empty")
        if any(not isinstance(n, str) or not n for n in names):
            raise GraphError("class names must be non-empty strings")
        if len(set(names)) != len(names):
            raise GraphError("class names must be unique")
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(names)})

    def __len__(self) -> int:
        return len(self.class_names)

    def __contains__(self, name: object) -> bool:
        return name in self._index

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise GraphError(f"unknown class {name!r}") from None

    def name(self, class_id: int) -> str:
        return self.class_names[class_id]

    @classmethod
    def from_json(cls, text: str) -> "EntityClassSpace":
        names = json.loads(text)
        if not isinstance(names, list):
            raise GraphError("class-space file must be a JSON array of names")
        return cls(tuple(names))

    @classmethod
    def load(cls, path: str | Path) -> "EntityClassSpace":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True, order=True)
class Entity:
    id: int
    class_id: int
    uncertainty: Uncertainty


@dataclass(frozen=True)
class Relation:
    head: int
    tail: int
    type: RelationType

    def sort_key(self) -> tuple[int, int, int]:
        return (self.head, self.tail, self.type.index)


@dataclass(frozen=True)
class RadiologyGraph:
    """Entities with ids 0..n-1 and relations kept in canonical order.

    Relations are sorted by (head, tail, type) on construction, so two graphs
    with the same content compare equal regardless of insertion order.
    """

    entities: tuple[Entity, ...] = ()
    relations: tuple[Relation, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "entities", tuple(self.entities))
        rels = tuple(sorted(self.relations, key=Relation.sort_key))
        object.__setattr__(self, "relations", rels)

    def validate(self, num_classes: int | None = None) -> "RadiologyGraph":
        ids = [e.id for e in self.entities]
        if len(set(ids)) != len(ids):
            raise GraphError("duplicate entity id")
        if ids != list(range(len(ids))):
            raise GraphError("entity ids must be 0..n-1 in order")
        for e in self.entities:
            if num_classes is not None and not 0 <= e.class_id < num_classes:
                raise GraphError(f"class id {e.class_id} out of range")
        seen = set()
        n = len(self.entities)
        for r in self.relations:
            if not (0 <= r.head < n and 0 <= r.tail < n):
                raise GraphError(f"dangling relation endpoint ({r.head}, {r.tail})")
            if r.head == r.tail:
                raise GraphError(f"self-loop relation on entity {r.head}")
            key = r.sort_key()
            if key in seen:
                raise GraphError(f"duplicate relation {key}")
            seen.add(key)
        return self

    def entity_keys(self) -> list[tuple[int, Uncertainty]]:
        return [(e.class_id, e.uncertainty) for e in self.entities]


def make_graph(
    entities: Iterable[tuple[int, Uncertainty | str]],
    relations: Iterable[tuple[int, int, RelationType | str]] = (),
) -> RadiologyGraph:
    """Build and validate a graph from (class_id, uncertainty) and (head, tail, type) tuples."""
    ents = tuple(Entity(i, c, Uncertainty(u)) for i, (c, u) in enumerate(entities))
    rels = tuple(Relation(h, t, RelationType(k)) for h, t, k in relations)
    return RadiologyGraph(ents, rels).validate()


# --- surface-form normalization -------------------------------------------


def normalize_entity_surface(surface: str, mapping: Mapping[str, str]) -> str | None:
    """Map a surface token to its canonical class name, or ``None`` if unknown."""
    if not surface:
        raise ValueError("surface must be non-empty")
    return mapping.get(surface.strip().lower())


def load_surface_mapping(path: str | Path | None = None, classes: EntityClassSpace | None = None) -> dict[str, str]:
    """Read a surface->canonical JSON object; defaults to the bundled radiology mapping."""
    if path is None:
        text = resources.files("radgraphgen.data").joinpath("surface_mapping.json").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    raw = json.loads(text)
    if not isinstance(raw, dict):
        raise GraphError("surface mapping must be a JSON object")
    mapping = {str(k).lower(): v for k, v in raw.items()}
    if classes is not None:
        missing = sorted({v for v in mapping.values() if v not in classes})
        if missing:
            raise GraphError(f"mapping targets not in class space: {missing}")
    return mapping


# --- JSON interchange -------------------------------------------------------


def _as_int(value, what: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise GraphError(f"{what} must be an integer, got {value!r}")
    return value


def graph_from_obj(obj, classes: EntityClassSpace) -> RadiologyGraph:
    if not isinstance(obj, dict) or set(obj) != {"entities", "relations"}:
        raise GraphError("graph document must be an object with exactly 'entities' and 'relations'")
    if not isinstance(obj["entities"], list) or not isinstance(obj["relations"], list):
        raise GraphError("'entities' and 'relations' must be arrays")
    entities = []
    for item in obj["entities"]:
        if not isinstance(item, dict) or set(item) != {"id", "class", "uncertainty"}:
            raise GraphError(f"malformed entity record {item!r}")
        try:
            unc = Uncertainty(item["uncertainty"])
        except ValueError:
            raise GraphError(f"unknown uncertainty {item['uncertainty']!r}") from None
        entities.append(Entity(_as_int(item["id"], "entity id"), classes.index(item["class"]), unc))
    entities.sort(key=lambda e: e.id)
    relations = []
    for item in obj["relations"]:
        if not isinstance(item, dict) or set(item) != {"head", "tail", "type"}:
            raise GraphError(f"malformed relation record {item!r}")
        try:
            kind = RelationType(item["type"])
        except ValueError:
            raise GraphError(f"unknown relation type {item['type']!r}") from None
        relations.append(Relation(_as_int(item["head"], "head"), _as_int(item["tail"], "tail"), kind))
    return RadiologyGraph(tuple(entities), tuple(relations)).validate(len(classes))


def parse_graph_json(text: str, classes: EntityClassSpace) -> RadiologyGraph:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GraphError(f"malformed JSON: {exc}") from None
    return graph_from_obj(obj, classes)


def graph_to_obj(graph: RadiologyGraph, classes: EntityClassSpace) -> dict:
    return {
        "entities": [
            {"id": e.id, "class": classes.name(e.class_id), "uncertainty": e.uncertainty.value}
            for e in sorted(graph.entities, key=lambda e: e.id)
        ],
        "relations": [
            {"head": r.head, "tail": r.tail, "type": r.type.value}
            for r in sorted(graph.relations, key=Relation.sort_key)
        ],
    }


def serialize_graph(graph: RadiologyGraph, classes: EntityClassSpace) -> str:
    return json.dumps(graph_to_obj(graph, classes), separators=(",", ":"))


def read_graph(path: str | Path, classes: EntityClassSpace) -> RadiologyGraph:
    return parse_graph_json(Path(path).read_text(encoding="utf-8"), classes)


def write_graph(path: str | Path, graph: RadiologyGraph, classes: EntityClassSpace) -> None:
    Path(path).write_text(serialize_graph(graph, classes) + "\n", encoding="utf-8")


def _bundled_classes(name: str) -> EntityClassSpace:
    return EntityClassSpace.from_json(resources.files("radgraphgen.data").joinpath(name).read_text("utf-8"))


def radiology_classes() -> EntityClassSpace:
    """Sample radiology class space used by the downstream rules and mapping files."""
    return _bundled_classes("radiology_classes.json")


def synthetic_classes() -> EntityClassSpace:
    """The 12-class synthetic ontology (see :mod:`radgraphgen.synth`)."""
    return _bundled_classes("synthetic_classes.json")
