"""Procedural (image, graph) pairs standing in for annotated chest X-rays.

Ontology (12 classes):

* anatomy analogues: one per shape kind (disc, square, triangle, cross)
* observations: bright, dark (intensity) and small, large (size)
* pathology analogues: lesion, mass, collapse, fracture

A shape carries at most one intensity and one size observation; shapes without
one are drawn in a plain tone / medium size, which is not reported. Each
observation value occurs on at most one shape, so every (class, uncertainty)
pair appears at most once per graph. Pathology analogues fire on fixed
(observation, shape kind) combinations; their uncertainty is drawn from the seed and
rendered into a marker slot in the top strip so the graph stays recoverable
from the image.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graph import (
    EntityClassSpace,
    RadiologyGraph,
    RelationType,
    Uncertainty,
    make_graph,
    synthetic_classes,
    write_graph,
)
from .imageio import write_pgm

SIZE = 64
BACKGROUND = 0.5
NOISE_SIGMA = 0.02

KINDS = ("disc", "square", "triangle", "cross")
INTENSITIES = ("bright", "dark")
SIZES = ("small", "large")
PATHOLOGIES = ("lesion", "mass", "collapse", "fracture")

# pathology -> (observation, shape kinds that trigger it when carrying it)
TRIGGERS = {
    "lesion": ("bright", ("square", "cross")),
    "mass": ("large", ("square", "disc")),
    "collapse": ("dark", ("triangle", "disc")),
    "fracture": ("small", ("cross", "triangle")),
}

TONE = {"bright": 0.95, "dark": 0.05, None: 0.28}
HALF_EXTENT = {"small": 4, None: 7, "large": 10}
MARKER_TONE = {
    Uncertainty.DEFINITELY_PRESENT: 1.0,
    Uncertainty.UNCERTAIN: 0.75,
    Uncertainty.DEFINITELY_ABSENT: 0.0,
}

# 2x2 layout cells below the marker strip: (row centre, col centre)
CELLS = ((23, 16), (23, 48), (50, 16), (50, 48))
JITTER = 2
MARKER_ROWS = (1, 7)


@dataclass(frozen=True)
class Shape:
    kind: str
    cell: int
    dy: int
    dx: int
    intensity: str | None = None
    size: str | None = None

    @property
    def center(self) -> tuple[int, int]:
        cy, cx = CELLS[self.cell]
        return cy + self.dy, cx + self.dx


@dataclass(frozen=True)
class SceneSpec:
    shapes: tuple[Shape, ...]
    pathology_uncertainty: tuple[Uncertainty, ...] = field(
        default=(Uncertainty.DEFINITELY_PRESENT,) * len(PATHOLOGIES)
    )
    noise_seed: int = 0
    seed: int | None = None

    def validate(self) -> "SceneSpec":
        if not 1 <= len(self.shapes) <= len(KINDS):
            raise ValueError(f"scene needs 1..{len(KINDS)} shapes, got {len(self.shapes)}")
        kinds = [s.kind for s in self.shapes]
        if len(set(kinds)) != len(kinds) or not set(kinds) <= set(KINDS):
            raise ValueError(f"shape kinds must be distinct members of {KINDS}")
        cells = [s.cell for s in self.shapes]
        if len(set(cells)) != len(cells):
            raise ValueError("two shapes share a layout cell")
        for attr, values in (("intensity", INTENSITIES), ("size", SIZES)):
            used = [getattr(s, attr) for s in self.shapes if getattr(s, attr) is not None]
            if len(set(used)) != len(used) or not set(used) <= set(values):
                raise ValueError(f"each {attr} value may appear on at most one shape")
        for s in self.shapes:
            r = HALF_EXTENT[s.size]
            cy, cx = s.center
            if abs(s.dy) > JITTER or abs(s.dx) > JITTER:
                raise ValueError("jitter out of range")
            if cy - r < MARKER_ROWS[1] + 1 or cy + r >= SIZE or cx - r < 0 or cx + r >= SIZE:
                raise ValueError(f"{s.kind} leaves the canvas")
        if len(self.pathology_uncertainty) != len(PATHOLOGIES):
            raise ValueError("one uncertainty per pathology slot required")
        return self

    def pathologies(self) -> list[tuple[str, str]]:
        """(pathology, triggering observation) pairs present in the scene."""
        out = []
        for name in PATHOLOGIES:
            obs, kinds = TRIGGERS[name]
            if any(s.kind in kinds and obs in (s.intensity, s.size) for s in self.shapes):
                out.append((name, obs))
        return out


def sample_scene(seed: int) -> SceneSpec:
    """Draw a legal scene; every draw is an integer from a PCG64 stream.

    Draw order: shape count, kind permutation, cell permutation, per-shape
    jitter (dy, dx), then bright, dark, small, large placement (a 0..9 gate
    with 8 in 10 odds, then a target index), four pathology uncertainty
    levels, and the noise seed.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    k = int(rng.integers(1, len(KINDS) + 1))
    kinds = [int(i) for i in rng.permutation(len(KINDS))[:k]]
    cells = [int(i) for i in rng.permutation(len(CELLS))[:k]]
    jitter = [(int(rng.integers(-JITTER, JITTER + 1)), int(rng.integers(-JITTER, JITTER + 1))) for _ in range(k)]
    intensity: list[str | None] = [None] * k
    size: list[str | None] = [None] * k
    for slot, values in ((intensity, INTENSITIES), (size, SIZES)):
        for value in values:
            gate = int(rng.integers(0, 10))
            free = [i for i in range(k) if slot[i] is None]
            pick = int(rng.integers(0, len(free))) if free else 0
            if gate < 8 and free:
                slot[free[pick]] = value
    unc = tuple(Uncertainty.from_index(int(rng.integers(0, 3))) for _ in PATHOLOGIES)
    noise_seed = int(rng.integers(0, 2**31))
    shapes = tuple(
        sorted(
            (
                Shape(KINDS[kinds[i]], cells[i], jitter[i][0], jitter[i][1], intensity[i], size[i])
                for i in range(k)
            ),
            key=lambda s: KINDS.index(s.kind),
        )
    )
    return SceneSpec(shapes, unc, noise_seed, seed).validate()


def shape_mask(shape: Shape) -> np.ndarray:
    yy, xx = np.mgrid[0:SIZE, 0:SIZE]
    cy, cx = shape.center
    r = HALF_EXTENT[shape.size]
    dy, dx = yy - cy, xx - cx
    if shape.kind == "disc":
        return dy * dy + dx * dx <= r * r
    if shape.kind == "square":
        h = 0.8 * r
        return (np.abs(dy) <= h) & (np.abs(dx) <= h)
    if shape.kind == "triangle":
        return (dy >= -r) & (dy <= r) & (np.abs(dx) <= (dy + r) / 2)
    if shape.kind == "cross":
        w = r / 3
        return ((np.abs(dx) <= w) & (np.abs(dy) <= r)) | ((np.abs(dy) <= w) & (np.abs(dx) <= r))
    raise ValueError(f"unknown shape kind {shape.kind!r}")


def marker_slice(slot: int) -> tuple[slice, slice]:
    c0 = 4 + 16 * slot
    return slice(*MARKER_ROWS), slice(c0, c0 + 8)


def render_scene(spec: SceneSpec, sigma: float = NOISE_SIGMA) -> np.ndarray:
    """64x64 float64 image in [0, 1]."""
    img = np.full((SIZE, SIZE), BACKGROUND)
    for s in spec.shapes:
        img[shape_mask(s)] = TONE[s.intensity]
    present = {name for name, _ in spec.pathologies()}
    for slot, name in enumerate(PATHOLOGIES):
        if name in present:
            img[marker_slice(slot)] = MARKER_TONE[spec.pathology_uncertainty[slot]]
    if sigma > 0:
        img = img + np.random.default_rng(spec.noise_seed).normal(0.0, sigma, img.shape)
    return np.clip(img, 0.0, 1.0)


def scene_to_graph(spec: SceneSpec, classes: EntityClassSpace | None = None) -> RadiologyGraph:
    classes = classes or synthetic_classes()
    dp = Uncertainty.DEFINITELY_PRESENT
    entities: list[tuple[int, Uncertainty]] = []
    relations: list[tuple[int, int, RelationType]] = []
    shape_id = {}
    for s in spec.shapes:
        shape_id[s.kind] = len(entities)
        entities.append((classes.index(s.kind), dp))
    obs_id = {}
    for s in spec.shapes:
        for value in (s.intensity, s.size):
            if value is None:
                continue
            obs_id[value] = len(entities)
            entities.append((classes.index(value), dp))
            relations.append((obs_id[value], shape_id[s.kind], RelationType.LOCATED_AT))
        if s.intensity is not None and s.size is not None:
            relations.append((obs_id[s.size], obs_id[s.intensity], RelationType.MODIFY))
    for name, obs in spec.pathologies():
        slot = PATHOLOGIES.index(name)
        pid = len(entities)
        entities.append((classes.index(name), spec.pathology_uncertainty[slot]))
        relations.append((obs_id[obs], pid, RelationType.SUGGESTIVE_OF))
    return make_graph(entities, relations)


def generate(seed: int, sigma: float = NOISE_SIGMA) -> tuple[np.ndarray, RadiologyGraph]:
    spec = sample_scene(seed)
    return render_scene(spec, sigma), scene_to_graph(spec)


def write_dataset(out_dir: str | Path, count: int, seed: int, sigma: float = NOISE_SIGMA) -> Path:
    """Write ``count`` samples (seeds ``seed .. seed+count-1``) plus manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    classes = synthetic_classes()
    (out / "ontology.json").write_text(json.dumps(list(classes.class_names)) + "\n", encoding="utf-8")
    pairs = []
    for i in range(count):
        img, graph = generate(seed + i, sigma)
        stem = f"{i:05d}"
        write_pgm(out / f"{stem}.pgm", img)
        write_graph(out / f"{stem}.graph.json", graph, classes)
        pairs.append({"image": f"{stem}.pgm", "graph": f"{stem}.graph.json", "seed": seed + i})
    manifest = {"ontology": "ontology.json", "count": count, "seed": seed, "sigma": sigma, "pairs": pairs}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return out
