"""(image, graph) samples: in-memory synthetic generation and on-disk datasets."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import EntityClassSpace, RadiologyGraph, read_graph
from .imageio import read_pgm
from .synth import NOISE_SIGMA, generate


@dataclass
class Sample:
    image: np.ndarray
    graph: RadiologyGraph
    name: str = ""


def synthetic_samples(count: int, seed: int = 0, sigma: float = NOISE_SIGMA) -> list[Sample]:
    """Seeds ``seed .. seed+count-1``; images are quantized to 8 bits like the PGM files."""
    out = []
    for i in range(count):
        img, graph = generate(seed + i, sigma)
        out.append(Sample(np.round(img * 255.0) / 255.0, graph, f"{i:05d}"))
    return out


def load_dataset(directory: str | Path) -> tuple[list[Sample], EntityClassSpace]:
    root = Path(directory)
    manifest = json.loads((root / "manifest.json").read_text(encoding="utf-8"))
    classes = EntityClassSpace.load(root / manifest["ontology"])
    samples = [
        Sample(read_pgm(root / p["image"]), read_graph(root / p["graph"], classes), Path(p["image"]).stem)
        for p in manifest["pairs"]
    ]
    return samples, classes
