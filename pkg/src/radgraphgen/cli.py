"""Command-line entry point.

Exit codes: 0 success, 1 validation or tolerance failure, 2 I/O or pairing failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import time
from pathlib import Path

from .checkpoint import CheckpointError, load_checkpoint, load_into, save_checkpoint
from .config import ConfigError, load_config
from .graph import EntityClassSpace, GraphError, read_graph, synthetic_classes, write_graph
from .imageio import read_pgm

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _mkdir(path: str | Path) -> Path:
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".write-probe"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        raise CliError(f"cannot write to {path}: {exc}", EXIT_IO) from None
    return path


def _classes(path: str | None, *dirs: str | Path) -> EntityClassSpace:
    """Explicit --classes file, else an ontology.json in one of ``dirs``, else the synthetic ontology."""
    if path:
        return EntityClassSpace.load(path)
    for d in dirs:
        candidate = Path(d) / "ontology.json"
        if candidate.is_file():
            return EntityClassSpace.load(candidate)
    return synthetic_classes()


def _graph_files(directory: str | Path) -> dict[str, Path]:
    root = Path(directory)
    if not root.is_dir():
        raise CliError(f"not a directory: {root}", EXIT_IO)
    return {p.name: p for p in sorted(root.glob("*.graph.json"))}


# --- commands -----------------------------------------------------------------


def cmd_synth(args) -> int:
    from .synth import write_dataset

    out = _mkdir(args.out)
    write_dataset(out, args.count, args.seed, args.sigma)
    _emit({"out": str(out), "count": args.count, "seed": args.seed})
    return EXIT_OK


def _model_from_checkpoint(path: str | Path):
    from .model import ModelConfig
    from .network import RadGraphFormer

    params, manifest = load_checkpoint(path)
    if "model" not in manifest:
        raise CheckpointError(f"{path}: manifest has no model config")
    model = RadGraphFormer(ModelConfig(**manifest["model"]))
    load_into(model, params)
    classes = EntityClassSpace(tuple(manifest["classes"])) if "classes" in manifest else synthetic_classes()
    return model, classes, manifest


def cmd_train(args) -> int:
    from .dataset import load_dataset
    from .train import build_model, evaluate, fit

    cfg = load_config(args.config, args.set)
    if cfg.paths.dataset is None:
        raise CliError("paths.dataset is required for training", EXIT_INVALID)
    train, classes = load_dataset(cfg.paths.dataset)
    val = load_dataset(cfg.paths.val_dataset)[0] if cfg.paths.val_dataset else train
    if len(classes) != cfg.model.num_classes:
        raise CliError(
            f"dataset has {len(classes)} classes but model.num_classes={cfg.model.num_classes}", EXIT_INVALID
        )
    model = build_model(cfg.model, cfg.training)
    if args.resume:
        resumed, _, _ = _model_from_checkpoint(args.resume)
        load_into(model, dict(resumed.named_parameters()))
    ckpt = Path(cfg.paths.checkpoint)
    log_path = Path(cfg.paths.metrics_log)
    for parent in {ckpt.parent, log_path.parent}:
        _mkdir(parent)
    t0 = time.perf_counter()
    model, history = fit(train, cfg.training, val=val, model=model, log_path=log_path)
    final = history[-1] if history else {"epoch": None, **evaluate(model, val)}
    extra = {"model": dataclasses.asdict(model.cfg), "classes": list(classes.class_names), "run": cfg.to_dict()}
    save_checkpoint(model, ckpt, extra=_jsonable(extra))
    _emit({"checkpoint": str(ckpt), "metrics_log": str(log_path), "seconds": round(time.perf_counter() - t0, 3),
           "entity_f1": final["entity_f1"], "relation_f1": final["relation_f1"]})
    return EXIT_OK


def _jsonable(obj):
    return json.loads(json.dumps(obj, default=lambda o: dataclasses.asdict(o) if dataclasses.is_dataclass(o) else list(o)))


def cmd_infer(args) -> int:
    import numpy as np

    model, classes, _ = _model_from_checkpoint(args.checkpoint)
    src = Path(args.images)
    if not src.is_dir():
        raise CliError(f"not a directory: {src}", EXIT_IO)
    out = _mkdir(args.out)
    paths = sorted(src.glob("*.pgm"))
    model.eval()
    for k in range(0, len(paths), 64):
        chunk = paths[k : k + 64]
        graphs = model.predict(np.stack([read_pgm(p) for p in chunk]))
        for p, g in zip(chunk, graphs):
            write_graph(out / f"{p.stem}.graph.json", g, classes)
    (out / "ontology.json").write_text(json.dumps(list(classes.class_names)) + "\n", encoding="utf-8")
    _emit({"out": str(out), "count": len(paths)})
    return EXIT_OK


def _paired_graphs(pred_dir, gt_dir, classes):
    pred, gt = _graph_files(pred_dir), _graph_files(gt_dir)
    missing_gt = sorted(set(pred) - set(gt))
    missing_pred = sorted(set(gt) - set(pred))
    if missing_gt or missing_pred:
        lines = [f"missing in gt: {n}" for n in missing_gt] + [f"missing in pred: {n}" for n in missing_pred]
        raise CliError("unpaired files:\n  " + "\n  ".join(lines), EXIT_IO)
    names = sorted(gt)
    return names, [read_graph(pred[n], classes) for n in names], [read_graph(gt[n], classes) for n in names]


def cmd_eval(args) -> int:
    from .metrics import graph_report

    classes = _classes(args.classes, args.gt, args.pred)
    names, preds, gts = _paired_graphs(args.pred, args.gt, classes)
    report = graph_report(preds, gts, class_only=args.class_only)
    report["count"] = len(names)
    _emit(report)
    return EXIT_OK


def _read_all(directory, classes):
    return {name[: -len(".graph.json")]: read_graph(p, classes) for name, p in _graph_files(directory).items()}


def cmd_report(args) -> int:
    from .downstream import ReportRules, graph_to_report

    classes = _classes(args.classes, args.graphs)
    rules = ReportRules.load(args.rules)
    reports = {stem: graph_to_report(g, classes, rules) for stem, g in _read_all(args.graphs, classes).items()}
    if args.out:
        out = _mkdir(args.out)
        for stem, text in reports.items():
            (out / f"{stem}.txt").write_text(text + "\n", encoding="utf-8")
    _emit(reports)
    return EXIT_OK


def cmd_labels(args) -> int:
    from .downstream import PathologyMapping, graph_to_labels

    classes = _classes(args.classes, args.graphs)
    mapping_path = args.mapping
    if mapping_path is None and classes == synthetic_classes():
        from importlib import resources

        mapping = PathologyMapping.from_obj(
            json.loads(resources.files("radgraphgen.data").joinpath("synthetic_pathology_mapping.json").read_text("utf-8")),
            classes,
        )
    else:
        mapping = PathologyMapping.load(mapping_path, classes)
    _emit({stem: graph_to_labels(g, classes, mapping) for stem, g in _read_all(args.graphs, classes).items()})
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradcheck import TOLERANCE, model_gradcheck, tiny_config

    if args.config or args.set:
        cfg = load_config(args.config, args.set).model
    else:
        cfg = tiny_config(args.mode)
    t0 = time.perf_counter()
    err = model_gradcheck(cfg, seed=args.seed, coords_per_param=args.coords)
    ok = err < TOLERANCE
    _emit({"max_relative_error": err, "tolerance": TOLERANCE, "passed": ok, "mode": cfg.mode,
           "seconds": round(time.perf_counter() - t0, 3)})
    return EXIT_OK if ok else EXIT_INVALID


# --- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="radgraphgen", description="Image-to-radiology-graph toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic image/graph dataset")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--sigma", type=float, default=0.02, help="pixel noise std")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model from a JSON config")
    p.add_argument("--config", help="config JSON (defaults apply when omitted)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config entry")
    p.add_argument("--resume", help="start from this checkpoint's parameters")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="predict one graph JSON per .pgm image")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="entity/relation micro P/R/F1 of paired graph directories")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--classes", help="class list JSON (default: ontology.json in gt dir)")
    p.add_argument("--class-only", action="store_true", help="ignore uncertainty when matching relation endpoints")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="rule-based report text per graph")
    p.add_argument("--graphs", required=True)
    p.add_argument("--rules", help="report template JSON")
    p.add_argument("--classes")
    p.add_argument("--out", help="also write <name>.txt files here")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("labels", help="pathology labels per graph")
    p.add_argument("--graphs", required=True)
    p.add_argument("--mapping", help="pathology mapping JSON")
    p.add_argument("--classes")
    p.set_defaults(func=cmd_labels)

    p = sub.add_parser("gradcheck", help="finite-difference audit of the full training loss")
    p.add_argument("--config")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--mode", default="prior", choices=("vanilla", "prior", "prior_no_pkg", "prior_no_aecs"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--coords", type=int, default=None, help="coordinates probed per tensor (default: all)")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (CheckpointError, GraphError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
