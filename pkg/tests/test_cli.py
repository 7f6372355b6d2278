import json
import shutil
import subprocess
import sys

import pytest

from radgraphgen.checkpoint import load_checkpoint
from radgraphgen.cli import main
from radgraphgen.graph import read_graph, synthetic_classes

SMALL = [
    "model.d_model=16", "model.heads=2", "model.ff_dim=32", "model.dec_layers=1",
    "model.gt_layers=1", "model.enc_channels=[4,8]", "training.batch_size=4",
]


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    assert main(["synth", "--count", "8", "--seed", "2", "--out", str(root / "d")]) == 0
    return root / "d"


def train_args(dataset, tmp_path, *extra):
    args = ["train"]
    for item in SMALL + [f"paths.dataset={dataset}", f"paths.checkpoint={tmp_path}/ck.json",
                         f"paths.metrics_log={tmp_path}/m.jsonl", *extra]:
        args += ["--set", item]
    return args


class TestSynth:
    def test_empty(self, tmp_path, capsys):
        code, _, _ = run(capsys, "synth", "--count", 0, "--seed", 1, "--out", tmp_path / "e")
        assert code == 0
        assert json.loads((tmp_path / "e" / "manifest.json").read_text())["pairs"] == []

    def test_byte_identical(self, tmp_path, capsys):
        for name in ("a", "b"):
            assert run(capsys, "synth", "--count", 100, "--seed", 7, "--out", tmp_path / name)[0] == 0
        names = sorted(p.name for p in (tmp_path / "a").iterdir())
        assert len(names) == 202  # 100 pairs + manifest + ontology
        for n in names:
            assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()

    def test_unwritable(self, tmp_path, capsys):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        code, _, err = run(capsys, "synth", "--count", 1, "--out", blocker / "sub")
        assert code == 2 and "cannot write" in err


class TestTrain:
    def test_zero_epochs_writes_initial_params(self, dataset, tmp_path, capsys):
        code, out, _ = run(capsys, *train_args(dataset, tmp_path, "training.epochs=0", "training.seed=4"))
        assert code == 0
        params, manifest = load_checkpoint(tmp_path / "ck.json")
        from radgraphgen.model import ModelConfig
        from radgraphgen.network import RadGraphFormer

        init = RadGraphFormer(ModelConfig(**manifest["model"]), seed=4)
        for name, p in init.named_parameters():
            assert params[name].numpy().tobytes() == p.detach().numpy().tobytes()
        assert (tmp_path / "m.jsonl").read_text() == ""
        assert {"entity_f1", "relation_f1"} <= set(json.loads(out))

    def test_vanilla_checkpoint_has_no_schemata(self, dataset, tmp_path, capsys):
        code, _, _ = run(capsys, *train_args(dataset, tmp_path, "training.epochs=1", "mode=vanilla"))
        assert code == 0
        _, manifest = load_checkpoint(tmp_path / "ck.json")
        names = [e["name"] for e in manifest["params"]]
        assert names and not any("schemata" in n for n in names)
        assert manifest["model"]["mode"] == "vanilla"

    def test_resume_reproduces_logged_metrics(self, dataset, tmp_path, capsys):
        code, out, _ = run(capsys, *train_args(dataset, tmp_path, "training.epochs=3", "training.lr=0.003"))
        assert code == 0
        last = json.loads((tmp_path / "m.jsonl").read_text().splitlines()[-1])
        printed = json.loads(out)
        assert (printed["entity_f1"], printed["relation_f1"]) == (last["entity_f1"], last["relation_f1"])
        resume_dir = tmp_path / "resume"
        resume_dir.mkdir()
        code, out, _ = run(capsys, *train_args(dataset, resume_dir, "training.epochs=0"), "--resume", tmp_path / "ck.json")
        assert code == 0
        again = json.loads(out)
        assert (again["entity_f1"], again["relation_f1"]) == (last["entity_f1"], last["relation_f1"])

    def test_config_errors_listed(self, capsys):
        code, _, err = run(capsys, "train", "--set", "model.nope=1", "--set", "training.oops=2")
        assert code == 1
        assert "model.nope" in err and "training.oops" in err

    def test_missing_config_file(self, tmp_path, capsys):
        assert run(capsys, "train", "--config", tmp_path / "none.json")[0] == 2


class TestInferEval:
    @pytest.fixture
    def checkpoint(self, dataset, tmp_path, capsys):
        assert run(capsys, *train_args(dataset, tmp_path, "training.epochs=0"))[0] == 0
        return tmp_path / "ck.json"

    def test_infer_untrained(self, dataset, checkpoint, tmp_path, capsys):
        images = tmp_path / "imgs"
        images.mkdir()
        shutil.copy(dataset / "00000.pgm", images / "a.pgm")
        shutil.copy(dataset / "00000.pgm", images / "b.pgm")
        code, _, _ = run(capsys, "infer", "--checkpoint", checkpoint, "--images", images, "--out", tmp_path / "pred")
        assert code == 0
        a = (tmp_path / "pred" / "a.graph.json").read_bytes()
        assert a == (tmp_path / "pred" / "b.graph.json").read_bytes()
        read_graph(tmp_path / "pred" / "a.graph.json", synthetic_classes())

    def test_incompatible_checkpoint(self, checkpoint, dataset, tmp_path, capsys):
        manifest = json.loads(checkpoint.read_text())
        manifest["model"]["num_classes"] = 7
        checkpoint.write_text(json.dumps(manifest))
        code, _, err = run(capsys, "infer", "--checkpoint", checkpoint, "--images", dataset, "--out", tmp_path / "p")
        assert code == 1 and "heads.cls.weight" in err

    def test_eval_self(self, dataset, capsys):
        code, out, _ = run(capsys, "eval", "--pred", dataset, "--gt", dataset)
        report = json.loads(out)
        assert code == 0 and report["entity"]["f1"] == 1.0 and report["relation"]["f1"] == 1.0

    def test_eval_missing_file(self, dataset, tmp_path, capsys):
        gt = tmp_path / "gt"
        shutil.copytree(dataset, gt)
        (gt / "00003.graph.json").unlink()
        code, _, err = run(capsys, "eval", "--pred", dataset, "--gt", gt)
        assert code == 2 and "00003.graph.json" in err


def test_report_and_labels(dataset, tmp_path, capsys):
    code, out, _ = run(capsys, "report", "--graphs", dataset, "--out", tmp_path / "txt")
    reports = json.loads(out)
    assert code == 0 and len(reports) == 8
    assert (tmp_path / "txt" / "00000.txt").read_text().strip() == reports["00000"]
    code, out, _ = run(capsys, "labels", "--graphs", dataset)
    labels = json.loads(out)
    assert code == 0 and set(labels["00000"]) == {"Lesion", "Mass", "Collapse", "Fracture"}


def test_gradcheck_command(capsys):
    code, out, _ = run(capsys, "gradcheck", "--coords", 3)
    result = json.loads(out)
    assert code == 0 and result["passed"] and result["max_relative_error"] < 1e-4


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "radgraphgen", "synth", "--count", "1", "--out", str(tmp_path)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "00000.graph.json").exists()
