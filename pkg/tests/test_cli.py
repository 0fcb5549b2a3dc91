import json
import struct
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from textborder.annotations import write_msra
from textborder.cli import run
from textborder.synth import random_scene, render_scene


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    for i in range(4):
        rng = np.random.default_rng(300 + i)
        scene = random_scene(rng, box_count=(2, 4))
        image = render_scene(scene, rng)
        Image.fromarray(image).save(root / f"img{i:02d}.png")
        (root / f"img{i:02d}.gt").write_text(write_msra(scene.annotations))
    return root


def read_manifest(directory: Path) -> dict:
    payload = json.loads((directory / "manifest.json").read_text())
    payload.pop("timestamp")
    return payload


def tree_bytes(directory: Path) -> dict:
    out = {}
    for path in sorted(directory.rglob("*")):
        if path.is_file() and path.name != "manifest.json":
            out[str(path.relative_to(directory))] = path.read_bytes()
    return out


class TestPipelineComposition:
    def test_full_chain_quality(self, corpus, tmp_path):
        out = tmp_path
        assert run(["labels", "--dataset", str(corpus), "--format", "msra",
                    "--out", str(out / "labels")]) == 0
        assert run(["simulate", "--labels", str(out / "labels"),
                    "--out", str(out / "preds"), "--seed", "5",
                    "--noise-sigma-score", "0.05", "--noise-sigma-dist", "1",
                    "--noise-blur", "1"]) == 0
        assert run(["decode", "--preds", str(out / "preds"),
                    "--dataset", str(corpus), "--out", str(out / "dets"),
                    "--overlay"]) == 0
        assert run(["evaluate", "--dataset", str(corpus), "--format", "msra",
                    "--dets", str(out / "dets"), "--out", str(out / "report")]) == 0

        report = json.loads((out / "report" / "report.json").read_text())
        assert report["fscore"] >= 0.95
        assert (out / "dets" / "img00_overlay.png").exists()
        assert (out / "report" / "report.txt").read_text().startswith("Protocol")

    def test_full_chain_composes_through_augment(self, corpus, tmp_path):
        # the augmented corpus is a valid corpus for every later stage
        # (short sampled windows need not decode well; this checks
        # composition and turnaround, not accuracy)
        import time

        out = tmp_path
        start = time.time()
        assert run(["augment", "--dataset", str(corpus), "--format", "msra",
                    "--out", str(out / "aug"), "--seed", "1", "--count", "2"]) == 0
        assert run(["labels", "--dataset", str(out / "aug"), "--format", "msra",
                    "--out", str(out / "labels")]) == 0
        assert run(["simulate", "--labels", str(out / "labels"),
                    "--out", str(out / "preds"), "--seed", "5"]) == 0
        assert run(["decode", "--preds", str(out / "preds"),
                    "--out", str(out / "dets")]) == 0
        assert run(["evaluate", "--dataset", str(out / "aug"), "--format", "msra",
                    "--dets", str(out / "dets"), "--out", str(out / "report")]) == 0
        elapsed = time.time() - start

        report = json.loads((out / "report" / "report.json").read_text())
        assert report["fscore"] >= 0.5
        assert elapsed < 60.0

    def test_augment_writes_count_outputs(self, corpus, tmp_path):
        out = tmp_path / "aug"
        assert run(["augment", "--dataset", str(corpus), "--format", "msra",
                    "--out", str(out), "--seed", "3", "--count", "2"]) == 0
        pngs = sorted(out.glob("*.png"))
        gts = sorted(out.glob("*.gt"))
        assert len(pngs) == 8 and len(gts) == 8
        manifest = read_manifest(out)
        assert len(manifest["entries"]) == 8
        assert all("windows" in e for e in manifest["entries"])


class TestDeterminism:
    def test_rerun_byte_identical(self, corpus, tmp_path):
        for name in ("a", "b"):
            base = tmp_path / name
            run(["labels", "--dataset", str(corpus), "--format", "msra",
                 "--out", str(base / "labels")])
            run(["simulate", "--labels", str(base / "labels"),
                 "--out", str(base / "preds"), "--seed", "9",
                 "--noise-sigma-score", "0.1", "--noise-dropout", "0.05",
                 "--noise-sigma-dist", "2", "--noise-blur", "1"])
            run(["decode", "--preds", str(base / "preds"),
                 "--out", str(base / "dets")])
        for sub in ("labels", "preds", "dets"):
            assert tree_bytes(tmp_path / "a" / sub) == tree_bytes(tmp_path / "b" / sub)

    def test_jobs_do_not_change_outputs(self, corpus, tmp_path):
        for name, jobs in (("serial", "1"), ("parallel", "2")):
            run(["augment", "--dataset", str(corpus), "--format", "msra",
                 "--out", str(tmp_path / name), "--seed", "4", "--count", "2",
                 "--jobs", jobs])
        assert tree_bytes(tmp_path / "serial") == tree_bytes(tmp_path / "parallel")


class TestCliErrors:
    def test_augment_count_zero_is_usage_error(self, corpus, tmp_path, capsys):
        code = run(["augment", "--dataset", str(corpus), "--format", "msra",
                    "--out", str(tmp_path / "x"), "--count", "0"])
        assert code == 1
        assert "count must be >= 1" in capsys.readouterr().err

    def test_missing_dataset_is_data_error(self, tmp_path):
        code = run(["labels", "--dataset", str(tmp_path / "nowhere"),
                    "--format", "msra", "--out", str(tmp_path / "out")])
        assert code == 2

    def test_malformed_ground_truth_is_data_error(self, tmp_path):
        root = tmp_path / "data"
        root.mkdir()
        Image.fromarray(np.zeros((64, 64, 3), np.uint8)).save(root / "a.png")
        (root / "a.gt").write_text("1 2 3\n")
        code = run(["labels", "--dataset", str(root), "--format", "msra",
                    "--out", str(tmp_path / "out")])
        assert code == 2

    def test_unreadable_image_is_data_error(self, tmp_path, capsys):
        root = tmp_path / "data"
        root.mkdir()
        (root / "a.png").write_bytes(b"not really a png")
        (root / "a.gt").write_text("0 0 10 10 20 10 0\n")
        code = run(["labels", "--dataset", str(root), "--format", "msra",
                    "--out", str(tmp_path / "out")])
        assert code == 2
        assert "a.png" in capsys.readouterr().err

    def test_unknown_config_key_is_usage_error(self, tmp_path):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"dataset_root": ".", "fmt": "msra"}))
        code = run(["labels", "--config", str(config),
                    "--out", str(tmp_path / "out")])
        assert code == 1

    def test_unknown_flag_is_usage_error(self, tmp_path):
        assert run(["labels", "--bogus", "1"]) == 1

    def test_bad_stride_is_usage_error(self, corpus, tmp_path):
        code = run(["labels", "--dataset", str(corpus), "--format", "msra",
                    "--out", str(tmp_path / "out"), "--stride", "3"])
        assert code == 1


class TestConfigAndFlags:
    def test_config_file_with_flag_override(self, corpus, tmp_path):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({
            "dataset_root": str(corpus),
            "format": "msra",
            "seed": 12,
            "noise": {"sigma_score": 0.05, "blur_radius": 1.0},
        }))
        out = tmp_path / "labels"
        assert run(["labels", "--config", str(config), "--out", str(out)]) == 0
        manifest = read_manifest(out)
        assert manifest["config"]["seed"] == 12
        assert manifest["config"]["noise"]["sigma_score"] == 0.05

    def test_stride_flag_honored_in_fmap_header(self, corpus, tmp_path):
        out = tmp_path / "labels2"
        assert run(["labels", "--dataset", str(corpus), "--format", "msra",
                    "--out", str(out), "--stride", "2"]) == 0
        with open(next(out.glob("*.fmap")), "rb") as fh:
            magic, version, h, w, c = struct.unpack("<4sIIII", fh.read(20))
        assert magic == b"FMAP"
        assert (h, w) == (256, 256)
        assert c == 10

    def test_losscheck_reports_and_passes(self, tmp_path, capsys):
        out = tmp_path / "losscheck"
        assert run(["losscheck", "--out", str(out), "--seed", "1"]) == 0
        payload = json.loads((out / "losscheck.json").read_text())
        assert payload["passed"] is True
        assert payload["dice_max_relative_error"] < 1e-4
        stdout = capsys.readouterr().out
        assert "losscheck dice" in stdout and "[ok]" in stdout

    def test_losscheck_deterministic(self, tmp_path):
        for name in ("u", "v"):
            run(["losscheck", "--out", str(tmp_path / name), "--seed", "2"])
        a = json.loads((tmp_path / "u" / "losscheck.json").read_text())
        b = json.loads((tmp_path / "v" / "losscheck.json").read_text())
        assert a == b
