"""Batch command-line front end.

Subcommands compose into a reproducible pipeline::

    textborder augment  --dataset data/ --format msra --out out/aug
    textborder labels   --dataset data/ --format msra --out out/labels
    textborder simulate --labels out/labels --out out/preds
    textborder decode   --preds out/preds --out out/dets
    textborder evaluate --dataset data/ --format msra --dets out/dets --out out/report
    textborder losscheck --out out/losscheck

Every command is a pure function of (inputs, config, seed); reruns are
byte-identical except for manifest timestamps.  Exit codes: 0 success,
1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import multiprocessing
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image

from . import annotations as ann_io
from .annotations import AnnotatedImage, AnnotationError
from .augment import augment_image
from .decoder import DecodeParams, NoiseSpec, PredictionMaps, decode, oracle_predict
from .evaluate import ICDAR13, ONE_TO_ONE, combine_reports, match_icdar13, match_one_to_one
from .labels import (LabelMaps, MapFormatError, rasterize_labels, read_fmap,
                     read_maps, write_fmap)
from .losses import (LossWeights, finite_difference, iou_loss, masked_dice_loss,
                     relative_gradient_error, total_loss)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".JPG", ".PNG")
GRADIENT_TOLERANCE = 1e-4


class UsageError(Exception):
    """Bad invocation or configuration; exit code 1."""


class DataError(Exception):
    """Unreadable or inconsistent input data; exit code 2."""


@dataclass
class PipelineConfig:
    dataset_root: str = ""
    format: str = "msra"               # msra | icdar13 | icdar17
    seed: int = 0
    augment_count: int = 20
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    decoder: DecodeParams = field(default_factory=DecodeParams)
    protocol: str = ONE_TO_ONE
    iou_threshold: float = 0.5
    angle_threshold: float = math.pi / 8.0
    recall_threshold: float = 0.8
    precision_threshold: float = 0.4
    stride: int = 1
    out_dir: str = "out"
    labels_dir: str = ""
    predictions_dir: str = ""
    detections_dir: str = ""
    jobs: int = 1
    overlay: bool = False
    include_difficult: bool = True

    @classmethod
    def from_json(cls, path: str) -> "PipelineConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                payload = json.load(fh)
        except OSError as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(payload)

    @classmethod
    def from_dict(cls, payload: dict) -> "PipelineConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(payload) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(payload)
        if "noise" in kwargs and isinstance(kwargs["noise"], dict):
            kwargs["noise"] = NoiseSpec(**kwargs["noise"])
        if "decoder" in kwargs and isinstance(kwargs["decoder"], dict):
            kwargs["decoder"] = DecodeParams(**kwargs["decoder"])
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise UsageError(str(exc)) from exc

    def as_manifest_dict(self) -> dict:
        payload = dataclasses.asdict(self)
        return payload


def _gt_path(image_path: Path, fmt: str) -> Path:
    if fmt == "msra":
        return image_path.with_suffix(".gt")
    return image_path.parent / f"gt_{image_path.stem}.txt"


def discover_corpus(root: str, fmt: str) -> list[tuple[Path, Path]]:
    """Pair image files with their ground-truth files, sorted by name."""
    root_path = Path(root)
    if not root_path.is_dir():
        raise DataError(f"dataset root {root} is not a directory")
    pairs = []
    for path in sorted(root_path.iterdir()):
        if path.suffix in IMAGE_SUFFIXES:
            gt = _gt_path(path, fmt)
            if not gt.exists():
                raise DataError(f"missing ground truth for {path.name}: {gt.name}")
            pairs.append((path, gt))
    if not pairs:
        raise DataError(f"no images found under {root}")
    return pairs


def load_annotated(image_path: Path, gt_path: Path, fmt: str,
                   include_difficult: bool = True) -> tuple[np.ndarray, AnnotatedImage]:
    try:
        with Image.open(image_path) as img:
            pixels = np.asarray(img.convert("RGB"))
    except OSError as exc:
        raise DataError(f"cannot read image {image_path}: {exc}") from exc
    try:
        text = gt_path.read_text(encoding="utf-8")
        boxes = ann_io.parse(text, fmt)
    except (AnnotationError, ValueError) as exc:
        raise DataError(f"{gt_path}: {exc}") from exc
    if not include_difficult:
        boxes = ann_io.drop_difficult(boxes)
    annotated = AnnotatedImage(path=str(image_path), width=pixels.shape[1],
                               height=pixels.shape[0], annotations=boxes)
    try:
        annotated.validate()
    except ValueError as exc:
        raise DataError(f"{gt_path}: {exc}") from exc
    return pixels, annotated


def atomic_write_bytes(path: Path, payload: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: Path, payload: str) -> None:
    atomic_write_bytes(path, payload.encode("utf-8"))


def save_png(path: Path, image: np.ndarray) -> None:
    import io

    buffer = io.BytesIO()
    Image.fromarray(image).save(buffer, format="PNG")
    atomic_write_bytes(path, buffer.getvalue())


def save_fmap(path: Path, array: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    os.close(fd)
    try:
        write_fmap(tmp, array)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_manifest(out_dir: Path, command: str, config: PipelineConfig,
                   entries: list[dict]) -> None:
    manifest = {
        "command": command,
        "config": config.as_manifest_dict(),
        "entries": entries,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    atomic_write_text(out_dir / "manifest.json",
                      json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _map_jobs(worker, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [worker(item) for item in items]
    with multiprocessing.Pool(processes=jobs) as pool:
        return pool.map(worker, items)


def _image_seed(seed: int, index: int) -> int:
    return (seed ^ index) & 0x7FFFFFFF


# ---------------------------------------------------------------------------
# augment


def _augment_one(task) -> list[dict]:
    config, index, image_path, gt_path = task
    pixels, annotated = load_annotated(image_path, gt_path, config.format,
                                       config.include_difficult)
    seed = _image_seed(config.seed, index)
    rng = np.random.default_rng(seed)
    out_dir = Path(config.out_dir)
    entries = []
    outputs = augment_image(pixels, annotated, config.augment_count, rng,
                            source_id=image_path.stem, seed=seed)
    for k, result in enumerate(outputs):
        stem = f"{image_path.stem}_aug{k:03d}"
        save_png(out_dir / f"{stem}.png", result.image)
        atomic_write_text(out_dir / f"{stem}.gt", ann_io.write_msra(result.annotations))
        entries.append({
            "source": image_path.name,
            "output": f"{stem}.png",
            "seed": seed,
            "windows": [
                {"center": [round(w.center[0], 3), round(w.center[1], 3)],
                 "length": round(w.length, 3)}
                for w in result.windows
            ],
        })
    return entries


def cmd_augment(config: PipelineConfig) -> int:
    if config.augment_count < 1:
        raise UsageError("count must be >= 1")
    pairs = discover_corpus(config.dataset_root, config.format)
    tasks = [(config, i, img, gt) for i, (img, gt) in enumerate(pairs)]
    all_entries = _map_jobs(_augment_one, tasks, config.jobs)
    entries = [e for group in all_entries for e in group]
    write_manifest(Path(config.out_dir), "augment", config, entries)
    return 0


# ---------------------------------------------------------------------------
# labels


def _labels_one(task) -> dict:
    config, index, image_path, gt_path = task
    _, annotated = load_annotated(image_path, gt_path, config.format,
                                  config.include_difficult)
    maps = rasterize_labels(annotated, stride=config.stride)
    out_path = Path(config.out_dir) / f"{image_path.stem}.fmap"
    save_fmap(out_path, maps.to_array(include_validity=True))
    return {"source": image_path.name, "output": out_path.name,
            "stride": config.stride, "boxes": len(annotated.annotations)}


def cmd_labels(config: PipelineConfig) -> int:
    pairs = discover_corpus(config.dataset_root, config.format)
    tasks = [(config, i, img, gt) for i, (img, gt) in enumerate(pairs)]
    entries = _map_jobs(_labels_one, tasks, config.jobs)
    write_manifest(Path(config.out_dir), "labels", config, entries)
    return 0


# ---------------------------------------------------------------------------
# simulate


def _find_fmaps(directory: str) -> list[Path]:
    root = Path(directory)
    if not root.is_dir():
        raise DataError(f"{directory} is not a directory")
    files = sorted(root.glob("*.fmap"))
    if not files:
        raise DataError(f"no .fmap files under {directory}")
    return files


def _simulate_one(task) -> dict:
    config, index, label_path = task
    try:
        maps = read_maps(label_path)
    except MapFormatError as exc:
        raise DataError(f"{label_path}: {exc}") from exc
    seed = _image_seed(config.seed, index)
    rng = np.random.default_rng(seed)
    preds = oracle_predict(maps, config.noise, rng)
    out_path = Path(config.out_dir) / label_path.name
    save_fmap(out_path, preds.to_array())
    return {"source": label_path.name, "output": out_path.name, "seed": seed}


def cmd_simulate(config: PipelineConfig) -> int:
    labels_dir = config.labels_dir or config.dataset_root
    files = _find_fmaps(labels_dir)
    tasks = [(config, i, path) for i, path in enumerate(files)]
    entries = _map_jobs(_simulate_one, tasks, config.jobs)
    write_manifest(Path(config.out_dir), "simulate", config, entries)
    return 0


# ---------------------------------------------------------------------------
# decode


BORDER_OVERLAY_COLORS = ((0, 200, 0), (0, 80, 255), (255, 200, 0), (230, 30, 30))


def render_overlay(image: np.ndarray, preds: PredictionMaps, boxes) -> np.ndarray:
    """Diagnostic overlay: binarized border bands in four colors plus the
    decoded box outlines."""
    from .decoder import binarize

    out = image.copy()
    for k in range(4):
        mask = binarize(preds.borders[k])
        color = np.array(BORDER_OVERLAY_COLORS[k], dtype=np.float64)
        out[mask] = (0.45 * out[mask] + 0.55 * color).astype(np.uint8)
    pil = Image.fromarray(out)
    from PIL import ImageDraw

    draw = ImageDraw.Draw(pil)
    for det in boxes:
        pts = [tuple(p) for p in det.box.corners()]
        draw.polygon(pts, outline=(0, 255, 60), width=2)
    return np.asarray(pil)


def _decode_one(task) -> dict:
    config, index, pred_path = task
    try:
        preds = PredictionMaps.from_array(read_fmap(pred_path))
    except MapFormatError as exc:
        raise DataError(f"{pred_path}: {exc}") from exc
    params = replace(config.decoder, stride=config.stride)
    boxes = decode(preds, params)
    fmt = "msra" if config.format in ("msra", "icdar13") else "quad"
    out_path = Path(config.out_dir) / f"{pred_path.stem}.txt"
    atomic_write_text(out_path, ann_io.write_detections(boxes, fmt))
    entry = {"source": pred_path.name, "output": out_path.name,
             "detections": len(boxes), "format": fmt}
    if config.overlay:
        image_path = _find_image(config.dataset_root, pred_path.stem)
        if image_path is not None:
            with Image.open(image_path) as img:
                pixels = np.asarray(img.convert("RGB"))
            if pixels.shape[:2] == preds.shape:
                overlay = render_overlay(pixels, preds, boxes)
                save_png(Path(config.out_dir) / f"{pred_path.stem}_overlay.png", overlay)
                entry["overlay"] = f"{pred_path.stem}_overlay.png"
    return entry


def _find_image(root: str, stem: str) -> Path | None:
    if not root:
        return None
    for suffix in IMAGE_SUFFIXES:
        candidate = Path(root) / f"{stem}{suffix}"
        if candidate.exists():
            return candidate
    return None


def cmd_decode(config: PipelineConfig) -> int:
    preds_dir = config.predictions_dir or config.dataset_root
    files = _find_fmaps(preds_dir)
    tasks = [(config, i, path) for i, path in enumerate(files)]
    entries = _map_jobs(_decode_one, tasks, config.jobs)
    write_manifest(Path(config.out_dir), "decode", config, entries)
    return 0


# ---------------------------------------------------------------------------
# evaluate


def cmd_evaluate(config: PipelineConfig) -> int:
    pairs = discover_corpus(config.dataset_root, config.format)
    dets_dir = Path(config.detections_dir)
    if not dets_dir.is_dir():
        raise DataError(f"detections directory {dets_dir} does not exist")
    det_fmt = "msra" if config.format in ("msra", "icdar13") else "quad"

    reports = []
    for image_path, gt_path in pairs:
        try:
            gts = ann_io.parse(gt_path.read_text(encoding="utf-8"), config.format)
        except (AnnotationError, ValueError) as exc:
            raise DataError(f"{gt_path}: {exc}") from exc
        det_path = dets_dir / f"{image_path.stem}.txt"
        if det_path.exists():
            try:
                dets = ann_io.read_detections(det_path.read_text(encoding="utf-8"),
                                              det_fmt)
            except (AnnotationError, ValueError) as exc:
                raise DataError(f"{det_path}: {exc}") from exc
        else:
            dets = []
        if config.protocol == ONE_TO_ONE:
            reports.append(match_one_to_one(gts, dets,
                                            iou_threshold=config.iou_threshold,
                                            angle_threshold=config.angle_threshold))
        elif config.protocol == ICDAR13:
            reports.append(match_icdar13(gts, dets,
                                         recall_threshold=config.recall_threshold,
                                         precision_threshold=config.precision_threshold))
        else:
            raise UsageError(f"unknown protocol {config.protocol!r}")

    report = combine_reports(reports)
    out_dir = Path(config.out_dir)
    atomic_write_text(out_dir / "report.json", report.to_json() + "\n")
    atomic_write_text(out_dir / "report.txt", report.format_table())
    write_manifest(out_dir, "evaluate", config,
                   [{"images": len(pairs), "recall": report.recall,
                     "precision": report.precision, "fscore": report.fscore}])
    sys.stdout.write(report.format_table())
    return 0


# ---------------------------------------------------------------------------
# losscheck


def _random_map_pair(rng: np.random.Generator, size: int = 16):
    text = (rng.random((size, size)) < 0.4).astype(np.float32)
    borders = (rng.random((4, size, size)) < 0.2).astype(np.float32)
    distances = rng.uniform(1.0, 20.0, (4, size, size)).astype(np.float32)
    labels = LabelMaps(text=text, borders=borders, distances=distances,
                       validity=np.ones((size, size), dtype=np.float32))
    preds = PredictionMaps(text=rng.random((size, size)).astype(np.float32),
                           borders=rng.random((4, size, size)).astype(np.float32),
                           distances=rng.uniform(1.0, 20.0, (4, size, size))
                           .astype(np.float32))
    return labels, preds


def cmd_losscheck(config: PipelineConfig) -> int:
    rng = np.random.default_rng(config.seed)
    worst_dice = 0.0
    worst_iou = 0.0
    worst_split = 0.0
    for _ in range(20):
        truth = (rng.random((16, 16)) < 0.4).astype(np.float64)
        pred = rng.random((16, 16))
        mask = np.ones_like(truth)
        _, grad = masked_dice_loss(truth, pred, mask, with_grad=True)
        numeric = finite_difference(
            lambda p: masked_dice_loss(truth, p, mask), pred.copy())
        worst_dice = max(worst_dice, relative_gradient_error(grad, numeric))

        dist_truth = rng.uniform(1.0, 30.0, (4, 16))
        dist_pred = rng.uniform(1.0, 30.0, (4, 16))
        _, grad, _ = iou_loss(dist_truth, dist_pred, with_grad=True)
        numeric = finite_difference(lambda d: iou_loss(dist_truth, d),
                                    dist_pred.copy())
        worst_iou = max(worst_iou, relative_gradient_error(grad, numeric))

        labels, preds = _random_map_pair(rng)
        weights = LossWeights(loc=float(rng.uniform(0.0, 2.0)),
                              brd=float(rng.uniform(0.0, 2.0)))
        report = total_loss(labels, preds, weights)
        recombined = report.cls + weights.loc * report.loc + weights.brd * report.brd
        worst_split = max(worst_split, abs(report.total - recombined))

    passed = (worst_dice < GRADIENT_TOLERANCE and worst_iou < GRADIENT_TOLERANCE
              and worst_split == 0.0)
    payload = {
        "dice_max_relative_error": worst_dice,
        "iou_max_relative_error": worst_iou,
        "total_decomposition_error": worst_split,
        "tolerance": GRADIENT_TOLERANCE,
        "passed": passed,
    }
    out_dir = Path(config.out_dir)
    atomic_write_text(out_dir / "losscheck.json",
                      json.dumps(payload, indent=2, sort_keys=True) + "\n")
    write_manifest(out_dir, "losscheck", config, [payload])
    for name, value in (("dice", worst_dice), ("iou", worst_iou)):
        status = "ok" if value < GRADIENT_TOLERANCE else "FAIL"
        sys.stdout.write(f"losscheck {name}: max relative error {value:.2e} [{status}]\n")
    return 0 if passed else 2


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="textborder",
                     description="Scene-text toolbox: augmentation, labels, "
                                 "decoding and evaluation pipelines")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--dataset", help="dataset root (images + ground truth)")
        p.add_argument("--format", choices=("msra", "icdar13", "icdar17"))
        p.add_argument("--seed", type=int)
        p.add_argument("--jobs", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--stride", type=int)

    p = sub.add_parser("augment", help="write resampled training images")
    common(p)
    p.add_argument("--count", type=int, help="augmented copies per image")

    p = sub.add_parser("labels", help="rasterize ground-truth label maps")
    common(p)

    p = sub.add_parser("simulate", help="synthesize noisy prediction maps")
    common(p)
    p.add_argument("--labels", help="directory of label .fmap files")
    p.add_argument("--noise-sigma-score", type=float)
    p.add_argument("--noise-sigma-dist", type=float)
    p.add_argument("--noise-dropout", type=float)
    p.add_argument("--noise-blur", type=float)

    p = sub.add_parser("decode", help="decode prediction maps into boxes")
    common(p)
    p.add_argument("--preds", help="directory of prediction .fmap files")
    p.add_argument("--nms-iou", type=float)
    p.add_argument("--min-area", type=float)
    p.add_argument("--no-borders", action="store_true",
                   help="ablation: ignore border channels")
    p.add_argument("--strict-merge", action="store_true",
                   help="drop boxes seen from only one end")
    p.add_argument("--overlay", action="store_true",
                   help="write diagnostic overlay PNGs")

    p = sub.add_parser("evaluate", help="score detections against ground truth")
    common(p)
    p.add_argument("--dets", help="directory of detection .txt files")
    p.add_argument("--protocol", choices=(ONE_TO_ONE, ICDAR13))
    p.add_argument("--iou-threshold", type=float)

    p = sub.add_parser("losscheck", help="gradient-check the loss functions")
    common(p)

    return parser


def config_from_args(args: argparse.Namespace) -> PipelineConfig:
    config = (PipelineConfig.from_json(args.config) if args.config
              else PipelineConfig())
    updates: dict = {}
    direct = {
        "dataset": "dataset_root", "format": "format", "seed": "seed",
        "jobs": "jobs", "out": "out_dir", "stride": "stride",
        "count": "augment_count", "labels": "labels_dir", "preds": "predictions_dir",
        "dets": "detections_dir", "protocol": "protocol",
        "iou_threshold": "iou_threshold",
    }
    for arg_name, field_name in direct.items():
        value = getattr(args, arg_name, None)
        if value is not None:
            updates[field_name] = value
    config = replace(config, **updates)

    noise_updates = {}
    for arg_name, field_name in (("noise_sigma_score", "sigma_score"),
                                 ("noise_sigma_dist", "sigma_dist"),
                                 ("noise_dropout", "dropout"),
                                 ("noise_blur", "blur_radius")):
        value = getattr(args, arg_name, None)
        if value is not None:
            noise_updates[field_name] = value
    if noise_updates:
        config = replace(config, noise=replace(config.noise, **noise_updates))

    decoder_updates = {}
    if getattr(args, "nms_iou", None) is not None:
        decoder_updates["nms_iou"] = args.nms_iou
    if getattr(args, "min_area", None) is not None:
        decoder_updates["min_component_area"] = args.min_area
    if getattr(args, "no_borders", False):
        decoder_updates["use_borders"] = False
    if getattr(args, "strict_merge", False):
        decoder_updates["keep_singletons"] = False
    if decoder_updates:
        config = replace(config, decoder=replace(config.decoder, **decoder_updates))
    if getattr(args, "overlay", False):
        config = replace(config, overlay=True)

    if config.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    if config.stride not in (1, 2, 4):
        raise UsageError("--stride must be 1, 2 or 4")
    return config


COMMANDS = {
    "augment": cmd_augment,
    "labels": cmd_labels,
    "simulate": cmd_simulate,
    "decode": cmd_decode,
    "evaluate": cmd_evaluate,
    "losscheck": cmd_losscheck,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        config = config_from_args(args)
        Path(config.out_dir).mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](config)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
