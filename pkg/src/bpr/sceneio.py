"""Scene interchange directories.

Layout::

    <scene>/image.png        8-bit RGB
    <scene>/pred.json        [{"id", "category_id", "score", "mask": "masks/<id>.png"}, ...]
    <scene>/gt.json          optional, same schema
    <scene>/masks/*.png      8-bit gray, nonzero = foreground

Prediction and GT masks share ``masks/``; GT files are prefixed ``gt_`` so ids
may overlap between the two lists.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from .maskcore import Instance, Scene


class SceneFormatError(ValueError):
    """A scene directory exists but its contents are malformed."""


def _read_png(path: Path, mode: str) -> np.ndarray:
    try:
        with Image.open(path) as im:
            if mode == "RGB" and im.mode != "RGB":
                im = im.convert("RGB")
            elif mode == "L" and im.mode not in ("L", "1", "P"):
                im = im.convert("L")
            return np.asarray(im)
    except FileNotFoundError:
        raise
    except OSError as exc:
        raise SceneFormatError(f"{path}: unreadable PNG ({exc})") from exc


def write_png(path, arr: np.ndarray) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arr = np.asarray(arr)
    if arr.dtype == bool:
        arr = arr.astype(np.uint8) * 255
    Image.fromarray(arr).save(path)


def read_mask_png(path) -> np.ndarray:
    arr = _read_png(Path(path), "L")
    if arr.ndim == 3:
        arr = arr[..., 0]
    return arr != 0


def read_rgb_png(path) -> np.ndarray:
    return _read_png(Path(path), "RGB").astype(np.uint8)


def _read_instances(scene_dir: Path, name: str, shape: tuple) -> list:
    path = scene_dir / name
    try:
        entries = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SceneFormatError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(entries, list):
        raise SceneFormatError(f"{path}: expected a list of instances")
    out = []
    for entry in entries:
        try:
            mask_path = scene_dir / entry["mask"]
            inst_id, cat, score = int(entry["id"]), int(entry["category_id"]), float(entry["score"])
        except (KeyError, TypeError, ValueError) as exc:
            raise SceneFormatError(f"{path}: bad entry {entry!r} ({exc})") from exc
        mask = read_mask_png(mask_path)
        if mask.shape != shape:
            raise SceneFormatError(f"{mask_path}: mask shape {mask.shape} != image shape {shape}")
        try:
            out.append(Instance(inst_id, cat, score, mask))
        except ValueError as exc:
            raise SceneFormatError(f"{path}: {exc}") from exc
    return out


def read_scene(scene_dir) -> Scene:
    scene_dir = Path(scene_dir)
    image = read_rgb_png(scene_dir / "image.png")
    shape = image.shape[:2]
    preds = _read_instances(scene_dir, "pred.json", shape)
    gt = None
    if (scene_dir / "gt.json").exists():
        gt = _read_instances(scene_dir, "gt.json", shape)
    try:
        return Scene(image, preds, gt, name=scene_dir.name)
    except ValueError as exc:
        raise SceneFormatError(f"{scene_dir}: {exc}") from exc


def _write_instances(scene_dir: Path, name: str, insts: list, prefix: str) -> None:
    entries = []
    for inst in insts:
        rel = f"masks/{prefix}{inst.instance_id}.png"
        write_png(scene_dir / rel, inst.mask)
        entries.append(
            {"id": inst.instance_id, "category_id": inst.category_id, "score": inst.score, "mask": rel}
        )
    (scene_dir / name).write_text(json.dumps(entries, indent=1))


def write_scene(scene: Scene, scene_dir, with_gt: bool = True) -> Path:
    scene_dir = Path(scene_dir)
    scene_dir.mkdir(parents=True, exist_ok=True)
    write_png(scene_dir / "image.png", scene.image)
    _write_instances(scene_dir, "pred.json", scene.predictions, "")
    if with_gt and scene.ground_truth is not None:
        _write_instances(scene_dir, "gt.json", scene.ground_truth, "gt_")
    return scene_dir


def is_scene_dir(path) -> bool:
    return (Path(path) / "image.png").is_file()


def scene_dirs(root) -> list:
    """A scene directory itself, or its scene subdirectories in sorted order."""
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"{root}: no such directory")
    if is_scene_dir(root):
        return [root]
    found = sorted(p for p in root.iterdir() if p.is_dir() and is_scene_dir(p))
    if not found:
        raise SceneFormatError(f"{root}: neither a scene nor a directory of scenes")
    return found


def read_corpus(root) -> list:
    return [read_scene(d) for d in scene_dirs(root)]


def write_corpus(scenes: list, root, with_gt: bool = True) -> list:
    root = Path(root)
    return [write_scene(s, root / (s.name or f"scene_{i:04d}"), with_gt) for i, s in enumerate(scenes)]

