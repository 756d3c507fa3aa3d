"""Patch refiners and the exchange-directory bridge to external models.

A refiner maps a 4-channel patch (RGB crop plus the coarse mask crop) to a
foreground probability per pixel. Built-in refiners work at native crop
resolution; resizing to a network input size happens only in
:func:`export_patches` / :func:`import_refined`.

Exchange directory layout::

    manifest.json     {"version": 1, "patch_size", "pad", "input_size", "entries": [...]}
    img/<k>.png       RGB crop resized to input_size (bilinear)
    mask/<k>.png      mask crop resized to input_size (nearest)
    gt/<k>.png        optional GT crop (nearest)
    out/<k>.f32       written by the external tool: little-endian float32,
                      input_size**2 values in [0, 1], row-major
"""
from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import ndimage

from . import resample
from .extract import Patch, PatchSpec, SquareBox
from .maskcore import Scene, boundary_map, iou_matrix
from .sceneio import read_mask_png, write_png

log = logging.getLogger(__name__)

MANIFEST_VERSION = 1


class RefinerKind(str, enum.Enum):
    IDENTITY = "identity"
    ORACLE = "oracle"
    COLOR_MODEL = "colormodel"
    EXTERNAL = "external"


@dataclass(frozen=True)
class ColorModelParams:
    band_margin: int = 3
    covariance_floor: float = 25.0
    min_seeds: int = 10

    def __post_init__(self):
        if self.band_margin < 1:
            raise ValueError("band_margin must be >= 1")
        if self.covariance_floor <= 0:
            raise ValueError("covariance_floor must be > 0")
        if self.min_seeds < 2:
            raise ValueError("min_seeds must be >= 2")


@dataclass(frozen=True)
class RefinedPatch:
    spec: PatchSpec
    probs: np.ndarray = field(repr=False)

    def __post_init__(self):
        side = self.spec.box.size
        if self.probs.shape != (side, side):
            raise ValueError(f"patch {self.spec.patch_id}: probs shape {self.probs.shape} != {(side, side)}")


class ExchangeError(ValueError):
    """Invalid manifest or refiner output files in an exchange directory."""

    def __init__(self, message: str, patch_ids=()):
        super().__init__(message)
        self.patch_ids = list(patch_ids)


def strip_pad(probs: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return probs
    return probs[pad:-pad, pad:-pad]


def colormodel_refine(patch: Patch, params: ColorModelParams = ColorModelParams()) -> np.ndarray:
    """Per-pixel P(foreground) from two diagonal RGB Gaussians.

    Seeds are in-image pixels farther than ``band_margin`` from the coarse
    mask's boundary inside the crop, split by mask side. Falls back to the
    mask itself when either side has fewer than ``min_seeds`` seeds.
    Returns the probability map over the full (padded) crop.
    """
    mask = patch.mask_crop
    identity = mask.astype(np.float32)
    edge = boundary_map(mask, outside_is_background=False)
    if edge.any():
        # distance to the coarse boundary; crop edges are not object edges
        dist = ndimage.distance_transform_edt(~edge)
    else:
        dist = np.full(mask.shape, np.inf)
    far = (dist > params.band_margin) & patch.valid
    fg_seeds, bg_seeds = far & mask, far & ~mask
    if fg_seeds.sum() < params.min_seeds or bg_seeds.sum() < params.min_seeds:
        log.debug("patch %d: too few seeds, keeping coarse mask", patch.spec.patch_id)
        return identity

    rgb = patch.image_crop.astype(np.float64)
    loglik = []
    for seeds in (fg_seeds, bg_seeds):
        samples = rgb[seeds]
        mean = samples.mean(axis=0)
        var = np.maximum(samples.var(axis=0), params.covariance_floor)
        z = ((rgb - mean) ** 2 / var).sum(axis=-1)
        loglik.append(-0.5 * (z + np.log(var).sum()))
    # equal priors: P(fg) = sigmoid(log L_fg - log L_bg)
    diff = np.clip(loglik[0] - loglik[1], -700.0, 700.0)
    probs = 1.0 / (1.0 + np.exp(-diff))
    return probs.astype(np.float32)


def refine_patch(kind, patch: Patch, params: Optional[ColorModelParams] = None) -> RefinedPatch:
    """Run a built-in refiner and strip padding from its output."""
    kind = RefinerKind(kind)
    if kind is RefinerKind.IDENTITY:
        probs = patch.mask_crop.astype(np.float32)
    elif kind is RefinerKind.ORACLE:
        if patch.gt_crop is None:
            raise ValueError(f"oracle refiner needs a GT crop (patch {patch.spec.patch_id})")
        probs = patch.gt_crop.astype(np.float32)
    elif kind is RefinerKind.COLOR_MODEL:
        probs = colormodel_refine(patch, params or ColorModelParams())
    else:
        raise ValueError("external refinement goes through export_patches/import_refined")
    return RefinedPatch(patch.spec, strip_pad(probs, patch.spec.pad))


def select_training_instances(scene: Scene, iou_thr: float = 0.5) -> list:
    """Predictions whose greedily matched GT has IoU above ``iou_thr``.

    Pairs are taken in descending IoU order, each GT at most once; retained
    predictions carry the GT id in ``matched_gt_id``.
    """
    if scene.ground_truth is None:
        raise ValueError("scene has no ground truth")
    return [p for p in match_to_gt(scene, iou_thr) if p.matched_gt_id is not None]


def match_to_gt(scene: Scene, iou_thr: float = 0.5) -> list:
    """All predictions, annotated with a greedy best-IoU GT match (or None)."""
    preds, gts = scene.predictions, scene.ground_truth or []
    ious = iou_matrix([p.mask for p in preds], [g.mask for g in gts])
    assigned = {}
    if ious.size:
        pi, gi = np.nonzero(ious > iou_thr)
        # stable tie-break: prediction order, then GT order
        order = np.lexsort((gi, pi, -ious[pi, gi]))
        used_p, used_g = set(), set()
        for k in order:
            p, g = int(pi[k]), int(gi[k])
            if p in used_p or g in used_g:
                continue
            used_p.add(p)
            used_g.add(g)
            assigned[p] = gts[g].instance_id
    return [replace(p, matched_gt_id=assigned.get(i)) for i, p in enumerate(preds)]


def _entry_for(patch: Patch, k: int, with_gt: bool) -> dict:
    box = patch.spec.box
    entry = {
        "patch_id": patch.spec.patch_id,
        "instance_id": patch.spec.instance_id,
        "box": {"x": box.x, "y": box.y, "size": box.size},
        "image": f"img/{k}.png",
        "mask": f"mask/{k}.png",
        "out": f"out/{k}.f32",
        "score": patch.spec.score,
    }
    if with_gt:
        entry["gt"] = f"gt/{k}.png"
    return entry


def export_patches(
    patches: list,
    input_size: int,
    out_dir,
    patch_size: Optional[int] = None,
    pad: Optional[int] = None,
) -> dict:
    """Write patches for an external refiner and return the manifest."""
    out_dir = Path(out_dir)
    if patches:
        patch_size = patches[0].spec.box.size if patch_size is None else patch_size
        pad = patches[0].spec.pad if pad is None else pad
    if patch_size is None or pad is None:
        raise ValueError("patch_size and pad are required when exporting no patches")
    crop = patch_size + 2 * pad
    if input_size < crop:
        raise ValueError(f"input_size {input_size} smaller than crop side {crop}")
    ids = [p.spec.patch_id for p in patches]
    if len(set(ids)) != len(ids):
        raise ValueError("patch ids must be unique within one exchange directory")
    with_gt = bool(patches) and all(p.gt_crop is not None for p in patches)
    entries = []
    try:
        (out_dir / "out").mkdir(parents=True, exist_ok=True)
        for k, patch in enumerate(patches):
            side = patch.spec.crop_box.size
            if side != crop:
                raise ValueError(f"patch {patch.spec.patch_id}: crop side {side} != {crop}")
            entry = _entry_for(patch, k, with_gt)
            img = patch.image_crop
            if input_size != side:
                img = np.clip(np.rint(resample.resize_bilinear(img, input_size, input_size)), 0, 255)
            write_png(out_dir / entry["image"], img.astype(np.uint8))
            write_png(out_dir / entry["mask"], resample.resize_nearest(patch.mask_crop, input_size, input_size))
            if with_gt:
                write_png(out_dir / entry["gt"], resample.resize_nearest(patch.gt_crop, input_size, input_size))
            entries.append(entry)
        manifest = {
            "version": MANIFEST_VERSION,
            "patch_size": patch_size,
            "pad": pad,
            "input_size": input_size,
            "entries": entries,
        }
        # manifest last: its presence marks a complete export
        (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=1))
    except OSError as exc:
        raise OSError(f"export to {out_dir} failed: {exc}") from exc
    return manifest


def load_manifest(exchange_dir) -> dict:
    path = Path(exchange_dir) / "manifest.json"
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ExchangeError(f"{path}: invalid JSON ({exc})") from exc
    validate_manifest(manifest, source=str(path))
    return manifest


def validate_manifest(manifest: dict, source: str = "manifest") -> None:
    if not isinstance(manifest, dict):
        raise ExchangeError(f"{source}: manifest must be an object")
    if manifest.get("version") != MANIFEST_VERSION:
        raise ExchangeError(f"{source}: unsupported version {manifest.get('version')!r}")
    for key in ("patch_size", "pad", "input_size"):
        if not isinstance(manifest.get(key), int) or manifest[key] < 0:
            raise ExchangeError(f"{source}: {key!r} must be a non-negative integer")
    if manifest["input_size"] < manifest["patch_size"] + 2 * manifest["pad"]:
        raise ExchangeError(f"{source}: input_size smaller than crop side")
    entries = manifest.get("entries")
    if not isinstance(entries, list):
        raise ExchangeError(f"{source}: 'entries' must be a list")
    seen = set()
    for entry in entries:
        try:
            int(entry["patch_id"]), int(entry["instance_id"])
            box = entry["box"]
            if int(box["size"]) != manifest["patch_size"]:
                raise ExchangeError(f"{source}: patch {entry['patch_id']} box size != patch_size")
            int(box["x"]), int(box["y"])
            for key in ("image", "mask", "out"):
                if not isinstance(entry[key], str):
                    raise TypeError(key)
        except (KeyError, TypeError, ValueError) as exc:
            raise ExchangeError(f"{source}: malformed entry {entry!r} ({exc})") from exc
        if entry["patch_id"] in seen:
            raise ExchangeError(f"{source}: duplicate patch_id {entry['patch_id']}", [entry["patch_id"]])
        seen.add(entry["patch_id"])


def _read_output(path: Path, n: int) -> np.ndarray:
    if not path.is_file():
        raise ValueError(f"missing output file {path}")
    raw = np.fromfile(path, dtype="<f4")
    if raw.size != n * n:
        raise ValueError(f"{path}: expected {n * n} float32 values, found {raw.size}")
    if not np.isfinite(raw).all():
        raise ValueError(f"{path}: contains NaN or infinite values")
    if raw.min() < 0.0 or raw.max() > 1.0:
        raise ValueError(f"{path}: values outside [0, 1]")
    return raw.reshape(n, n)


def import_refined(manifest: dict, exchange_dir) -> list:
    """Load external refiner outputs as :class:`RefinedPatch` in manifest order."""
    validate_manifest(manifest)
    exchange_dir = Path(exchange_dir)
    n, s, pad = manifest["input_size"], manifest["patch_size"], manifest["pad"]
    crop = s + 2 * pad
    out, errors, bad_ids = [], [], []
    for entry in manifest["entries"]:
        try:
            probs = _read_output(exchange_dir / entry["out"], n)
        except ValueError as exc:
            errors.append(f"patch_id {entry['patch_id']} (instance {entry['instance_id']}): {exc}")
            bad_ids.append(entry["patch_id"])
            continue
        if n != crop:
            if n % crop == 0:
                probs = resample.resize_area(probs, crop, crop)
            else:
                probs = resample.resize_bilinear(probs, crop, crop)
        probs = np.clip(probs, 0.0, 1.0).astype(np.float32)
        box = entry["box"]
        spec = PatchSpec(
            int(entry["patch_id"]),
            int(entry["instance_id"]),
            SquareBox(int(box["x"]), int(box["y"]), int(box["size"])),
            pad,
            int(entry.get("score", 0)),
        )
        out.append(RefinedPatch(spec, strip_pad(probs, pad)))
    if errors:
        raise ExchangeError("invalid refiner outputs:\n  " + "\n  ".join(errors), bad_ids)
    return out


def write_identity_outputs(exchange_dir) -> int:
    """Stand-in external refiner: echo each mask input back as probabilities."""
    exchange_dir = Path(exchange_dir)
    manifest = load_manifest(exchange_dir)
    for entry in manifest["entries"]:
        probs = read_mask_png(exchange_dir / entry["mask"]).astype("<f4")
        path = exchange_dir / entry["out"]
        path.parent.mkdir(parents=True, exist_ok=True)
        probs.tofile(path)
    return len(manifest["entries"])

