"""Boundary patch extraction.

Three schemes place square boxes on an instance mask:

* ``dense-nms``: one box per boundary pixel, centered on it, then greedy NMS
  with each box scored by the number of boundary pixels it contains.
* ``grid``: fixed tiles anchored at the image origin, keeping tiles that hold
  both foreground and background.
* ``instance``: a single square around the whole instance.

A box of even side ``s`` centered on pixel ``c`` spans ``[c - s/2, c + s/2)``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .maskcore import Instance, Scene, as_mask, boundary_map, tight_bbox

__all__ = [
    "Scheme",
    "SquareBox",
    "ExtractionConfig",
    "PatchSpec",
    "Patch",
    "candidate_boxes",
    "box_scores",
    "box_iou",
    "nms_filter",
    "grid_boxes",
    "instance_box",
    "crop_patches",
    "extract_specs",
]


class Scheme(str, enum.Enum):
    DENSE_NMS = "dense-nms"
    GRID = "grid"
    INSTANCE = "instance"


@dataclass(frozen=True)
class SquareBox:
    x: int
    y: int
    size: int

    def __post_init__(self):
        if self.size < 2 or self.size % 2:
            raise ValueError(f"box size must be even and >= 2, got {self.size}")

    def padded(self, pad: int) -> "SquareBox":
        return SquareBox(self.x - pad, self.y - pad, self.size + 2 * pad)

    def contains(self, x: int, y: int) -> bool:
        return self.x <= x < self.x + self.size and self.y <= y < self.y + self.size


@dataclass(frozen=True)
class ExtractionConfig:
    scheme: Scheme = Scheme.DENSE_NMS
    patch_size: int = 64
    pad: int = 0
    nms_threshold: float = 0.25
    grid_cell: Optional[int] = None
    instance_target: int = 256

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if self.patch_size < 2 or self.patch_size % 2:
            raise ValueError(f"patch_size must be even and >= 2, got {self.patch_size}")
        if self.pad < 0:
            raise ValueError(f"pad must be >= 0, got {self.pad}")
        if not 0.0 <= self.nms_threshold < 1.0:
            raise ValueError(f"nms_threshold must lie in [0, 1), got {self.nms_threshold}")
        if self.grid_cell is not None and self.grid_cell < 2:
            raise ValueError(f"grid_cell must be >= 2, got {self.grid_cell}")

    @property
    def cell(self) -> int:
        return self.grid_cell if self.grid_cell is not None else self.patch_size


@dataclass(frozen=True)
class PatchSpec:
    patch_id: int
    instance_id: int
    box: SquareBox
    pad: int = 0
    score: int = 0

    @property
    def crop_box(self) -> SquareBox:
        return self.box.padded(self.pad)


@dataclass(frozen=True)
class Patch:
    """Crops over ``spec.crop_box``; ``valid`` marks pixels inside the image."""

    spec: PatchSpec
    image_crop: np.ndarray = field(repr=False)
    mask_crop: np.ndarray = field(repr=False)
    valid: np.ndarray = field(repr=False)
    gt_crop: Optional[np.ndarray] = field(default=None, repr=False)


def candidate_boxes(mask, s: int) -> list:
    """One ``s``-sided box per boundary pixel, in row-major pixel order."""
    if s % 2:
        raise ValueError(f"patch size must be even, got {s}")
    ys, xs = np.nonzero(boundary_map(mask))
    half = s // 2
    return [SquareBox(x - half, y - half, s) for x, y in zip(xs.tolist(), ys.tolist())]


def box_scores(mask, boxes: list) -> np.ndarray:
    """Number of boundary pixels inside each box (integral-image lookup)."""
    bmap = boundary_map(mask)
    h, w = bmap.shape
    integral = np.zeros((h + 1, w + 1), dtype=np.int64)
    integral[1:, 1:] = bmap.cumsum(0).cumsum(1)
    if not boxes:
        return np.zeros(0, dtype=np.int64)
    x0 = np.clip([b.x for b in boxes], 0, w)
    y0 = np.clip([b.y for b in boxes], 0, h)
    x1 = np.clip([b.x + b.size for b in boxes], 0, w)
    y1 = np.clip([b.y + b.size for b in boxes], 0, h)
    return integral[y1, x1] - integral[y0, x1] - integral[y1, x0] + integral[y0, x0]


def box_iou(a: SquareBox, b: SquareBox) -> float:
    iw = max(0, min(a.x + a.size, b.x + b.size) - max(a.x, b.x))
    ih = max(0, min(a.y + a.size, b.y + b.size) - max(a.y, b.y))
    inter = iw * ih
    return inter / (a.size * a.size + b.size * b.size - inter)


def _pairwise_iou(boxes: list) -> np.ndarray:
    x = np.array([b.x for b in boxes], dtype=np.int64)
    y = np.array([b.y for b in boxes], dtype=np.int64)
    s = np.array([b.size for b in boxes], dtype=np.int64)
    iw = np.minimum(x[:, None] + s[:, None], x[None] + s[None]) - np.maximum(x[:, None], x[None])
    ih = np.minimum(y[:, None] + s[:, None], y[None] + s[None]) - np.maximum(y[:, None], y[None])
    inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
    area = s * s
    return inter / (area[:, None] + area[None] - inter)


def nms_filter(boxes: list, scores, thr: float, return_indices: bool = False):
    """Greedy NMS over same-size boxes.

    Boxes are visited by descending score, ties broken by their position in
    ``boxes``; a box is dropped when its IoU with an already kept box exceeds
    ``thr``. Kept boxes come back in keep order.
    """
    if not 0.0 <= thr < 1.0:
        raise ValueError(f"NMS threshold must lie in [0, 1), got {thr}")
    scores = np.asarray(scores)
    if len(boxes) != len(scores):
        raise ValueError("boxes and scores differ in length")
    if not boxes:
        return []
    if len({b.size for b in boxes}) != 1:
        raise ValueError("NMS expects boxes of a single size")
    order = np.lexsort((np.arange(len(boxes)), -scores))
    ious = _pairwise_iou(boxes)
    suppressed = np.zeros(len(boxes), dtype=bool)
    keep = []
    for i in order:
        if suppressed[i]:
            continue
        keep.append(int(i))
        suppressed |= ious[i] > thr
    if return_indices:
        return keep
    return [boxes[i] for i in keep]


def grid_boxes(width: int, height: int, mask, cell: int) -> list:
    """Grid tiles holding at least one foreground and one background pixel."""
    if cell < 2 or cell % 2:
        raise ValueError(f"grid cell must be even and >= 2, got {cell}")
    mask = as_mask(mask)
    if mask.shape != (height, width):
        raise ValueError(f"mask shape {mask.shape} != {(height, width)}")
    out = []
    for y in range(0, height, cell):
        for x in range(0, width, cell):
            tile = mask[y : y + cell, x : x + cell]
            if tile.any() and not tile.all():
                out.append(SquareBox(x, y, cell))
    return out


def instance_box(instance, target: Optional[int] = None) -> SquareBox:
    """Smallest even-sided square sharing the mask's bounding-box center.

    ``target`` is the side the patch is later resized to by the external
    exporter; it does not affect the box.
    """
    mask = instance.mask if isinstance(instance, Instance) else as_mask(instance)
    x0, y0, x1, y1 = tight_bbox(mask)
    w, h = x1 - x0 + 1, y1 - y0 + 1
    side = max(w, h, 2)
    side += side % 2
    # odd slack: the extra pixel goes to the top/left
    x = x0 - (side - w + 1) // 2
    y = y0 - (side - h + 1) // 2
    return SquareBox(x, y, side)


def _crop(arr: np.ndarray, box: SquareBox) -> np.ndarray:
    h, w = arr.shape[:2]
    out = np.zeros((box.size, box.size) + arr.shape[2:], dtype=arr.dtype)
    sx0, sy0 = max(box.x, 0), max(box.y, 0)
    sx1, sy1 = min(box.x + box.size, w), min(box.y + box.size, h)
    if sx0 < sx1 and sy0 < sy1:
        out[sy0 - box.y : sy1 - box.y, sx0 - box.x : sx1 - box.x] = arr[sy0:sy1, sx0:sx1]
    return out


def crop_patches(
    scene: Scene,
    instance: Instance,
    boxes: list,
    pad: int = 0,
    with_gt: bool = False,
    scores=None,
    first_id: int = 0,
) -> list:
    """Crop image, instance mask and optionally the matched GT mask per box.

    Regions outside the image are zero-filled. Patch ids follow box order,
    starting at ``first_id``.
    """
    if pad < 0:
        raise ValueError(f"pad must be >= 0, got {pad}")
    gt_mask = None
    if with_gt:
        if instance.matched_gt_id is None:
            raise ValueError(f"instance {instance.instance_id} has no matched ground truth")
        gt_mask = scene.gt_by_id(instance.matched_gt_id).mask
    in_image = np.ones(scene.shape, dtype=bool)
    patches = []
    for k, box in enumerate(boxes):
        spec = PatchSpec(first_id + k, instance.instance_id, box, pad, int(scores[k]) if scores is not None else 0)
        cbox = spec.crop_box
        patches.append(
            Patch(
                spec=spec,
                image_crop=_crop(scene.image, cbox),
                mask_crop=_crop(instance.mask, cbox),
                valid=_crop(in_image, cbox),
                gt_crop=_crop(gt_mask, cbox) if gt_mask is not None else None,
            )
        )
    return patches


def extract_specs(mask, config: ExtractionConfig) -> tuple:
    """Boxes and their boundary-pixel scores for one instance mask."""
    mask = as_mask(mask)
    h, w = mask.shape
    if config.scheme is Scheme.DENSE_NMS:
        cands = candidate_boxes(mask, config.patch_size)
        scores = box_scores(mask, cands)
        keep = nms_filter(cands, scores, config.nms_threshold, return_indices=True)
        return [cands[i] for i in keep], scores[keep]
    if config.scheme is Scheme.GRID:
        boxes = grid_boxes(w, h, mask, config.cell)
    else:
        boxes = [instance_box(mask, config.instance_target)] if mask.any() else []
    return boxes, box_scores(mask, boxes)
