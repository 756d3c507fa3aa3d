"""Raster types and pixel-exact primitives shared by every stage.

Masks are 2-D ``bool`` arrays of shape ``(height, width)``, images are
``uint8`` arrays of shape ``(height, width, 3)`` and probability maps are
``float32`` arrays with values in ``[0, 1]``. Pixel coordinates are ``(x, y)``
tuples, i.e. ``(column, row)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage

__all__ = [
    "Instance",
    "Scene",
    "as_mask",
    "boundary_map",
    "boundary_pixels",
    "distance_to_set",
    "mask_iou",
    "iou_matrix",
    "morph",
    "disk",
    "tight_bbox",
]


@dataclass(frozen=True)
class Instance:
    """A scored, categorized instance mask.

    ``matched_gt_id`` is filled in by GT matching (training filter, oracle
    refinement); it stays ``None`` for raw predictions and for GT itself.
    """

    instance_id: int
    category_id: int
    score: float
    mask: np.ndarray = field(repr=False)
    matched_gt_id: Optional[int] = None

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"instance {self.instance_id}: score {self.score} not in [0, 1]")
        object.__setattr__(self, "mask", as_mask(self.mask))

    @property
    def area(self) -> int:
        return int(self.mask.sum())


@dataclass(frozen=True)
class Scene:
    image: np.ndarray = field(repr=False)
    predictions: list = field(default_factory=list)
    ground_truth: Optional[list] = None
    name: str = ""

    def __post_init__(self):
        image = np.asarray(self.image)
        if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
            raise ValueError(f"image must be uint8 (H, W, 3), got {image.dtype} {image.shape}")
        if image.shape[0] < 1 or image.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        object.__setattr__(self, "image", image)
        for label, insts in (("predictions", self.predictions), ("ground_truth", self.ground_truth)):
            if insts is None:
                continue
            ids = [inst.instance_id for inst in insts]
            if len(set(ids)) != len(ids):
                raise ValueError(f"duplicate instance ids in {label}: {ids}")
            for inst in insts:
                if inst.mask.shape != self.shape:
                    raise ValueError(
                        f"{label} instance {inst.instance_id}: mask shape {inst.mask.shape} "
                        f"!= image shape {self.shape}"
                    )

    @property
    def shape(self) -> tuple:
        return self.image.shape[:2]

    @property
    def height(self) -> int:
        return self.image.shape[0]

    @property
    def width(self) -> int:
        return self.image.shape[1]

    def gt_by_id(self, gt_id: int) -> Instance:
        for gt in self.ground_truth or ():
            if gt.instance_id == gt_id:
                return gt
        raise KeyError(f"no ground-truth instance with id {gt_id}")


def as_mask(mask) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {mask.shape}")
    return mask.astype(bool, copy=False)


def boundary_map(mask, outside_is_background: bool = True) -> np.ndarray:
    """Foreground pixels with at least one 4-connected background neighbor.

    With ``outside_is_background`` the grid border counts as background, so
    foreground touching the edge is boundary. Otherwise the border is treated
    as a continuation of the mask (edge replicate); useful on crops, where the
    crop edge is not an object edge.
    """
    mask = as_mask(mask)
    if outside_is_background:
        padded = np.pad(mask, 1, mode="constant", constant_values=False)
    else:
        padded = np.pad(mask, 1, mode="edge")
    interior = padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    return mask & ~interior


def boundary_pixels(mask) -> set:
    """Boundary pixels of ``mask`` as a set of ``(x, y)`` tuples."""
    ys, xs = np.nonzero(boundary_map(mask))
    return set(zip(xs.tolist(), ys.tolist()))


def distance_to_set(width: int, height: int, seeds) -> np.ndarray:
    """Exact Euclidean distance from every pixel center to the nearest seed.

    ``seeds`` is either an iterable of ``(x, y)`` pairs or a boolean array of
    shape ``(height, width)``. Returns a ``float64`` array of that shape;
    float32 cannot hold distances beyond ~16 px to within 1e-6.
    """
    if isinstance(seeds, np.ndarray) and seeds.ndim == 2:
        if seeds.shape != (height, width):
            raise ValueError(f"seed mask shape {seeds.shape} != {(height, width)}")
        seed_mask = seeds.astype(bool, copy=False)
    else:
        seed_mask = np.zeros((height, width), dtype=bool)
        for x, y in seeds:
            if not (0 <= x < width and 0 <= y < height):
                raise ValueError(f"seed {(x, y)} out of bounds for {width}x{height}")
            seed_mask[y, x] = True
    if not seed_mask.any():
        raise ValueError("no seeds")
    # distance_transform_edt measures to the nearest zero element
    return ndimage.distance_transform_edt(~seed_mask)


def mask_iou(a, b) -> float:
    """IoU of two equally sized masks; two empty masks compare as 1.0."""
    a, b = as_mask(a), as_mask(b)
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union


def iou_matrix(masks_a: list, masks_b: list) -> np.ndarray:
    """Pairwise IoU between two lists of equally sized masks."""
    if not masks_a or not masks_b:
        return np.zeros((len(masks_a), len(masks_b)))
    fa = np.stack([as_mask(m).ravel() for m in masks_a]).astype(np.float64)
    fb = np.stack([as_mask(m).ravel() for m in masks_b]).astype(np.float64)
    if fa.shape[1] != fb.shape[1]:
        raise ValueError("mask sizes differ")
    inter = fa @ fb.T
    union = fa.sum(1)[:, None] + fb.sum(1)[None, :] - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(union > 0, inter / np.maximum(union, 1), 1.0)
    return out


def disk(radius: float) -> np.ndarray:
    """Discrete Euclidean disk: offsets with distance <= radius."""
    r = int(np.floor(radius))
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    return xx * xx + yy * yy <= radius * radius


def morph(mask, op: str, radius: float) -> np.ndarray:
    """Dilate or erode with a Euclidean disk; outside the grid is background."""
    if op not in ("dilate", "erode"):
        raise ValueError(f"unknown morphology op {op!r}")
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    mask = as_mask(mask)
    if radius < 1:
        return mask.copy()
    selem = disk(radius)
    if op == "dilate":
        return ndimage.binary_dilation(mask, structure=selem)
    return ndimage.binary_erosion(mask, structure=selem, border_value=0)


def tight_bbox(mask) -> tuple:
    """``(x0, y0, x1, y1)`` inclusive bounds of the foreground."""
    mask = as_mask(mask)
    rows = np.flatnonzero(mask.any(axis=1))
    if rows.size == 0:
        raise ValueError("empty mask has no bounding box")
    cols = np.flatnonzero(mask.any(axis=0))
    return int(cols[0]), int(rows[0]), int(cols[-1]), int(rows[-1])
