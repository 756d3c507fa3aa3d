"""Deterministic synthetic scenes: smooth blob instances and coarse predictions.

Randomness comes from numpy's PCG64 bit generator seeded through
``SeedSequence([seed, index])``, so scene ``index`` of a corpus can be
regenerated on its own.

Predictions mimic a low-resolution mask head: the GT is cropped to its box,
area-averaged down to ``head_resolution`` cells per axis, bilinearly
upsampled, thresholded, then eroded or dilated and shifted by a small jitter.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import resample
from .maskcore import Instance, Scene, as_mask, morph, tight_bbox

DEFAULT_PALETTE = (
    (220, 40, 40),
    (40, 200, 60),
    (230, 200, 30),
    (200, 60, 210),
    (30, 200, 220),
    (240, 140, 20),
)


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 42
    image_size: int = 256
    instances_per_image: int = 4
    num_categories: int = 3
    bg_color: tuple = (50, 60, 150)
    fg_colors: tuple = DEFAULT_PALETTE
    noise_sigma: float = 10.0
    head_resolution: int = 28
    erode_dilate_radius: int = 1
    jitter: int = 1
    radius_range: tuple = (10.0, 64.0)
    min_gap: int = 6

    def __post_init__(self):
        if self.head_resolution < 4:
            raise ValueError("head_resolution must be >= 4")
        if self.instances_per_image < 1:
            raise ValueError("instances_per_image must be >= 1")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.erode_dilate_radius < 0 or self.jitter < 0:
            raise ValueError("erode_dilate_radius and jitter must be >= 0")


def scene_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, index])))


def blob_mask(size: int, cx: float, cy: float, radius: float, rng: np.random.Generator) -> np.ndarray:
    """Star-convex blob: a circle with a few low-frequency radial harmonics."""
    n_harm = 4
    amps = rng.uniform(0.0, 0.22, n_harm) / np.arange(1, n_harm + 1) ** 0.5
    phases = rng.uniform(0, 2 * np.pi, n_harm)
    mask = np.zeros((size, size), dtype=bool)
    # harmonics never push the radius beyond (1 + sum(amps)) * radius
    reach = int(np.ceil(radius * (1.0 + amps.sum()))) + 1
    x0, x1 = max(int(cx) - reach, 0), min(int(cx) + reach + 1, size)
    y0, y1 = max(int(cy) - reach, 0), min(int(cy) + reach + 1, size)
    yy, xx = np.mgrid[y0:y1, x0:x1].astype(float)
    dx, dy = xx - cx, yy - cy
    theta = np.arctan2(dy, dx)
    r = np.ones_like(theta)
    for k in range(n_harm):
        r += amps[k] * np.cos((k + 2) * theta + phases[k])
    mask[y0:y1, x0:x1] = np.hypot(dx, dy) <= radius * r
    return mask


def _place_blobs(config: SynthConfig, rng: np.random.Generator) -> list:
    size = config.image_size
    lo, hi = config.radius_range
    masks = []
    clearance = np.full((size, size), np.inf)
    attempts = 0
    while len(masks) < config.instances_per_image:
        attempts += 1
        if attempts > 2000:
            raise RuntimeError("could not place disjoint blobs; lower radius_range or instance count")
        # shrink the radius range as attempts pile up
        shrink = 1.0 / (1.0 + attempts / 200)
        radius = rng.uniform(lo, lo + (hi - lo) * shrink)
        reach = radius * 1.6 + 4
        if 2 * reach >= size:
            continue
        cx, cy = rng.uniform(reach, size - reach, 2)
        mask = blob_mask(size, cx, cy, radius, rng)
        if mask.sum() < 40:
            continue
        if (clearance[mask] <= config.min_gap).any():
            continue
        masks.append(mask)
        clearance = np.minimum(clearance, ndimage.distance_transform_edt(~mask))
    return masks


def _head_resample(crop: np.ndarray, g: int) -> np.ndarray:
    """Round trip through a g-cell head per axis; axes already <= g pass through."""
    h, w = crop.shape
    wy = resample.bilinear_matrix(g, h) @ resample.area_matrix(h, g) if h > g else np.eye(h)
    wx = resample.bilinear_matrix(g, w) @ resample.area_matrix(w, g) if w > g else np.eye(w)
    return wy @ crop.astype(np.float64) @ wx.T


def degrade_mask(gt, config: SynthConfig, rng: np.random.Generator = None) -> np.ndarray:
    """Coarse prediction for ``gt``; see the module docstring."""
    gt = as_mask(gt)
    if not gt.any():
        raise ValueError("cannot degrade an empty mask")
    rng = rng if rng is not None else scene_rng(config.seed, 0)
    x0, y0, x1, y1 = tight_bbox(gt)
    soft = _head_resample(gt[y0 : y1 + 1, x0 : x1 + 1], config.head_resolution)
    out = np.zeros_like(gt)
    out[y0 : y1 + 1, x0 : x1 + 1] = soft >= 0.5
    radius = config.erode_dilate_radius
    if radius > 0:
        op = "dilate" if rng.random() < 0.5 else "erode"
        eroded = morph(out, op, radius)
        # keep the prediction non-empty
        out = eroded if eroded.any() else morph(out, "dilate", radius)
    j = config.jitter
    if j > 0:
        dx, dy = (int(v) for v in rng.integers(-j, j + 1, 2))
        out = _shift(out, dx, dy)
    if not out.any():
        out = gt.copy()
    return out


def _shift(mask: np.ndarray, dx: int, dy: int) -> np.ndarray:
    h, w = mask.shape
    out = np.zeros_like(mask)
    out[max(dy, 0) : h + min(dy, 0), max(dx, 0) : w + min(dx, 0)] = mask[
        max(-dy, 0) : h + min(-dy, 0), max(-dx, 0) : w + min(-dx, 0)
    ]
    return out


def render_image(config: SynthConfig, masks: list, colors: list, rng: np.random.Generator) -> np.ndarray:
    size = config.image_size
    img = np.empty((size, size, 3), dtype=np.float64)
    img[:] = config.bg_color
    for mask, color in zip(masks, colors):
        img[mask] = color
    if config.noise_sigma > 0:
        img += rng.normal(0.0, config.noise_sigma, img.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def generate_scene(config: SynthConfig, index: int) -> Scene:
    rng = scene_rng(config.seed, index)
    masks = _place_blobs(config, rng)
    n = len(masks)
    categories = rng.integers(1, config.num_categories + 1, n)
    # distinct colors within a scene while the palette lasts
    color_idx = rng.choice(len(config.fg_colors), n, replace=n > len(config.fg_colors))
    image = render_image(config, masks, [config.fg_colors[c] for c in color_idx], rng)
    gts, preds = [], []
    for k, mask in enumerate(masks):
        gts.append(Instance(k + 1, int(categories[k]), 1.0, mask))
        coarse = degrade_mask(mask, config, rng)
        score = float(np.round(rng.uniform(0.6, 1.0), 6))
        preds.append(Instance(k + 1, int(categories[k]), score, coarse))
    return Scene(image, preds, gts, name=f"scene_{index:04d}")


def generate_corpus(config: SynthConfig = SynthConfig(), n: int = 20) -> list:
    return [generate_scene(config, i) for i in range(n)]
