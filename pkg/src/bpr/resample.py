"""Separable resampling via explicit 1-D interpolation matrices.

All grids use pixel-center alignment: output pixel ``i`` of an ``n_out`` grid
covering an ``n_in`` grid sits at input coordinate ``(i + 0.5) * n_in / n_out - 0.5``.
"""
import numpy as np


def area_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Box-filter weights: each output cell averages the input it overlaps."""
    scale = n_in / n_out
    lo = np.arange(n_out)[:, None] * scale
    hi = lo + scale
    j = np.arange(n_in)[None, :]
    overlap = np.clip(np.minimum(hi, j + 1) - np.maximum(lo, j), 0.0, None)
    return overlap / scale


def bilinear_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Linear interpolation weights with edge clamping."""
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    left = np.floor(src).astype(int)
    right = np.minimum(left + 1, n_in - 1)
    frac = src - left
    w = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    np.add.at(w, (rows, left), 1.0 - frac)
    np.add.at(w, (rows, right), frac)
    return w


def nearest_index(n_in: int, n_out: int) -> np.ndarray:
    src = np.floor((np.arange(n_out) + 0.5) * (n_in / n_out)).astype(int)
    return np.minimum(src, n_in - 1)


def _apply(arr: np.ndarray, wy: np.ndarray, wx: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 2:
        return wy @ arr @ wx.T
    return np.stack([wy @ arr[..., c] @ wx.T for c in range(arr.shape[2])], axis=-1)


def resize_bilinear(arr: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinear resize of a 2-D or (H, W, C) array; returns float64."""
    h, w = arr.shape[:2]
    return _apply(arr, bilinear_matrix(h, height), bilinear_matrix(w, width))


def resize_area(arr: np.ndarray, height: int, width: int) -> np.ndarray:
    """Area-average resize; exact block mean for integer downscale factors."""
    h, w = arr.shape[:2]
    return _apply(arr, area_matrix(h, height), area_matrix(w, width))


def resize_nearest(arr: np.ndarray, height: int, width: int) -> np.ndarray:
    """Nearest-neighbor resize; pure replication for integer upscale factors."""
    arr = np.asarray(arr)
    h, w = arr.shape[:2]
    return arr[nearest_index(h, height)][:, nearest_index(w, width)]
