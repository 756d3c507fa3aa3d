"""Reassembly of refined patches into a full-resolution instance mask."""
from __future__ import annotations

import numpy as np

from .maskcore import as_mask


class AccumulatorGrid:
    """Per-pixel running sum and count of patch probabilities."""

    def __init__(self, width: int, height: int):
        self.width = width
        self.height = height
        self.sum = np.zeros((height, width), dtype=np.float32)
        self.count = np.zeros((height, width), dtype=np.int32)

    def add(self, x: int, y: int, probs: np.ndarray) -> None:
        """Accumulate ``probs`` with its top-left at ``(x, y)``, clipped to the grid."""
        size_y, size_x = probs.shape
        x0, y0 = max(x, 0), max(y, 0)
        x1, y1 = min(x + size_x, self.width), min(y + size_y, self.height)
        if x0 >= x1 or y0 >= y1:
            return
        self.sum[y0:y1, x0:x1] += probs[y0 - y : y1 - y, x0 - x : x1 - x]
        self.count[y0:y1, x0:x1] += 1

    def covered(self) -> np.ndarray:
        return self.count > 0

    def mean(self) -> np.ndarray:
        out = np.zeros_like(self.sum)
        np.divide(self.sum, self.count, out=out, where=self.count > 0)
        return out


def reassemble(original, patches: list, threshold: float = 0.5) -> np.ndarray:
    """Average overlapping patch probabilities and threshold them.

    Pixels covered by at least one patch become foreground iff the mean
    probability is ``>= threshold``; all other pixels keep ``original``.
    Patches are accumulated in ascending ``patch_id`` order whatever order
    they are passed in, so the float sums are reproducible.
    """
    original = as_mask(original)
    height, width = original.shape
    acc = AccumulatorGrid(width, height)
    for patch in sorted(patches, key=lambda p: p.spec.patch_id):
        box = patch.spec.box
        if patch.probs.shape != (box.size, box.size):
            raise ValueError(
                f"patch {patch.spec.patch_id}: probs shape {patch.probs.shape} != box side {box.size}"
            )
        acc.add(box.x, box.y, patch.probs)
    covered = acc.covered()
    out = original.copy()
    out[covered] = acc.mean()[covered] >= threshold
    return out
