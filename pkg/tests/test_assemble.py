import numpy as np
import pytest

from bpr.assemble import AccumulatorGrid, reassemble
from bpr.extract import ExtractionConfig, PatchSpec, SquareBox, crop_patches, extract_specs
from bpr.refine import RefinedPatch, refine_patch
from conftest import random_mask


def rp(pid, x, y, probs):
    probs = np.asarray(probs, np.float32)
    return RefinedPatch(PatchSpec(pid, 1, SquareBox(x, y, probs.shape[0])), probs)


def gather_all(original, patches, threshold=0.5):
    """Per pixel: collect every covering probability, then average."""
    h, w = original.shape
    out = original.copy()
    for y in range(h):
        for x in range(w):
            vals = []
            for p in sorted(patches, key=lambda p: p.spec.patch_id):
                b = p.spec.box
                if b.x <= x < b.x + b.size and b.y <= y < b.y + b.size:
                    vals.append(np.float32(p.probs[y - b.y, x - b.x]))
            if vals:
                s = np.float32(0)
                for v in vals:
                    s = np.float32(s + v)
                out[y, x] = np.float32(s / np.float32(len(vals))) >= threshold
    return out


def test_mean_above_threshold():
    orig = np.zeros((4, 4), bool)
    out = reassemble(orig, [rp(0, 0, 0, np.full((2, 2), 0.4)), rp(1, 0, 0, np.full((2, 2), 0.8))])
    assert out[:2, :2].all()


def test_exact_half_is_foreground():
    orig = np.zeros((4, 4), bool)
    out = reassemble(orig, [rp(0, 0, 0, np.full((2, 2), 0.4)), rp(1, 0, 0, np.full((2, 2), 0.6))])
    assert out[:2, :2].all()
    assert not out[2:, :].any() and not out[:, 2:].any()


def test_uncovered_keep_original(rng):
    orig = random_mask(rng, 6, 6)
    out = reassemble(orig, [rp(0, 2, 2, np.zeros((2, 2)))])
    assert not out[2:4, 2:4].any()
    mask = np.ones_like(orig)
    mask[2:4, 2:4] = False
    np.testing.assert_array_equal(out[mask], orig[mask])


def test_no_patches_returns_copy(rng):
    orig = random_mask(rng, 5, 5)
    out = reassemble(orig, [])
    np.testing.assert_array_equal(out, orig)
    assert out is not orig


def test_out_of_image_part_ignored():
    orig = np.zeros((4, 4), bool)
    out = reassemble(orig, [rp(0, -2, -2, np.ones((4, 4)))])
    assert out[:2, :2].all() and out.sum() == 4


def test_shape_checked():
    p = RefinedPatch(PatchSpec(0, 1, SquareBox(0, 0, 2)), np.zeros((2, 2), np.float32))
    object.__setattr__(p, "probs", np.zeros((3, 3), np.float32))
    with pytest.raises(ValueError):
        reassemble(np.zeros((4, 4), bool), [p])


def test_identity_is_exact(corpus):
    for scene in corpus[:5]:
        for inst in scene.predictions:
            for cfg in (ExtractionConfig(patch_size=32, pad=3), ExtractionConfig(scheme="grid", patch_size=16)):
                boxes, _ = extract_specs(inst.mask, cfg)
                patches = crop_patches(scene, inst, boxes, cfg.pad)
                refined = [refine_patch("identity", p) for p in patches]
                np.testing.assert_array_equal(reassemble(inst.mask, refined), inst.mask)


def test_against_gather_all(rng):
    for _ in range(20):
        orig = random_mask(rng, 12, 12)
        patches = []
        for pid in range(int(rng.integers(1, 7))):
            size = int(rng.choice([2, 4, 6]))
            x, y = rng.integers(-3, 12, 2)
            patches.append(rp(pid, int(x), int(y), rng.random((size, size))))
        np.testing.assert_array_equal(reassemble(orig, patches), gather_all(orig, patches))


def test_order_independent(rng):
    orig = random_mask(rng, 10, 10)
    patches = [rp(i, *rng.integers(-2, 8, 2).tolist(), rng.random((4, 4))) for i in range(8)]
    ref = reassemble(orig, patches)
    for _ in range(5):
        perm = [patches[i] for i in rng.permutation(len(patches))]
        np.testing.assert_array_equal(reassemble(orig, perm), ref)


def test_accumulator_counts():
    acc = AccumulatorGrid(3, 2)
    acc.add(0, 0, np.ones((2, 2), np.float32))
    acc.add(1, 0, np.full((2, 2), 0.5, np.float32))
    np.testing.assert_array_equal(acc.count, [[1, 2, 1], [1, 2, 1]])
    np.testing.assert_allclose(acc.mean(), [[1, 0.75, 0.5], [1, 0.75, 0.5]])
