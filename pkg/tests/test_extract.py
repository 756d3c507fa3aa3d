import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bpr.extract import (
    ExtractionConfig,
    Scheme,
    SquareBox,
    box_iou,
    box_scores,
    candidate_boxes,
    crop_patches,
    extract_specs,
    grid_boxes,
    instance_box,
    nms_filter,
)
from bpr.maskcore import Instance, Scene, boundary_map, boundary_pixels, tight_bbox
from conftest import blob, random_mask
from oracles import nms_bruteforce, square_iou

NMS_THRESHOLDS = (0, 0.15, 0.25, 0.35, 0.45, 0.55, 0.65)


def _scene(mask, image=None, gt=None):
    h, w = mask.shape
    if image is None:
        image = np.arange(h * w * 3, dtype=np.uint32).reshape(h, w, 3).astype(np.uint8)
    inst = Instance(1, 1, 0.9, mask)
    gts = None if gt is None else [Instance(7, 1, 1.0, gt)]
    return Scene(image, [inst], gts), inst


class TestCandidates:
    def test_one_box_per_boundary_pixel(self, rng):
        m = random_mask(rng, 20, 20, 0.4)
        boxes = candidate_boxes(m, 8)
        assert len(boxes) == len(boundary_pixels(m))
        assert all(b.size == 8 for b in boxes)

    def test_single_pixel_center_convention(self):
        m = np.zeros((20, 20), bool)
        m[10, 10] = True
        assert candidate_boxes(m, 4) == [SquareBox(8, 8, 4)]

    def test_generating_pixel_at_center_cell(self, rng):
        for _ in range(10):
            m = random_mask(rng, 15, 17, 0.5)
            ys, xs = np.nonzero(boundary_map(m))
            for b, x, y in zip(candidate_boxes(m, 6), xs, ys):
                assert (x - b.x, y - b.y) == (3, 3)

    def test_odd_size_rejected(self):
        with pytest.raises(ValueError):
            candidate_boxes(np.ones((3, 3)), 5)

    def test_scores_count_boundary_pixels(self, rng):
        m = random_mask(rng, 12, 12, 0.5)
        bmap = boundary_map(m)
        boxes = candidate_boxes(m, 4)
        for b, s in zip(boxes, box_scores(m, boxes)):
            expected = sum(
                bmap[y, x]
                for y in range(max(b.y, 0), min(b.y + 4, 12))
                for x in range(max(b.x, 0), min(b.x + 4, 12))
            )
            assert s == expected


class TestNMS:
    def test_single_box_kept(self):
        b = SquareBox(0, 0, 4)
        assert nms_filter([b], [1], 0.25) == [b]

    def test_adjacent_equal_scores(self):
        a, b = SquareBox(0, 0, 4), SquareBox(1, 0, 4)
        assert box_iou(a, b) == pytest.approx(12 / 20)
        assert nms_filter([a, b], [3, 3], 0.25) == [a]

    def test_higher_score_wins(self):
        a, b = SquareBox(0, 0, 4), SquareBox(1, 0, 4)
        assert nms_filter([a, b], [1, 2], 0.25) == [b]

    def test_box_iou_matches_pixel_sets(self, rng):
        for _ in range(50):
            a = SquareBox(*map(int, rng.integers(-5, 5, 2)), 6)
            b = SquareBox(*map(int, rng.integers(-5, 5, 2)), 6)
            assert box_iou(a, b) == pytest.approx(square_iou(a, b))

    def test_random_sets_against_exhaustive_oracle(self, rng):
        for _ in range(200):
            n = int(rng.integers(1, 40))
            boxes = [SquareBox(int(x), int(y), 8) for x, y in rng.integers(0, 24, (n, 2))]
            scores = rng.integers(0, 5, n)
            thr = float(rng.choice(NMS_THRESHOLDS))
            keep = nms_filter(boxes, scores, thr, return_indices=True)
            kept = set(keep)
            for i, j in itertools.combinations(keep, 2):
                assert box_iou(boxes[i], boxes[j]) <= thr
            for i in set(range(n)) - kept:
                assert any(box_iou(boxes[i], boxes[k]) > thr for k in keep)
            # keep order follows (score desc, index asc)
            assert keep == sorted(keep, key=lambda i: (-scores[i], i))
            assert keep == nms_bruteforce(boxes, scores, thr)

    def test_threshold_range(self):
        with pytest.raises(ValueError):
            nms_filter([SquareBox(0, 0, 2)], [1], 1.0)

    def test_mixed_sizes_rejected(self):
        with pytest.raises(ValueError):
            nms_filter([SquareBox(0, 0, 2), SquareBox(0, 0, 4)], [1, 1], 0.5)

    def test_greedy_counts_not_monotone_in_general(self):
        # A suppresses B at 0.35 so C and D both survive; at 0.55 B survives
        # and suppresses both. Monotonicity is therefore a corpus property.
        boxes = [SquareBox(-20, 0, 64), SquareBox(0, 0, 64), SquareBox(0, -16, 64), SquareBox(0, 16, 64)]
        scores = [4, 3, 2, 1]
        assert len(nms_filter(boxes, scores, 0.35)) == 3
        assert len(nms_filter(boxes, scores, 0.55)) == 2

    def test_counts_monotone_on_smooth_masks(self):
        for r in (5, 9, 14, 23):
            m = blob(64, 64, 31, 30, r)
            counts = [
                len(extract_specs(m, ExtractionConfig(patch_size=16, nms_threshold=t))[0]) for t in NMS_THRESHOLDS
            ]
            assert counts == sorted(counts)

    def test_counts_monotone_on_corpus(self, corpus):
        for scene in corpus:
            counts = [
                sum(len(extract_specs(p.mask, ExtractionConfig(nms_threshold=t))[0]) for p in scene.predictions)
                for t in NMS_THRESHOLDS
            ]
            assert counts == sorted(counts), scene.name

    def test_every_boundary_pixel_covered_on_corpus(self, corpus):
        cfg = ExtractionConfig()
        for scene in corpus:
            for p in scene.predictions:
                boxes, _ = extract_specs(p.mask, cfg)
                covered = np.zeros(p.mask.shape, bool)
                for b in boxes:
                    covered[max(b.y, 0) : b.y + b.size, max(b.x, 0) : b.x + b.size] = True
                assert covered[boundary_map(p.mask)].all()


class TestGrid:
    def test_all_foreground(self):
        assert grid_boxes(8, 8, np.ones((8, 8), bool), 4) == []

    def test_split_aligned_with_grid(self):
        m = np.zeros((8, 8), bool)
        m[:, :4] = True
        assert grid_boxes(8, 8, m, 4) == []

    def test_left_three_columns(self):
        m = np.zeros((8, 8), bool)
        m[:, :3] = True
        # direct tile census
        expected = []
        for ty in range(2):
            for tx in range(2):
                tile = m[ty * 4 : ty * 4 + 4, tx * 4 : tx * 4 + 4]
                if tile.any() and not tile.all():
                    expected.append(SquareBox(tx * 4, ty * 4, 4))
        assert grid_boxes(8, 8, m, 4) == expected
        assert len(expected) == 2

    def test_tiles_disjoint(self, rng):
        m = random_mask(rng, 30, 26, 0.3)
        boxes = grid_boxes(26, 30, m, 6)
        for a, b in itertools.combinations(boxes, 2):
            assert box_iou(a, b) == 0.0

    def test_partial_edge_tiles(self):
        m = np.zeros((10, 10), bool)
        m[9, 8] = True
        assert grid_boxes(10, 10, m, 4) == [SquareBox(8, 8, 4)]


class TestInstanceBox:
    def test_single_pixel(self):
        m = np.zeros((12, 12), bool)
        m[5, 5] = True
        box = instance_box(m)
        assert box.size == 2
        assert box.contains(5, 5)
        assert box == SquareBox(4, 4, 2)

    def test_rectangle_takes_max_side(self):
        m = np.zeros((40, 40), bool)
        m[5:25, 10:20] = True  # 10 wide, 20 tall
        box = instance_box(Instance(1, 1, 1.0, m))
        assert box == SquareBox(5, 5, 20)
        assert box.x + box.size / 2 == (10 + 20) / 2

    def test_empty_mask(self):
        with pytest.raises(ValueError):
            instance_box(np.zeros((4, 4)))

    @settings(max_examples=60)
    @given(st.integers(0, 2**32 - 1))
    def test_contains_tight_bbox(self, seed):
        rng = np.random.default_rng(seed)
        m = random_mask(rng, 13, 17, rng.uniform(0.02, 0.5))
        if not m.any():
            m[3, 4] = True
        x0, y0, x1, y1 = tight_bbox(m)
        box = instance_box(m)
        assert box.size % 2 == 0
        assert box.contains(x0, y0) and box.contains(x1, y1)
        assert box.size <= max(x1 - x0 + 1, y1 - y0 + 1) + 1


class TestCrop:
    def test_pad_zero_side(self):
        m = np.zeros((16, 16), bool)
        m[4:10, 4:10] = True
        scene, inst = _scene(m)
        (patch,) = crop_patches(scene, inst, [SquareBox(2, 2, 8)], pad=0)
        assert patch.image_crop.shape == (8, 8, 3)
        assert patch.mask_crop.shape == (8, 8)

    def test_pad_grows_crop(self):
        scene, inst = _scene(np.ones((16, 16), bool))
        (patch,) = crop_patches(scene, inst, [SquareBox(4, 4, 8)], pad=3)
        assert patch.mask_crop.shape == (14, 14)
        assert patch.spec.box == SquareBox(4, 4, 8)

    def test_fully_outside_is_zero(self):
        scene, inst = _scene(np.ones((10, 10), bool))
        (patch,) = crop_patches(scene, inst, [SquareBox(20, 20, 4)])
        assert not patch.image_crop.any() and not patch.mask_crop.any() and not patch.valid.any()

    def test_top_left_corner_against_naive_copy(self, rng):
        m = random_mask(rng, 12, 12)
        img = rng.integers(0, 256, (12, 12, 3)).astype(np.uint8)
        scene, inst = _scene(m, img)
        box = SquareBox(-3, -2, 8)
        (patch,) = crop_patches(scene, inst, [box], pad=1)
        for cy in range(10):
            for cx in range(10):
                x, y = box.x - 1 + cx, box.y - 1 + cy
                inside = 0 <= x < 12 and 0 <= y < 12
                assert patch.valid[cy, cx] == inside
                if inside:
                    assert (patch.image_crop[cy, cx] == img[y, x]).all()
                    assert patch.mask_crop[cy, cx] == m[y, x]
                else:
                    assert not patch.image_crop[cy, cx].any() and not patch.mask_crop[cy, cx]

    def test_gt_requires_match(self):
        m = np.ones((8, 8), bool)
        scene, inst = _scene(m, gt=m)
        with pytest.raises(ValueError):
            crop_patches(scene, inst, [SquareBox(0, 0, 4)], with_gt=True)
        from dataclasses import replace

        (patch,) = crop_patches(scene, replace(inst, matched_gt_id=7), [SquareBox(0, 0, 4)], with_gt=True)
        assert patch.gt_crop.all()

    def test_ids_follow_box_order_and_content_is_order_free(self, rng):
        m = random_mask(rng, 20, 20)
        scene, inst = _scene(m)
        boxes = candidate_boxes(m, 6)[:10]
        fwd = crop_patches(scene, inst, boxes)
        rev = crop_patches(scene, inst, boxes[::-1])
        assert [p.spec.patch_id for p in fwd] == list(range(10))
        by_box = {p.spec.box: p for p in rev}
        for p in fwd:
            q = by_box[p.spec.box]
            assert (p.image_crop == q.image_crop).all() and (p.mask_crop == q.mask_crop).all()


def test_config_validation():
    with pytest.raises(ValueError):
        ExtractionConfig(patch_size=63)
    with pytest.raises(ValueError):
        ExtractionConfig(pad=-1)
    with pytest.raises(ValueError):
        ExtractionConfig(nms_threshold=1.0)
    assert ExtractionConfig(scheme="grid").scheme is Scheme.GRID


def test_extract_specs_schemes():
    m = blob(64, 64, 30, 30, 12)
    dense, _ = extract_specs(m, ExtractionConfig(patch_size=16))
    grid, _ = extract_specs(m, ExtractionConfig(scheme="grid", patch_size=16))
    inst, _ = extract_specs(m, ExtractionConfig(scheme="instance"))
    assert dense and grid
    assert inst == [instance_box(m)]
