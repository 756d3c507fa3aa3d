"""Evaluation: COCO-style mask AP, boundary F-score (AF) and upper-bound studies."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .maskcore import Scene, as_mask, boundary_map, distance_to_set, iou_matrix, mask_iou, tight_bbox
from .refine import match_to_gt

IOU_THRESHOLDS = tuple(np.round(np.linspace(0.5, 0.95, 10), 2).tolist())
RECALL_POINTS = np.linspace(0.0, 1.0, 101)
AREA_RANGES = {
    "all": (0, math.inf),
    "small": (0, 32**2),
    "medium": (32**2, 96**2),
    "large": (96**2, math.inf),
}
UNDEFINED = -1.0
INF_BAND = math.inf


@dataclass
class EvalReport:
    ap: float
    ap50: float
    ap75: float
    ap_s: float
    ap_m: float
    ap_l: float
    af: float
    per_instance: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def mean_iou_after(self) -> float:
        rows = [r for r in self.per_instance if r.get("gt_id") is not None]
        return float(np.mean([r["iou_after"] for r in rows])) if rows else UNDEFINED


@dataclass(frozen=True)
class MatchResult:
    pairs: list
    unmatched_preds: list
    unmatched_gts: list


def match_instances(preds: list, gts: list, iou_thr: float, ious=None, gt_ignore=None) -> MatchResult:
    """Greedy COCO matching of predictions to GT of the same category.

    Predictions are visited by descending score (stable); each claims the
    unclaimed GT with the highest IoU, provided it reaches ``iou_thr``.
    GT flagged in ``gt_ignore`` is only claimed when no regular GT qualifies.
    """
    if not 0.0 < iou_thr <= 1.0:
        raise ValueError(f"iou_thr must lie in (0, 1], got {iou_thr}")
    if ious is None:
        ious = iou_matrix([p.mask for p in preds], [g.mask for g in gts])
    ignore = np.zeros(len(gts), dtype=bool) if gt_ignore is None else np.asarray(gt_ignore, dtype=bool)
    order = sorted(range(len(preds)), key=lambda i: -preds[i].score)
    claimed = np.zeros(len(gts), dtype=bool)
    pairs, unmatched = [], []
    for i in order:
        best, best_iou = -1, -1.0
        for ignored_pass in (False, True):
            for j in range(len(gts)):
                if claimed[j] or ignore[j] != ignored_pass:
                    continue
                if gts[j].category_id != preds[i].category_id:
                    continue
                if ious[i, j] >= iou_thr and ious[i, j] > best_iou:
                    best, best_iou = j, ious[i, j]
            if best >= 0:
                break
        if best >= 0:
            claimed[best] = True
            pairs.append((preds[i], gts[best]))
        else:
            unmatched.append(preds[i])
    return MatchResult(pairs, unmatched, [g for j, g in enumerate(gts) if not claimed[j]])


class _SceneCache:
    """Per-scene IoU matrix and areas, shared across thresholds and buckets."""

    def __init__(self, scene: Scene):
        self.preds = list(scene.predictions)
        self.gts = list(scene.ground_truth or [])
        self.ious = iou_matrix([p.mask for p in self.preds], [g.mask for g in self.gts])
        self.pred_area = np.array([p.area for p in self.preds], dtype=float)
        self.gt_area = np.array([g.area for g in self.gts], dtype=float)


def _interpolated_ap(tp: np.ndarray, n_gt: int) -> float:
    """101-point interpolated AP from score-sorted TP flags."""
    if n_gt == 0:
        return UNDEFINED
    if tp.size == 0:
        return 0.0
    tps = np.cumsum(tp)
    fps = np.cumsum(~tp)
    recall = tps / n_gt
    precision = tps / (tps + fps)
    # make precision non-increasing from the right
    precision = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, RECALL_POINTS, side="left")
    q = np.zeros(len(RECALL_POINTS))
    valid = idx < len(precision)
    q[valid] = precision[idx[valid]]
    return float(q.mean())


def _category_ap(caches: list, category: int, iou_thr: float, area_rng=(0, math.inf)) -> float:
    lo, hi = area_rng
    scores, flags, n_gt = [], [], 0
    for c in caches:
        pi = [i for i, p in enumerate(c.preds) if p.category_id == category]
        gi = [j for j, g in enumerate(c.gts) if g.category_id == category]
        g_ignore = np.array([not (lo <= c.gt_area[j] < hi) for j in gi], dtype=bool)
        n_gt += int((~g_ignore).sum())
        if not pi:
            continue
        preds = [c.preds[i] for i in pi]
        gts = [c.gts[j] for j in gi]
        sub = c.ious[np.ix_(pi, gi)] if gi else np.zeros((len(pi), 0))
        res = match_instances(preds, gts, iou_thr, ious=sub, gt_ignore=g_ignore)
        gt_pos = {id(g): k for k, g in enumerate(gts)}
        matched = {id(p): gt_pos[id(g)] for p, g in res.pairs}
        for k, p in enumerate(preds):
            if id(p) in matched:
                if g_ignore[matched[id(p)]]:
                    continue
                flags.append(True)
            else:
                if not (lo <= c.pred_area[pi[k]] < hi):
                    continue
                flags.append(False)
            scores.append(p.score)
    if n_gt == 0:
        return UNDEFINED
    order = np.argsort(-np.asarray(scores, dtype=float), kind="mergesort")
    return _interpolated_ap(np.asarray(flags, dtype=bool)[order], n_gt)


def _categories(scenes: list) -> list:
    cats = set()
    for s in scenes:
        cats.update(p.category_id for p in s.predictions)
        cats.update(g.category_id for g in s.ground_truth or [])
    return sorted(cats)


def average_precision(scenes: list, category: int, iou_thr: float, area: str = "all") -> float:
    """AP for one category at one IoU threshold, pooled over scenes.

    Returns -1 when the category has no GT in the area bucket.
    """
    if not scenes:
        raise ValueError("average_precision needs at least one scene")
    caches = [_SceneCache(s) for s in scenes]
    return _category_ap(caches, category, iou_thr, AREA_RANGES[area])


def _mean_defined(values) -> float:
    vals = [v for v in values if v != UNDEFINED]
    return float(np.mean(vals)) if vals else UNDEFINED


def _ap_summary(caches: list, cats: list, thresholds, area: str) -> float:
    per_thr = []
    for t in thresholds:
        per_thr.append(_mean_defined(_category_ap(caches, c, t, AREA_RANGES[area]) for c in cats))
    return _mean_defined(per_thr)


def boundary_fscore(pred, gt, tol: float = 1.0) -> float:
    """F-measure between boundary pixel sets with a Euclidean tolerance."""
    pred, gt = as_mask(pred), as_mask(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    if not pred.any() or not gt.any():
        raise ValueError("no boundary")
    # work on the union bbox plus a margin; exact because every seed lies inside it
    h, w = pred.shape
    px0, py0, px1, py1 = tight_bbox(pred)
    gx0, gy0, gx1, gy1 = tight_bbox(gt)
    m = int(math.ceil(tol)) + 2
    x0, y0 = max(min(px0, gx0) - m, 0), max(min(py0, gy0) - m, 0)
    x1, y1 = min(max(px1, gx1) + m + 1, w), min(max(py1, gy1) + m + 1, h)
    pb = boundary_map(pred)[y0:y1, x0:x1]
    gb = boundary_map(gt)[y0:y1, x0:x1]
    cw, ch = x1 - x0, y1 - y0
    d_to_gt = distance_to_set(cw, ch, gb)
    d_to_pred = distance_to_set(cw, ch, pb)
    precision = float(np.mean(d_to_gt[pb] <= tol))
    recall = float(np.mean(d_to_pred[gb] <= tol))
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def _af(caches: list, cats: list, thresholds, tol: float = 1.0) -> float:
    memo = {}
    samples = []
    for t in thresholds:
        for c in caches:
            res = match_instances(c.preds, c.gts, t, ious=c.ious)
            for p, g in res.pairs:
                key = (id(p), id(g))
                if key not in memo:
                    memo[key] = boundary_fscore(p.mask, g.mask, tol)
                samples.append(memo[key])
    return float(np.mean(samples)) if samples else 0.0


def af_metric(scenes: list, tol: float = 1.0) -> float:
    """Boundary F-score averaged over TP pairs at every IoU threshold."""
    caches = [_SceneCache(s) for s in scenes]
    return _af(caches, _categories(scenes), IOU_THRESHOLDS, tol)


def evaluate(scenes: list, per_instance: list = None) -> EvalReport:
    """Full report over scenes carrying both predictions and GT."""
    if not scenes:
        raise ValueError("evaluate needs at least one scene")
    for s in scenes:
        if s.ground_truth is None:
            raise ValueError(f"scene {s.name!r} has no ground truth")
    caches = [_SceneCache(s) for s in scenes]
    cats = _categories(scenes)
    return EvalReport(
        ap=_ap_summary(caches, cats, IOU_THRESHOLDS, "all"),
        ap50=_ap_summary(caches, cats, (0.5,), "all"),
        ap75=_ap_summary(caches, cats, (0.75,), "all"),
        ap_s=_ap_summary(caches, cats, IOU_THRESHOLDS, "small"),
        ap_m=_ap_summary(caches, cats, IOU_THRESHOLDS, "medium"),
        ap_l=_ap_summary(caches, cats, IOU_THRESHOLDS, "large"),
        af=_af(caches, cats, IOU_THRESHOLDS),
        per_instance=per_instance or [],
    )


def gt_band_replace(pred, matched_gt, band: float) -> np.ndarray:
    """Copy GT labels onto pixels within ``band`` px of the predicted boundary.

    ``band = inf`` returns the GT mask.
    """
    pred, gt = as_mask(pred), as_mask(matched_gt)
    if pred.shape != gt.shape:
        raise ValueError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    if not pred.any():
        raise ValueError("empty prediction has no boundary")
    if math.isinf(band):
        return gt.copy()
    if band < 1:
        raise ValueError(f"band must be >= 1 px or inf, got {band}")
    h, w = pred.shape
    near = distance_to_set(w, h, boundary_map(pred)) <= band
    return np.where(near, gt, pred)


def band_label(band: float) -> str:
    return "inf" if math.isinf(band) else f"{band:g}px"


def _replace_scene(scene: Scene, band: float) -> tuple:
    annotated = match_to_gt(scene)
    preds, rows = [], []
    for p in annotated:
        if p.matched_gt_id is None:
            preds.append(replace(p, matched_gt_id=None))
            rows.append({"instance_id": p.instance_id, "gt_id": None, "iou_before": 0.0, "iou_after": 0.0})
            continue
        gt = scene.gt_by_id(p.matched_gt_id).mask
        new = gt_band_replace(p.mask, gt, band) if band is not None else p.mask
        preds.append(replace(p, mask=new, matched_gt_id=None))
        rows.append(
            {
                "instance_id": p.instance_id,
                "gt_id": p.matched_gt_id,
                "iou_before": mask_iou(p.mask, gt),
                "iou_after": mask_iou(new, gt),
            }
        )
    return replace(scene, predictions=preds), rows


def upper_bound_report(scenes: list, bands=(1, 2, 3, INF_BAND)) -> list:
    """Baseline row plus one row per GT-replacement band.

    Predictions are matched to GT greedily by IoU (> 0.5); matched ones get
    :func:`gt_band_replace`, unmatched ones stay as they are.
    """
    rows = []
    for band in (None, *bands):
        replaced, per_inst = [], []
        for s in scenes:
            if s.ground_truth is None:
                raise ValueError(f"scene {s.name!r} has no ground truth")
            new_scene, inst_rows = _replace_scene(s, band)
            replaced.append(new_scene)
            per_inst.extend(dict(r, scene=s.name) for r in inst_rows)
        label = "-" if band is None else band_label(band)
        rows.append((label, evaluate(replaced, per_inst)))
    return rows


def iou_improvement_report(before: list, after: list) -> list:
    """Per-instance IoU against the GT matched on the ``before`` masks."""
    if len(before) != len(after):
        raise ValueError(f"scene counts differ: {len(before)} vs {len(after)}")
    rows = []
    for sb, sa in zip(before, after):
        if sb.ground_truth is None:
            raise ValueError(f"scene {sb.name!r} has no ground truth")
        after_by_id = {p.instance_id: p for p in sa.predictions}
        ids_before = [p.instance_id for p in sb.predictions]
        if sorted(ids_before) != sorted(after_by_id):
            raise ValueError(f"scene {sb.name!r}: instance ids differ between before and after")
        for p in match_to_gt(sb):
            row = {"scene": sb.name, "instance_id": p.instance_id, "gt_id": p.matched_gt_id}
            if p.matched_gt_id is None:
                row.update(iou_before=0.0, iou_after=0.0)
            else:
                gt = sb.gt_by_id(p.matched_gt_id).mask
                row.update(
                    iou_before=mask_iou(p.mask, gt),
                    iou_after=mask_iou(after_by_id[p.instance_id].mask, gt),
                )
            rows.append(row)
    return rows


def _fmt(v: float) -> str:
    return "   -" if v == UNDEFINED else f"{100 * v:5.1f}"


REPORT_COLUMNS = ("AP", "AP50", "AP75", "APs", "APm", "APl", "AF")


def report_row(report: EvalReport) -> list:
    return [report.ap, report.ap50, report.ap75, report.ap_s, report.ap_m, report.ap_l, report.af]


def format_table(rows: list, first_col: str = "") -> str:
    """Aligned text table; ``rows`` holds ``(label, EvalReport)`` pairs."""
    width = max([len(first_col)] + [len(str(label)) for label, _ in rows])
    lines = [f"{first_col:<{width}} | " + " ".join(f"{c:>5}" for c in REPORT_COLUMNS)]
    lines.append("-" * len(lines[0]))
    for label, rep in rows:
        lines.append(f"{str(label):<{width}} | " + " ".join(_fmt(v) for v in report_row(rep)))
    return "\n".join(lines)
