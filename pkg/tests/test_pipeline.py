import sys

import numpy as np
import pytest

from bpr.extract import ExtractionConfig
from bpr.maskcore import mask_iou
from bpr.metrics import iou_improvement_report
from bpr.pipeline import (
    STAGES,
    PipelineConfig,
    export_scene,
    format_timing,
    import_scene,
    refine_corpus,
    refine_scene,
    timing_summary,
)
from bpr.refine import write_identity_outputs

IDENTITY_CMD = f"{sys.executable} -m bpr.cli identity-refiner {{dir}}"


def test_identity_scene(corpus):
    res = refine_scene(corpus[0], PipelineConfig(refiner="identity"))
    assert res.n_patches > 0
    for a, b in zip(res.scene.predictions, corpus[0].predictions):
        np.testing.assert_array_equal(a.mask, b.mask)
        assert (a.instance_id, a.score) == (b.instance_id, b.score)


@pytest.mark.parametrize("refiner", ["oracle", "colormodel"])
def test_jobs_deterministic(corpus, refiner):
    one = refine_scene(corpus[1], PipelineConfig(refiner=refiner))
    many = refine_scene(corpus[1], PipelineConfig(refiner=refiner, jobs=4))
    assert one.n_patches == many.n_patches
    for a, b in zip(one.scene.predictions, many.scene.predictions):
        np.testing.assert_array_equal(a.mask, b.mask)


def test_oracle_improves_every_instance(corpus):
    after = [r.scene for r in refine_corpus(corpus[:5], PipelineConfig(refiner="oracle"))]
    rows = iou_improvement_report(corpus[:5], after)
    assert all(r["iou_after"] >= r["iou_before"] for r in rows)
    assert np.mean([r["iou_after"] for r in rows]) > np.mean([r["iou_before"] for r in rows])


def test_instance_scheme_runs(corpus):
    cfg = PipelineConfig(ExtractionConfig(scheme="instance"), refiner="identity")
    res = refine_scene(corpus[0], cfg)
    assert res.n_patches == len(corpus[0].predictions)
    for a, b in zip(res.scene.predictions, corpus[0].predictions):
        np.testing.assert_array_equal(a.mask, b.mask)


def test_external_config_validation(tmp_path):
    with pytest.raises(ValueError):
        PipelineConfig(refiner="external")
    with pytest.raises(ValueError):
        PipelineConfig(ExtractionConfig(scheme="instance"), refiner="external", exchange_dir=tmp_path)
    with pytest.raises(ValueError):
        PipelineConfig(jobs=0)


def test_external_round_trip(corpus, tmp_path):
    cfg = PipelineConfig(refiner="external", exchange_dir=tmp_path, external_cmd=IDENTITY_CMD, input_size=128)
    res = refine_scene(corpus[2], cfg)
    assert (tmp_path / corpus[2].name / "manifest.json").is_file()
    for a, b in zip(res.scene.predictions, corpus[2].predictions):
        np.testing.assert_array_equal(a.mask, b.mask)


def test_export_import_by_hand(corpus, tmp_path):
    cfg = PipelineConfig(ExtractionConfig(patch_size=32, pad=5), input_size=84)
    manifest = export_scene(corpus[3], cfg, tmp_path)
    write_identity_outputs(tmp_path)
    scene, n = import_scene(corpus[3], tmp_path)
    assert n == len(manifest["entries"])
    for a, b in zip(scene.predictions, corpus[3].predictions):
        np.testing.assert_array_equal(a.mask, b.mask)


def test_training_export_filters(corpus, tmp_path):
    scene = corpus[0]
    good = scene.predictions[0]
    bad = good.__class__(good.instance_id, good.category_id, good.score, np.roll(good.mask, 60, axis=1))
    assert mask_iou(bad.mask, scene.gt_by_id(good.instance_id).mask) <= 0.5
    preds = [bad] + list(scene.predictions[1:])
    tampered = scene.__class__(scene.image, preds, scene.ground_truth, scene.name)
    manifest = export_scene(tampered, PipelineConfig(), tmp_path, training=True)
    ids = {e["instance_id"] for e in manifest["entries"]}
    assert good.instance_id not in ids and ids
    assert all("gt" in e for e in manifest["entries"])


def test_import_rejects_unknown_instance(corpus, tmp_path):
    export_scene(corpus[0], PipelineConfig(), tmp_path)
    write_identity_outputs(tmp_path)
    with pytest.raises(ValueError, match="unknown instances"):
        import_scene(corpus[1].__class__(corpus[1].image, [], corpus[1].ground_truth, "x"), tmp_path)


def test_timing_summary(corpus):
    results = refine_corpus(corpus[:3], PipelineConfig(refiner="identity"))
    summary = timing_summary(results)
    assert [row["stage"] for row in summary["stages"]] == list(STAGES)
    assert list(summary["patches_per_image"]) == [s.name for s in corpus[:3]]
    assert summary["mean_patches_per_image"] == pytest.approx(np.mean([r.n_patches for r in results]))
    text = format_timing(summary)
    for stage in STAGES:
        assert stage in text


def test_export_ids_unique_across_instances(corpus, tmp_path):
    manifest = export_scene(corpus[0], PipelineConfig(), tmp_path)
    ids = [e["patch_id"] for e in manifest["entries"]]
    assert ids == list(range(len(ids)))
    assert len({e["instance_id"] for e in manifest["entries"]}) > 1
