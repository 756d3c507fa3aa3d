"""Extract -> refine -> reassemble over whole scenes, with per-stage timing."""
from __future__ import annotations

import logging
import shlex
import subprocess
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .assemble import reassemble
from .extract import ExtractionConfig, Scheme, crop_patches, extract_specs
from .maskcore import Scene
from .refine import (
    ColorModelParams,
    RefinerKind,
    export_patches,
    import_refined,
    load_manifest,
    match_to_gt,
    refine_patch,
    select_training_instances,
)

log = logging.getLogger(__name__)

STAGES = ("patch extraction", "refinement", "reassembling")


@dataclass(frozen=True)
class PipelineConfig:
    extraction: ExtractionConfig = ExtractionConfig()
    refiner: RefinerKind = RefinerKind.IDENTITY
    colormodel: ColorModelParams = ColorModelParams()
    input_size: int = 128
    exchange_dir: Optional[Path] = None
    external_cmd: Optional[str] = None
    jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "refiner", RefinerKind(self.refiner))
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")
        if self.refiner is RefinerKind.EXTERNAL:
            if self.exchange_dir is None:
                raise ValueError("external refiner needs an exchange directory")
            if self.extraction.scheme is Scheme.INSTANCE:
                raise ValueError("instance-level patches vary in size; the exchange format needs one patch size")


@dataclass
class SceneResult:
    scene: Scene
    n_patches: int
    timing_ms: dict = field(default_factory=lambda: dict.fromkeys(STAGES, 0.0))


def _instance_patches(scene: Scene, inst, config: PipelineConfig, with_gt: bool, first_id: int = 0) -> list:
    boxes, scores = extract_specs(inst.mask, config.extraction)
    return crop_patches(scene, inst, boxes, config.extraction.pad, with_gt=with_gt, scores=scores, first_id=first_id)


def _refine_builtin(scene: Scene, config: PipelineConfig) -> SceneResult:
    timing = dict.fromkeys(STAGES, 0.0)
    oracle = config.refiner is RefinerKind.ORACLE
    preds = match_to_gt(scene) if oracle else list(scene.predictions)

    def work(inst):
        t0 = time.perf_counter()
        if oracle and inst.matched_gt_id is None:
            log.warning("%s: prediction %d has no matched GT, left unchanged", scene.name, inst.instance_id)
            return inst.mask, 0, (time.perf_counter() - t0, 0.0, 0.0)
        patches = _instance_patches(scene, inst, config, with_gt=oracle)
        t1 = time.perf_counter()
        refined = [refine_patch(config.refiner, p, config.colormodel) for p in patches]
        t2 = time.perf_counter()
        mask = reassemble(inst.mask, refined)
        t3 = time.perf_counter()
        return mask, len(patches), (t1 - t0, t2 - t1, t3 - t2)

    if config.jobs > 1:
        with ThreadPoolExecutor(config.jobs) as pool:
            results = list(pool.map(work, preds))
    else:
        results = [work(p) for p in preds]
    new_preds, n_patches = [], 0
    for orig, (mask, n, dts) in zip(scene.predictions, results):
        new_preds.append(replace(orig, mask=mask))
        n_patches += n
        for stage, dt in zip(STAGES, dts):
            timing[stage] += 1000.0 * dt
    return SceneResult(replace(scene, predictions=new_preds), n_patches, timing)


def export_scene(scene: Scene, config: PipelineConfig, exchange_dir, training: bool = False) -> dict:
    """Write one scene's patches to ``exchange_dir``.

    With ``training`` only predictions passing the IoU > 0.5 filter are
    exported, together with their GT crops.
    """
    if config.extraction.scheme is Scheme.INSTANCE:
        raise ValueError("instance-level patches vary in size; the exchange format needs one patch size")
    insts = select_training_instances(scene) if training else scene.predictions
    patches = []
    for inst in insts:
        # ids unique across the scene so errors can name a single patch
        patches.extend(_instance_patches(scene, inst, config, with_gt=training, first_id=len(patches)))
    return export_patches(
        patches,
        config.input_size,
        exchange_dir,
        patch_size=config.extraction.patch_size,
        pad=config.extraction.pad,
    )


def import_scene(scene: Scene, exchange_dir) -> tuple:
    """Reassemble every prediction from refined outputs in ``exchange_dir``."""
    manifest = load_manifest(exchange_dir)
    refined = import_refined(manifest, exchange_dir)
    by_inst = {}
    for rp in refined:
        by_inst.setdefault(rp.spec.instance_id, []).append(rp)
    known = {p.instance_id for p in scene.predictions}
    stray = sorted(set(by_inst) - known)
    if stray:
        raise ValueError(f"{exchange_dir}: manifest references unknown instances {stray}")
    preds = [replace(p, mask=reassemble(p.mask, by_inst.get(p.instance_id, []))) for p in scene.predictions]
    return replace(scene, predictions=preds), len(refined)


def run_external(cmd: str, exchange_dir) -> None:
    args = [a.replace("{dir}", str(exchange_dir)) for a in shlex.split(cmd)]
    if not any("{dir}" in a for a in shlex.split(cmd)):
        args.append(str(exchange_dir))
    log.info("running external refiner: %s", " ".join(args))
    subprocess.run(args, check=True)


def _refine_external(scene: Scene, config: PipelineConfig) -> SceneResult:
    timing = dict.fromkeys(STAGES, 0.0)
    xdir = Path(config.exchange_dir) / (scene.name or "scene")
    t0 = time.perf_counter()
    export_scene(scene, config, xdir)
    t1 = time.perf_counter()
    if config.external_cmd:
        run_external(config.external_cmd, xdir)
    t2 = time.perf_counter()
    refined_scene, n = import_scene(scene, xdir)
    t3 = time.perf_counter()
    timing["patch extraction"] = 1000.0 * (t1 - t0)
    timing["refinement"] = 1000.0 * (t2 - t1)
    timing["reassembling"] = 1000.0 * (t3 - t2)
    return SceneResult(refined_scene, n, timing)


def refine_scene(scene: Scene, config: PipelineConfig = PipelineConfig()) -> SceneResult:
    if config.refiner is RefinerKind.EXTERNAL:
        return _refine_external(scene, config)
    return _refine_builtin(scene, config)


def refine_corpus(scenes: list, config: PipelineConfig = PipelineConfig()) -> list:
    return [refine_scene(s, config) for s in scenes]


def timing_summary(results: list) -> dict:
    """Per-stage mean milliseconds per image plus per-image patch counts."""
    n = max(len(results), 1)
    return {
        "stages": [
            {"stage": stage, "total_ms": sum(r.timing_ms[stage] for r in results),
             "mean_ms_per_image": sum(r.timing_ms[stage] for r in results) / n}
            for stage in STAGES
        ],
        "patches_per_image": {r.scene.name: r.n_patches for r in results},
        "mean_patches_per_image": float(np.mean([r.n_patches for r in results])) if results else 0.0,
    }


def format_timing(summary: dict) -> str:
    lines = [f"{'stage':<18} {'total ms':>10} {'ms/image':>10}"]
    for row in summary["stages"]:
        lines.append(f"{row['stage']:<18} {row['total_ms']:>10.1f} {row['mean_ms_per_image']:>10.1f}")
    lines.append("")
    lines.append(f"{'image':<18} {'#patches':>10}")
    for name, n in summary["patches_per_image"].items():
        lines.append(f"{name:<18} {n:>10d}")
    lines.append(f"{'mean':<18} {summary['mean_patches_per_image']:>10.1f}")
    return "\n".join(lines)
