"""
Plugging in an external refiner
===============================

Patches are written to an exchange directory (manifest.json plus PNG
crops), any program fills in ``out/<patch_id>.f32`` with probabilities,
and the results are imported and reassembled. Here the "external"
program is the bundled identity refiner, run as a subprocess.
"""
import json
import sys
import tempfile
from pathlib import Path

import numpy as np

from bpr import ExtractionConfig, PipelineConfig, refine_scene
from bpr.synthgen import SynthConfig, generate_scene

scene = generate_scene(SynthConfig(seed=42), 3)

with tempfile.TemporaryDirectory() as tmp:
    config = PipelineConfig(
        extraction=ExtractionConfig(patch_size=64),
        refiner="external",
        input_size=128,
        exchange_dir=Path(tmp),
        external_cmd=f"{sys.executable} -m bpr.cli identity-refiner {{dir}}",
    )
    result = refine_scene(scene, config)
    manifest = json.loads((Path(tmp) / scene.name / "manifest.json").read_text())
    print(f"exchange: {len(manifest['entries'])} patches, input_size {manifest['input_size']}")
    print("first entry:", json.dumps(manifest["entries"][0]))

same = all(np.array_equal(a.mask, b.mask) for a, b in zip(scene.predictions, result.scene.predictions))
print("round trip bit-identical:", same)
