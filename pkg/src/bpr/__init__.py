"""Boundary patch refinement for instance segmentation masks."""
from .assemble import reassemble
from .extract import ExtractionConfig, Scheme, SquareBox
from .maskcore import Instance, Scene, boundary_pixels, distance_to_set, mask_iou, morph
from .metrics import EvalReport, evaluate
from .pipeline import PipelineConfig, refine_corpus, refine_scene
from .refine import ColorModelParams, RefinerKind
from .synthgen import SynthConfig, generate_corpus, generate_scene

__version__ = "0.1.0"

__all__ = [
    "reassemble",
    "ExtractionConfig",
    "Scheme",
    "SquareBox",
    "Instance",
    "Scene",
    "boundary_pixels",
    "distance_to_set",
    "mask_iou",
    "morph",
    "EvalReport",
    "evaluate",
    "PipelineConfig",
    "refine_corpus",
    "refine_scene",
    "ColorModelParams",
    "RefinerKind",
    "SynthConfig",
    "generate_corpus",
    "generate_scene",
]
