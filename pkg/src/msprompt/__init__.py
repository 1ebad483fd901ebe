"""Zero-shot multi-spectral land-cover classification with pseudo-color images and descriptive prompts."""

from msprompt.ingest import DatasetManifest, read_bundle, sample_subset, write_bundle
from msprompt.kernels import BACKEND as KERNEL_BACKEND
from msprompt.metrics import PredictionRecord, aggregate, map_43_to_19, sample_prf, top1_accuracy
from msprompt.parsing import ParsedAnswer, ParseFailure, parse_answer
from msprompt.products import (
    DEFAULT_SELECTION,
    PRODUCTS,
    Colormap,
    ProductId,
    PseudoImage,
    apply_colormap,
    compose_rgb,
    normalized_difference,
    render_products,
)
from msprompt.prompts import Modality, Prompt, Task, band_glossary, build_prompt, task_spec
from msprompt.raster import BandGrid, BandId, Normalization, Patch, normalize_band, to_byte

__version__ = "0.1.0"

__all__ = [
    "KERNEL_BACKEND",
    "DatasetManifest", "read_bundle", "write_bundle", "sample_subset",
    "BandGrid", "BandId", "Normalization", "Patch", "normalize_band", "to_byte",
    "Colormap", "ProductId", "PseudoImage", "PRODUCTS", "DEFAULT_SELECTION",
    "normalized_difference", "apply_colormap", "compose_rgb", "render_products",
    "Task", "Modality", "Prompt", "task_spec", "band_glossary", "build_prompt",
    "ParsedAnswer", "ParseFailure", "parse_answer",
    "PredictionRecord", "sample_prf", "aggregate", "top1_accuracy", "map_43_to_19",
]
