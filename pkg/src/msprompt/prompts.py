"""Prompt texts for each (task, modality) pair, assembled from template files.

Templates live in ``msprompt/templates`` and use ``{{NAME}}`` placeholders:
CLASS_BLOCK, RANGE, IMAGE_COUNT, BAND_GLOSSARY, IMAGE_DESCRIPTIONS, and
ORDINAL inside per-product descriptions.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Sequence

from msprompt.products import PRODUCTS, ProductId, PseudoImage


class Task(str, enum.Enum):
    BIGEARTHNET43 = "BigEarthNet43"
    BIGEARTHNET19 = "BigEarthNet19"
    EUROSAT10 = "EuroSat10"

    def __str__(self) -> str:
        return self.value


class Modality(str, enum.Enum):
    RGB_ONLY = "RgbOnly"
    MULTISPECTRAL = "MultiSpectral"

    def __str__(self) -> str:
        return self.value


_CLASS_FILES = {
    Task.BIGEARTHNET43: "classes_bigearthnet43.txt",
    Task.BIGEARTHNET19: "classes_bigearthnet19.txt",
    Task.EUROSAT10: "classes_eurosat10.txt",
}
_ORDINALS = ("first", "second", "third", "fourth", "fifth", "sixth")
_OPTION = re.compile(r"^\((\d+)\)(.*?)\s*$")
_PLACEHOLDER = re.compile(r"\{\{[A-Z_]+\}\}")


def _read(name: str) -> str:
    return resources.files("msprompt").joinpath("templates", name).read_text(encoding="utf-8")


@dataclass(frozen=True)
class TaskSpec:
    task: Task
    class_names: tuple[str, ...]
    multi_label: bool
    option_lines: str  # the "(k)Name" block exactly as it appears in prompts

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def index_of(self, name: str) -> int:
        """1-based index of a class by exact name."""
        try:
            return self.class_names.index(name) + 1
        except ValueError:
            raise KeyError(f"{name!r} is not a {self.task} class") from None


@lru_cache(maxsize=None)
def task_spec(task: Task | str) -> TaskSpec:
    task = Task(task)
    block = _read(_CLASS_FILES[task])
    names = []
    for k, line in enumerate(block.splitlines(), start=1):
        m = _OPTION.match(line)
        if m is None or int(m.group(1)) != k:
            raise ValueError(f"malformed option line {k} in {_CLASS_FILES[task]}: {line!r}")
        names.append(m.group(2))
    return TaskSpec(task, tuple(names), task is not Task.EUROSAT10, block)


@dataclass(frozen=True)
class Prompt:
    text: str
    attachments: tuple[PseudoImage, ...]
    modality: Modality


def band_glossary() -> str:
    """The 12-line numbered Sentinel-2 band description block."""
    return _read("band_glossary.txt")


def image_descriptions(products: Sequence[ProductId | str]) -> str:
    if len(products) > len(_ORDINALS):
        raise ValueError(f"at most {len(_ORDINALS)} images can be described, got {len(products)}")
    return "".join(
        PRODUCTS[ProductId(p)].description.replace("{{ORDINAL}}", ordinal)
        for p, ordinal in zip(products, _ORDINALS)
    )


def _fill(template: str, values: dict[str, str]) -> str:
    for key, value in values.items():
        template = template.replace("{{" + key + "}}", value)
    left = _PLACEHOLDER.findall(template)
    if left:
        raise ValueError(f"unfilled template placeholders: {sorted(set(left))}")
    return template


def prompt_text(task: Task | str, modality: Modality | str, products: Sequence[ProductId | str]) -> str:
    """Prompt text for the given task, modality, and ordered image products."""
    spec = task_spec(task)
    modality = Modality(modality)
    products = [ProductId(p) for p in products]
    if modality is Modality.RGB_ONLY:
        if products != [ProductId.TRUE_COLOR]:
            raise ValueError(f"RgbOnly prompts take exactly one TrueColor image, got {[str(p) for p in products]}")
        name = "rgb_multilabel.txt" if spec.multi_label else "rgb_singlelabel.txt"
        return _fill(_read(name), {"CLASS_BLOCK": spec.option_lines, "RANGE": str(spec.n_classes)})

    if len(products) < 2:
        raise ValueError("MultiSpectral prompts need at least two images; use RgbOnly for a single RGB image")
    if len(set(products)) != len(products):
        raise ValueError("duplicate products in a MultiSpectral prompt")
    name = "multispectral_multilabel.txt" if spec.multi_label else "multispectral_singlelabel.txt"
    return _fill(_read(name), {
        "IMAGE_COUNT": str(len(products)),
        "BAND_GLOSSARY": band_glossary(),
        "IMAGE_DESCRIPTIONS": image_descriptions(products),
        "CLASS_BLOCK": spec.option_lines,
        "RANGE": str(spec.n_classes),
    })


def build_prompt(task: Task | str, modality: Modality | str, images: Sequence[PseudoImage]) -> Prompt:
    modality = Modality(modality)
    images = tuple(images)
    if modality is Modality.RGB_ONLY and len(images) != 1:
        raise ValueError(f"RgbOnly prompts take 1 image, got {len(images)}")
    if any(img.product_id is None for img in images):
        raise ValueError("every attached image needs a product id so it can be described")
    text = prompt_text(task, modality, [img.product_id for img in images])
    return Prompt(text, images, modality)
