"""Pseudo-color products: RGB composites and colormapped normalized-difference indices."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from importlib import resources
from typing import Sequence, Union

import numpy as np

from msprompt import kernels
from msprompt.png import encode_rgb
from msprompt.raster import MINMAX, BandGrid, BandId, ContractViolation, Normalization, Patch, normalize_band, to_byte


class ProductId(str, enum.Enum):
    TRUE_COLOR = "TrueColor"
    FALSE_COLOR = "FalseColor"
    NDVI = "NDVI"
    NDWI = "NDWI"
    NDMI_B11 = "NDMI_B11"
    NDMI_B12 = "NDMI_B12"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class Colormap:
    """Evenly spaced RGB control points over ``domain``, interpolated linearly.

    Inputs outside the domain clamp to the nearest end color.
    """

    control_points: tuple[tuple[float, float, float], ...]
    domain: tuple[float, float]

    def __post_init__(self):
        points = tuple(tuple(float(c) for c in p) for p in self.control_points)
        if len(points) < 2:
            raise ValueError("a colormap needs at least two control points")
        for p in points:
            if len(p) != 3 or not all(0.0 <= c <= 1.0 for c in p):
                raise ValueError(f"control point {p} is not an RGB triple in [0, 1]")
        lo, hi = (float(x) for x in self.domain)
        if not lo < hi:
            raise ValueError(f"colormap domain must satisfy lo < hi, got {self.domain}")
        object.__setattr__(self, "control_points", points)
        object.__setattr__(self, "domain", (lo, hi))


NDVI_COLORMAP = Colormap(((1, 0, 0), (1, 1, 0), (0, 1, 0)), (-1.0, 1.0))
NDWI_COLORMAP = Colormap(((1, 1, 1), (1, 1, 1), (0, 0, 1)), (-0.8, 0.8))
NDMI_COLORMAP = Colormap(((1, 0, 0), (0, 1, 0), (0, 0, 1)), (-1.0, 1.0))


@dataclass(frozen=True)
class Composite:
    red: BandId
    green: BandId
    blue: BandId

    @property
    def bands(self) -> tuple[BandId, ...]:
        return (self.red, self.green, self.blue)


@dataclass(frozen=True)
class NormalizedDifferenceIndex:
    plus: BandId
    minus: BandId
    colormap: Colormap

    @property
    def bands(self) -> tuple[BandId, ...]:
        return (self.plus, self.minus)


@dataclass(frozen=True)
class ProductSpec:
    product_id: ProductId
    kind: Union[Composite, NormalizedDifferenceIndex]
    description: str

    @property
    def bands(self) -> tuple[BandId, ...]:
        return self.kind.bands


def _descriptions() -> dict[str, str]:
    text = resources.files("msprompt").joinpath("templates/product_descriptions.json").read_text(encoding="utf-8")
    return json.loads(text)


def _catalog() -> dict[ProductId, ProductSpec]:
    desc = _descriptions()
    kinds = {
        ProductId.TRUE_COLOR: Composite(BandId.B04, BandId.B03, BandId.B02),
        ProductId.FALSE_COLOR: Composite(BandId.B08, BandId.B04, BandId.B03),
        ProductId.NDVI: NormalizedDifferenceIndex(BandId.B08, BandId.B04, NDVI_COLORMAP),
        ProductId.NDWI: NormalizedDifferenceIndex(BandId.B03, BandId.B08, NDWI_COLORMAP),
        ProductId.NDMI_B11: NormalizedDifferenceIndex(BandId.B8A, BandId.B11, NDMI_COLORMAP),
        ProductId.NDMI_B12: NormalizedDifferenceIndex(BandId.B8A, BandId.B12, NDMI_COLORMAP),
    }
    return {pid: ProductSpec(pid, kind, desc[pid.value]) for pid, kind in kinds.items()}


PRODUCTS = _catalog()
DEFAULT_SELECTION = (
    ProductId.TRUE_COLOR,
    ProductId.FALSE_COLOR,
    ProductId.NDVI,
    ProductId.NDWI,
    ProductId.NDMI_B11,
    ProductId.NDMI_B12,
)


@dataclass(frozen=True)
class PseudoImage:
    product_id: ProductId
    pixels: np.ndarray  # (height, width, 3) uint8

    def __post_init__(self):
        px = np.array(self.pixels, dtype=np.uint8, copy=True)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"pseudo-image pixels must be (H, W, 3), got {px.shape}")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)
        if self.product_id is not None:
            object.__setattr__(self, "product_id", ProductId(self.product_id))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def to_png(self) -> bytes:
        return encode_rgb(self.pixels)

    def __eq__(self, other):
        if not isinstance(other, PseudoImage):
            return NotImplemented
        return self.product_id == other.product_id and np.array_equal(self.pixels, other.pixels)

    __hash__ = None


def _values(grid) -> np.ndarray:
    return grid.values if isinstance(grid, BandGrid) else np.asarray(grid, dtype=np.float32)


def _check_same_shape(grids, names) -> None:
    shapes = [_values(g).shape for g in grids]
    if len(set(shapes)) != 1:
        described = ", ".join(f"{n} {s[1]}x{s[0]}" if len(s) == 2 else f"{n} {s}" for n, s in zip(names, shapes))
        raise ContractViolation(f"band dimensions differ: {described}")


def normalized_difference(plus, minus) -> np.ndarray:
    """``(plus - minus) / (plus + minus)`` per pixel as float32; 0 where the denominator is 0."""
    _check_same_shape([plus, minus], ["plus", "minus"])
    p, m = _values(plus), _values(minus)
    if p.ndim != 2:
        return kernels.normalized_difference(p.reshape(1, -1), m.reshape(1, -1)).reshape(p.shape)
    return kernels.normalized_difference(p, m)


def apply_colormap(index, cmap: Colormap, product_id: ProductId | None = None) -> PseudoImage:
    values = _values(index)
    if values.ndim != 2:
        values = values.reshape(1, -1)
    lo, hi = cmap.domain
    return PseudoImage(product_id, kernels.colormap(values, cmap.control_points, lo, hi))


def compose_rgb(
    red: BandGrid,
    green: BandGrid,
    blue: BandGrid,
    method: Normalization = MINMAX,
    product_id: ProductId | None = ProductId.TRUE_COLOR,
) -> PseudoImage:
    """Normalize each band independently, byte-scale, and stack as R, G, B."""
    _check_same_shape([red, green, blue], ["red", "green", "blue"])
    channels = [to_byte(normalize_band(g, method)) for g in (red, green, blue)]
    return PseudoImage(product_id, np.stack(channels, axis=-1))


def render_product(patch: Patch, product: ProductId | str, method: Normalization = MINMAX) -> PseudoImage:
    spec = PRODUCTS[ProductId(product)]
    for band in spec.bands:
        if band not in patch.bands:
            raise ContractViolation(f"patch {patch.id}: product {spec.product_id} needs band {band}, which is missing")
    kind = spec.kind
    if isinstance(kind, Composite):
        r, g, b = (patch.bands[x] for x in kind.bands)
        return compose_rgb(r, g, b, method, spec.product_id)
    index = normalized_difference(patch.bands[kind.plus], patch.bands[kind.minus])
    return apply_colormap(index, kind.colormap, spec.product_id)


def render_products(
    patch: Patch,
    selection: Sequence[ProductId | str] = DEFAULT_SELECTION,
    method: Normalization = MINMAX,
) -> list[PseudoImage]:
    """Render ``selection`` in order. Images keep their bands' native grid; nothing is resampled."""
    return [render_product(patch, p, method) for p in selection]


def parse_selection(text: str | Sequence[str]) -> tuple[ProductId, ...]:
    """Parse a comma-separated product list; ``"all"`` means the default six."""
    items = text.split(",") if isinstance(text, str) else list(text)
    items = [s.strip() for s in items if s.strip()]
    if items == ["all"]:
        return DEFAULT_SELECTION
    try:
        selection = tuple(ProductId(s) for s in items)
    except ValueError as exc:
        raise ValueError(f"{exc}; known products: {', '.join(p.value for p in ProductId)}") from None
    if len(set(selection)) != len(selection):
        raise ValueError(f"duplicate products in selection {items}")
    if not selection:
        raise ValueError("empty product selection")
    return selection
