"""Band identifiers, single-band grids, patches, and per-band normalization."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

import numpy as np

from msprompt import kernels


class ContractViolation(ValueError):
    """An input broke an operation's documented precondition."""


class BandId(str, enum.Enum):
    """Sentinel-2 bands used by the pipeline. B10 (cirrus) is deliberately absent."""

    B01 = "B01"
    B02 = "B02"
    B03 = "B03"
    B04 = "B04"
    B05 = "B05"
    B06 = "B06"
    B07 = "B07"
    B08 = "B08"
    B8A = "B8A"
    B09 = "B09"
    B11 = "B11"
    B12 = "B12"

    @property
    def resolution(self) -> int:
        """Nominal ground resolution in meters."""
        return _RESOLUTION[self]

    def __str__(self) -> str:
        return self.value


_RESOLUTION = {
    BandId.B02: 10, BandId.B03: 10, BandId.B04: 10, BandId.B08: 10,
    BandId.B05: 20, BandId.B06: 20, BandId.B07: 20, BandId.B8A: 20, BandId.B11: 20, BandId.B12: 20,
    BandId.B01: 60, BandId.B09: 60,
}

BIGEARTHNET = "bigearthnet"
EUROSAT = "eurosat"

# side length in pixels keyed by nominal resolution (BigEarthNet) or fixed (EuroSat)
_BIGEARTHNET_SIDE = {10: 120, 20: 60, 60: 20}
_EUROSAT_SIDE = 64


def expected_shape(dataset: str, band: BandId) -> tuple[int, int] | None:
    """(height, width) a band must have in ``dataset``, or None if unconstrained."""
    if dataset == BIGEARTHNET:
        side = _BIGEARTHNET_SIDE[band.resolution]
        return side, side
    if dataset == EUROSAT:
        return _EUROSAT_SIDE, _EUROSAT_SIDE
    return None


@dataclass(frozen=True)
class BandGrid:
    """One band as a read-only float32 ``(height, width)`` array of non-negative reflectance counts.

    ``storage_dtype`` records how the band is persisted in a bundle (``"u16"``
    or ``"f32"``) so export reproduces the original bytes.
    """

    values: np.ndarray
    resolution: int
    storage_dtype: str = "f32"

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float32, copy=True)
        if arr.ndim != 2 or arr.size == 0:
            raise ContractViolation(f"band grid must be a non-empty 2-D array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ContractViolation("band grid contains non-finite values")
        if np.any(arr < 0):
            raise ContractViolation("band grid contains negative values")
        if self.storage_dtype not in ("u16", "f32"):
            raise ContractViolation(f"unsupported storage dtype {self.storage_dtype!r}")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def __eq__(self, other):
        if not isinstance(other, BandGrid):
            return NotImplemented
        return (
            self.resolution == other.resolution
            and self.storage_dtype == other.storage_dtype
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


@dataclass(frozen=True)
class Patch:
    id: str
    dataset: str
    bands: Mapping[BandId, BandGrid]
    labels: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        bands = {BandId(k): v for k, v in dict(self.bands).items()}
        for band, grid in bands.items():
            if grid.resolution != band.resolution:
                raise ContractViolation(
                    f"patch {self.id}: {band} has resolution {grid.resolution} m, expected {band.resolution} m"
                )
            shape = expected_shape(self.dataset, band)
            if shape is not None and grid.shape != shape:
                raise ContractViolation(
                    f"patch {self.id}: {band} is {grid.width}x{grid.height}, expected {shape[1]}x{shape[0]}"
                )
        labels = frozenset(int(i) for i in self.labels)
        if any(i < 1 for i in labels):
            raise ContractViolation(f"patch {self.id}: label indices are 1-based, got {sorted(labels)}")
        object.__setattr__(self, "bands", MappingProxyType(dict(sorted(bands.items(), key=lambda kv: _ORDER[kv[0]]))))
        object.__setattr__(self, "labels", labels)

    def band(self, band: BandId) -> BandGrid:
        return self.bands[BandId(band)]


_ORDER = {b: i for i, b in enumerate(BandId)}


@dataclass(frozen=True)
class Normalization:
    """How a band is rescaled to [0, 1].

    ``minmax`` uses the band's own min and max. ``percentile`` first clips to
    the ``[p_lo, p_hi]`` percentiles (linear interpolation between order
    statistics), then applies min-max over the clip window.
    """

    method: str = "minmax"
    p_lo: float = 2.0
    p_hi: float = 98.0

    def __post_init__(self):
        if self.method not in ("minmax", "percentile"):
            raise ValueError(f"unknown normalization method {self.method!r}")
        if not 0.0 <= self.p_lo < self.p_hi <= 100.0:
            raise ValueError(f"invalid percentile window ({self.p_lo}, {self.p_hi})")

    @classmethod
    def parse(cls, text: str) -> "Normalization":
        """Parse ``"minmax"``, ``"percentile"`` or ``"percentile:LO,HI"``."""
        name, _, args = text.partition(":")
        if name != "percentile" or not args:
            return cls(name)
        lo, hi = (float(x) for x in args.split(","))
        return cls("percentile", lo, hi)

    def __str__(self) -> str:
        if self.method == "minmax":
            return "minmax"
        return f"percentile:{self.p_lo:g},{self.p_hi:g}"


MINMAX = Normalization()
PERCENTILE = Normalization("percentile")


def clip_window(values: np.ndarray, method: Normalization) -> tuple[np.float32, np.float32]:
    """The ``(lo, hi)`` window that maps to 0 and 1 under ``method``."""
    if method.method == "minmax":
        return np.float32(values.min()), np.float32(values.max())
    lo, hi = np.percentile(values.astype(np.float64), [method.p_lo, method.p_hi], method="linear")
    return np.float32(lo), np.float32(hi)


def normalize_band(grid: BandGrid, method: Normalization = MINMAX) -> BandGrid:
    """Rescale a band to [0, 1]. A constant band (or empty clip window) becomes all zeros."""
    lo, hi = clip_window(grid.values, method)
    return BandGrid(kernels.rescale_clip(grid.values, lo, hi), grid.resolution)


def to_byte(grid) -> np.ndarray:
    """Scale unit-range values to uint8 with ``round(v * 255)``, ties away from zero."""
    values = grid.values if isinstance(grid, BandGrid) else np.asarray(grid, dtype=np.float32)
    if values.size and not (np.all(np.isfinite(values)) and values.min() >= 0.0 and values.max() <= 1.0):
        raise ContractViolation("to_byte expects values in [0, 1]")
    if values.ndim != 2:
        return kernels.to_byte(values.reshape(1, -1)).reshape(values.shape)
    return kernels.to_byte(values)
