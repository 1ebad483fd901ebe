"""Patch bundles, source-dataset importers, manifests, and seeded subsets.

A patch bundle is a directory holding ``patch.json`` plus one headerless,
row-major, little-endian binary file per band::

    {"id": "...", "dataset": "bigearthnet", "labels": [6, 37],
     "bands": [{"band_id": "B02", "width": 120, "height": 120,
                "resolution_m": 10, "dtype": "u16", "file": "B02.bin"}, ...]}
"""

from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from msprompt.prng import SplitMix64
from msprompt.prompts import Task, task_spec
from msprompt.raster import BIGEARTHNET, EUROSAT, BandGrid, BandId, Patch, expected_shape

log = logging.getLogger(__name__)

BUNDLE_META = "patch.json"
_DTYPES = {"u16": np.dtype("<u2"), "f32": np.dtype("<f4")}

# plane order of EuroSat MS GeoTIFFs; the B10 plane is dropped on import
EUROSAT_PLANES = ("B01", "B02", "B03", "B04", "B05", "B06", "B07", "B08", "B8A", "B09", "B10", "B11", "B12")

DATASET_TASK = {BIGEARTHNET: Task.BIGEARTHNET43, EUROSAT: Task.EUROSAT10}


class BundleError(ValueError):
    """A bundle or source patch is malformed."""


def _decode_tiff(path: Path) -> np.ndarray:
    import tifffile

    try:
        return tifffile.imread(str(path))
    except tifffile.TiffFileError as exc:
        raise BundleError(f"{path.name}: {exc}") from None


# ---- bundles ----

def write_bundle(patch: Patch, dest: str | os.PathLike) -> Path:
    """Write ``patch`` as a bundle directory at ``dest`` (created if needed)."""
    dest = Path(dest)
    dest.mkdir(parents=True, exist_ok=True)
    bands = []
    for band_id, grid in patch.bands.items():
        dtype = _DTYPES[grid.storage_dtype]
        values = grid.values
        if grid.storage_dtype == "u16":
            if values.max(initial=0) > 65535 or not np.array_equal(values, np.floor(values)):
                raise BundleError(f"patch {patch.id}: {band_id} cannot be stored as u16")
        name = f"{band_id}.bin"
        (dest / name).write_bytes(values.astype(dtype).tobytes(order="C"))
        bands.append({
            "band_id": str(band_id),
            "width": grid.width,
            "height": grid.height,
            "resolution_m": grid.resolution,
            "dtype": grid.storage_dtype,
            "file": name,
        })
    meta = {"id": patch.id, "dataset": patch.dataset, "labels": sorted(patch.labels), "bands": bands}
    (dest / BUNDLE_META).write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    return dest


def read_bundle(path: str | os.PathLike) -> Patch:
    path = Path(path)
    try:
        meta = json.loads((path / BUNDLE_META).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise BundleError(f"{path}: no {BUNDLE_META}") from None
    bands = {}
    for entry in meta["bands"]:
        try:
            band_id = BandId(entry["band_id"])
        except ValueError:
            raise BundleError(f"{path}: unknown band id {entry['band_id']!r}") from None
        if band_id in bands:
            raise BundleError(f"{path}: duplicate band {band_id}")
        dtype_name = entry["dtype"]
        if dtype_name not in _DTYPES:
            raise BundleError(f"{path}: {band_id} has unsupported dtype {dtype_name!r}")
        dtype = _DTYPES[dtype_name]
        width, height = int(entry["width"]), int(entry["height"])
        raw = (path / entry["file"]).read_bytes()
        expected = width * height * dtype.itemsize
        if len(raw) != expected:
            raise BundleError(f"{path}: {band_id} file has {len(raw)} bytes, expected {expected} ({width}x{height} {dtype_name})")
        values = np.frombuffer(raw, dtype=dtype).reshape(height, width)
        bands[band_id] = BandGrid(values, int(entry["resolution_m"]), dtype_name)
    try:
        return Patch(meta["id"], meta["dataset"], bands, frozenset(meta["labels"]))
    except ValueError as exc:
        raise BundleError(f"{path}: {exc}") from None


# ---- source importers ----

def _checked_grid(patch_id: str, dataset: str, band: BandId, values: np.ndarray) -> BandGrid:
    values = np.asarray(values)
    shape = expected_shape(dataset, band)
    if values.ndim != 2 or (shape is not None and values.shape != shape):
        got = "x".join(str(s) for s in values.shape[::-1])
        raise BundleError(f"patch {patch_id}: {band} is {got}, expected {shape[1]}x{shape[0]}")
    return BandGrid(values, band.resolution, "u16")


def import_bigearthnet_patch(source_dir: str | os.PathLike) -> Patch:
    """Read a BigEarthNet-S2 patch folder: ``<name>_<band>.tif`` files plus ``<name>_labels_metadata.json``."""
    source_dir = Path(source_dir)
    patch_id = source_dir.name
    spec = task_spec(Task.BIGEARTHNET43)
    bands = {}
    for band in BandId:
        candidates = [source_dir / f"{patch_id}_{band}.tif", source_dir / f"{patch_id}_{band}.tiff"]
        found = next((c for c in candidates if c.exists()), None)
        if found is None:
            raise BundleError(f"patch {patch_id}: missing band file for {band}")
        bands[band] = _checked_grid(patch_id, BIGEARTHNET, band, _decode_tiff(found))
    meta_path = source_dir / f"{patch_id}_labels_metadata.json"
    if not meta_path.exists():
        raise BundleError(f"patch {patch_id}: missing {meta_path.name}")
    names = json.loads(meta_path.read_text(encoding="utf-8"))["labels"]
    try:
        labels = frozenset(spec.index_of(n) for n in names)
    except KeyError as exc:
        raise BundleError(f"patch {patch_id}: label {exc.args[0]}") from None
    return Patch(patch_id, BIGEARTHNET, bands, labels)


def import_eurosat_patch(source_file: str | os.PathLike) -> Patch:
    """Read a 13-band EuroSat MS GeoTIFF; the class comes from the parent directory name."""
    source_file = Path(source_file)
    patch_id = source_file.stem
    spec = task_spec(Task.EUROSAT10)
    class_name = source_file.parent.name
    try:
        label = spec.index_of(class_name)
    except KeyError:
        raise BundleError(f"patch {patch_id}: unknown class directory {class_name!r}") from None
    cube = np.asarray(_decode_tiff(source_file))
    if cube.ndim != 3 or len(EUROSAT_PLANES) not in (cube.shape[0], cube.shape[-1]):
        raise BundleError(f"patch {patch_id}: band count must be {len(EUROSAT_PLANES)}, got array of shape {cube.shape}")
    if cube.shape[-1] == len(EUROSAT_PLANES):
        cube = np.moveaxis(cube, -1, 0)
    bands = {}
    for name, plane in zip(EUROSAT_PLANES, cube):
        if name == "B10":
            continue
        band = BandId(name)
        bands[band] = _checked_grid(patch_id, EUROSAT, band, plane)
    return Patch(patch_id, EUROSAT, bands, frozenset({label}))


# ---- manifests ----

@dataclass(frozen=True)
class ManifestEntry:
    patch_id: str
    path: str  # relative to the manifest root


@dataclass(frozen=True)
class DatasetManifest:
    dataset: str
    class_names: tuple[str, ...]
    multi_label: bool
    entries: tuple[ManifestEntry, ...]
    root: Path = Path(".")

    def __post_init__(self):
        entries = tuple(sorted(self.entries, key=lambda e: e.patch_id))
        ids = [e.patch_id for e in entries]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate patch ids in manifest")
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "class_names", tuple(self.class_names))
        object.__setattr__(self, "root", Path(self.root))

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def patch_ids(self) -> list[str]:
        return [e.patch_id for e in self.entries]

    def bundle_path(self, entry: ManifestEntry) -> Path:
        return self.root / entry.path

    def load_patch(self, entry: ManifestEntry) -> Patch:
        return read_bundle(self.bundle_path(entry))

    def to_json(self) -> dict:
        return {
            "dataset": self.dataset,
            "class_names": list(self.class_names),
            "multi_label": self.multi_label,
            "patches": [{"id": e.patch_id, "path": e.path} for e in self.entries],
        }

    def save(self, path: str | os.PathLike) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_json(), indent=2) + "\n", encoding="utf-8")
        return path

    @classmethod
    def load(cls, path: str | os.PathLike) -> "DatasetManifest":
        path = Path(path)
        obj = json.loads(path.read_text(encoding="utf-8"))
        manifest = cls(
            dataset=obj["dataset"],
            class_names=tuple(obj["class_names"]),
            multi_label=bool(obj["multi_label"]),
            entries=tuple(ManifestEntry(p["id"], p["path"]) for p in obj["patches"]),
            root=path.parent,
        )
        expected = DATASET_TASK.get(manifest.dataset)
        if expected is not None:
            spec = task_spec(expected)
            if manifest.class_names != spec.class_names or manifest.multi_label != spec.multi_label:
                raise ValueError(f"{path}: class list does not match the {expected} task")
        missing = [e.path for e in manifest.entries if not manifest.bundle_path(e).is_dir()]
        if missing:
            raise FileNotFoundError(f"{path}: {len(missing)} bundle(s) missing, e.g. {missing[0]}")
        return manifest


def manifest_for(dataset: str, entries: Sequence[ManifestEntry], root: str | os.PathLike = ".") -> DatasetManifest:
    spec = task_spec(DATASET_TASK[dataset])
    return DatasetManifest(dataset, spec.class_names, spec.multi_label, tuple(entries), Path(root))


def sample_subset(manifest: DatasetManifest, n: int, seed: int) -> DatasetManifest:
    """Choose ``n`` patches by a SplitMix64-seeded shuffle; the result keeps patch-id order."""
    if not 1 <= n <= len(manifest):
        raise ValueError(f"subset size must be in 1..{len(manifest)}, got {n}")
    order = list(manifest.entries)
    SplitMix64(seed).shuffle(order)
    return replace(manifest, entries=tuple(order[:n]))


# ---- directory importers ----

@dataclass
class ImportResult:
    manifest: DatasetManifest
    manifest_path: Path
    failures: list[tuple[str, str]]


# BigEarthNet ships these lists next to the patch folders
CONTAMINATION_LISTS = ("patches_with_cloud_and_shadow.csv", "patches_with_seasonal_snow.csv")


def _read_name_list(path: Path) -> set[str]:
    with path.open(newline="", encoding="utf-8") as fh:
        return {row[0].strip() for row in csv.reader(fh) if row and row[0].strip()}


def find_sources(
    src: str | os.PathLike,
    dataset: str,
    split: str = "test",
    exclude_contaminated: bool = True,
) -> list[Path]:
    """Locate source patches under ``src``: patch folders (BigEarthNet) or ``<Class>/*.tif`` (EuroSat).

    For BigEarthNet, ``<split>.csv`` in ``src`` restricts the folders to that
    split and the cloud/snow lists remove contaminated patches. Either file is
    applied only when present; ``split="all"`` ignores split files.
    """
    src = Path(src)
    if dataset == EUROSAT:
        return sorted(p for p in src.glob("*/*") if p.suffix.lower() in (".tif", ".tiff"))
    if dataset != BIGEARTHNET:
        raise ValueError(f"unknown dataset kind {dataset!r}")
    folders = sorted(p for p in src.iterdir() if p.is_dir())
    split_file = src / f"{split}.csv"
    if split != "all" and split_file.exists():
        keep = _read_name_list(split_file)
        folders = [p for p in folders if p.name in keep]
    if exclude_contaminated:
        drop = set()
        for name in CONTAMINATION_LISTS:
            if (src / name).exists():
                drop |= _read_name_list(src / name)
        folders = [p for p in folders if p.name not in drop]
    return folders


def import_dataset(
    src,
    dst,
    dataset: str,
    skip_bad: bool = False,
    split: str = "test",
    exclude_contaminated: bool = True,
) -> ImportResult:
    """Convert every source patch under ``src`` into bundles under ``dst`` and write ``dst/manifest.json``.

    A bad patch raises :class:`BundleError` unless ``skip_bad`` is set, in which
    case it is logged and left out of the manifest.
    """
    dst = Path(dst)
    dst.mkdir(parents=True, exist_ok=True)
    importer = import_bigearthnet_patch if dataset == BIGEARTHNET else import_eurosat_patch
    entries, failures = [], []
    for source in find_sources(src, dataset, split, exclude_contaminated):
        try:
            patch = importer(source)
        except (BundleError, ValueError, OSError) as exc:
            if not skip_bad:
                raise BundleError(f"{source}: {exc}") from exc
            log.warning("skipping %s: %s", source, exc)
            failures.append((str(source), str(exc)))
            continue
        write_bundle(patch, dst / patch.id)
        entries.append(ManifestEntry(patch.id, patch.id))
    manifest = manifest_for(dataset, entries, dst)
    path = manifest.save(dst / "manifest.json")
    return ImportResult(manifest, path, failures)
