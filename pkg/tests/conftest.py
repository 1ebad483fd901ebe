import sys
from pathlib import Path

import numpy as np
import pytest

from msprompt import kernels
from msprompt.ingest import ManifestEntry, manifest_for, write_bundle
from msprompt.raster import BIGEARTHNET, EUROSAT, BandGrid, BandId, Patch

sys.path.insert(0, str(Path(__file__).parent))

FIXTURES = Path(__file__).parent / "fixtures"
BEN_SIDE = {10: 120, 20: 60, 60: 20}


def random_patch(patch_id, dataset=BIGEARTHNET, labels=(6,), seed=0):
    rng = np.random.default_rng(seed)
    bands = {}
    for band in BandId:
        side = BEN_SIDE[band.resolution] if dataset == BIGEARTHNET else 64
        bands[band] = BandGrid(rng.integers(0, 10000, (side, side)), band.resolution, "u16")
    return Patch(patch_id, dataset, bands, frozenset(labels))


def build_manifest(root, n=20, dataset=BIGEARTHNET, seed=0):
    """Write ``n`` random bundles under ``root`` and return the saved manifest path."""
    rng = np.random.default_rng(seed)
    n_classes = 43 if dataset == BIGEARTHNET else 10
    entries = []
    for i in range(n):
        if dataset == BIGEARTHNET:
            k = int(rng.integers(1, 4))
            labels = rng.choice(np.arange(1, n_classes + 1), size=k, replace=False).tolist()
        else:
            labels = [int(rng.integers(1, n_classes + 1))]
        pid = f"patch_{i:03d}"
        write_bundle(random_patch(pid, dataset, labels, seed=seed * 1000 + i), Path(root) / pid)
        entries.append(ManifestEntry(pid, pid))
    return manifest_for(dataset, entries, root).save(Path(root) / "manifest.json")


@pytest.fixture(params=kernels.available())
def kernel_impl(request):
    return kernels.load(request.param)


@pytest.fixture
def ben_patch():
    return random_patch("S2A_fixture", BIGEARTHNET, (6, 37))


@pytest.fixture
def ben_manifest(tmp_path):
    return build_manifest(tmp_path / "ben", n=20)


@pytest.fixture
def eurosat_manifest(tmp_path):
    return build_manifest(tmp_path / "eurosat", n=10, dataset=EUROSAT)


def write_bigearthnet_source(root, name, labels=("Sea and ocean",), seed=0, sizes=None):
    """Create a BigEarthNet-S2 style folder of single-band TIFFs plus label metadata."""
    import json

    import tifffile

    rng = np.random.default_rng(seed)
    folder = Path(root) / name
    folder.mkdir(parents=True, exist_ok=True)
    for band in BandId:
        shape = (sizes or {}).get(band, (BEN_SIDE[band.resolution],) * 2)
        tifffile.imwrite(folder / f"{name}_{band}.tif", rng.integers(0, 10000, shape, dtype=np.uint16))
    (folder / f"{name}_labels_metadata.json").write_text(json.dumps({"labels": list(labels)}))
    return folder


def write_eurosat_source(root, class_name, name, planes=13, seed=0, channels_last=False):
    import tifffile

    rng = np.random.default_rng(seed)
    cube = rng.integers(0, 10000, (planes, 64, 64), dtype=np.uint16)
    if channels_last:
        cube = np.moveaxis(cube, 0, -1)
    path = Path(root) / class_name / f"{name}.tif"
    path.parent.mkdir(parents=True, exist_ok=True)
    tifffile.imwrite(path, cube)
    return path, cube
