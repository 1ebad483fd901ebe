import json

import numpy as np
import pytest

from oracles import splitmix_subset

from conftest import build_manifest, random_patch, write_bigearthnet_source, write_eurosat_source

from msprompt.ingest import (
    BundleError,
    DatasetManifest,
    ManifestEntry,
    import_bigearthnet_patch,
    import_dataset,
    import_eurosat_patch,
    manifest_for,
    read_bundle,
    sample_subset,
    write_bundle,
)
from msprompt.prng import SplitMix64
from msprompt.raster import BIGEARTHNET, EUROSAT, BandGrid, BandId, Patch


def band_bytes(bundle_dir):
    meta = json.loads((bundle_dir / "patch.json").read_text())
    return {b["band_id"]: (bundle_dir / b["file"]).read_bytes() for b in meta["bands"]}


def test_bundle_round_trip_is_bit_identical(tmp_path, ben_patch):
    first = write_bundle(ben_patch, tmp_path / "a")
    back = read_bundle(first)
    assert back.id == ben_patch.id and back.labels == ben_patch.labels and back.dataset == BIGEARTHNET
    for band in BandId:
        assert back.bands[band].values.tobytes() == ben_patch.bands[band].values.tobytes()
    second = write_bundle(back, tmp_path / "b")
    assert band_bytes(first) == band_bytes(second)
    assert (first / "patch.json").read_bytes() == (second / "patch.json").read_bytes()


def test_bundle_layout(tmp_path, ben_patch):
    path = write_bundle(ben_patch, tmp_path / "p")
    meta = json.loads((path / "patch.json").read_text())
    assert meta["labels"] == [6, 37]
    b02 = next(b for b in meta["bands"] if b["band_id"] == "B02")
    assert (b02["width"], b02["height"], b02["resolution_m"], b02["dtype"]) == (120, 120, 10, "u16")
    raw = (path / b02["file"]).read_bytes()
    assert len(raw) == 120 * 120 * 2
    assert np.array_equal(np.frombuffer(raw, "<u2").reshape(120, 120), ben_patch.bands[BandId.B02].values)


def test_float_bundle_round_trip(tmp_path):
    bands = {b: BandGrid(np.full((4, 4), 0.25), b.resolution, "f32") for b in BandId}
    patch = Patch("f", "synthetic", bands, frozenset({1}))
    back = read_bundle(write_bundle(patch, tmp_path / "f"))
    assert back.bands[BandId.B01].storage_dtype == "f32"
    assert back.bands[BandId.B01].values[0, 0] == np.float32(0.25)


def test_u16_refuses_fractional(tmp_path):
    bands = {BandId.B02: BandGrid(np.full((2, 2), 1.5), 10, "u16")}
    with pytest.raises(BundleError, match="u16"):
        write_bundle(Patch("x", "synthetic", bands), tmp_path / "x")


def test_bundle_size_check(tmp_path, ben_patch):
    path = write_bundle(ben_patch, tmp_path / "p")
    (path / "B03.bin").write_bytes(b"\0" * 10)
    with pytest.raises(BundleError, match="B03 file has 10 bytes"):
        read_bundle(path)


def test_bundle_duplicate_band(tmp_path, ben_patch):
    path = write_bundle(ben_patch, tmp_path / "p")
    meta = json.loads((path / "patch.json").read_text())
    meta["bands"].append(meta["bands"][0])
    (path / "patch.json").write_text(json.dumps(meta))
    with pytest.raises(BundleError, match="duplicate"):
        read_bundle(path)


def test_import_bigearthnet(tmp_path):
    folder = write_bigearthnet_source(tmp_path, "S2A_MSIL2A_x_1_2", labels=["Sea and ocean"])
    patch = import_bigearthnet_patch(folder)
    assert patch.labels == {37}
    assert patch.id == "S2A_MSIL2A_x_1_2"
    assert patch.bands[BandId.B05].values.shape == (60, 60)
    assert patch.bands[BandId.B09].values.shape == (20, 20)


def test_import_bigearthnet_bad_size(tmp_path):
    folder = write_bigearthnet_source(tmp_path, "p", sizes={BandId.B02: (120, 119)})
    with pytest.raises(BundleError, match="B02 is 119x120, expected 120x120"):
        import_bigearthnet_patch(folder)


def test_import_bigearthnet_missing_band_and_label(tmp_path):
    folder = write_bigearthnet_source(tmp_path, "p")
    (folder / "p_B8A.tif").unlink()
    with pytest.raises(BundleError, match="B8A"):
        import_bigearthnet_patch(folder)
    folder = write_bigearthnet_source(tmp_path, "q", labels=["Sea and Ocean"])
    with pytest.raises(BundleError, match="Sea and Ocean"):
        import_bigearthnet_patch(folder)


@pytest.mark.parametrize("class_name,label", [("River", 9), ("Forest", 2)])
def test_import_eurosat(tmp_path, class_name, label):
    path, cube = write_eurosat_source(tmp_path, class_name, f"{class_name}_1")
    patch = import_eurosat_patch(path)
    assert patch.labels == {label}
    assert len(patch.bands) == 12
    # plane 10 (B10) is dropped, so B11 is source plane 11
    assert np.array_equal(patch.bands[BandId.B11].values, cube[11])
    assert np.array_equal(patch.bands[BandId.B8A].values, cube[8])


def test_import_eurosat_channels_last(tmp_path):
    path, cube = write_eurosat_source(tmp_path, "River", "r", channels_last=True)
    patch = import_eurosat_patch(path)
    assert np.array_equal(patch.bands[BandId.B12].values, cube[..., 12])


def test_import_eurosat_band_count(tmp_path):
    path, _ = write_eurosat_source(tmp_path, "River", "r", planes=12)
    with pytest.raises(BundleError, match="band count"):
        import_eurosat_patch(path)


def test_import_eurosat_unknown_class(tmp_path):
    path, _ = write_eurosat_source(tmp_path, "Glacier", "g")
    with pytest.raises(BundleError, match="Glacier"):
        import_eurosat_patch(path)


def test_import_dataset_split_and_contamination(tmp_path):
    src = tmp_path / "src"
    for i, name in enumerate(["a", "b", "c", "d"]):
        write_bigearthnet_source(src, name, seed=i)
    (src / "test.csv").write_text("a\nb\nc\n")
    (src / "patches_with_seasonal_snow.csv").write_text("b\n")
    assert import_dataset(src, tmp_path / "d1", BIGEARTHNET).manifest.patch_ids == ["a", "c"]
    kept = import_dataset(src, tmp_path / "d2", BIGEARTHNET, exclude_contaminated=False)
    assert kept.manifest.patch_ids == ["a", "b", "c"]
    everything = import_dataset(src, tmp_path / "d3", BIGEARTHNET, split="all", exclude_contaminated=False)
    assert everything.manifest.patch_ids == ["a", "b", "c", "d"]


def test_manifest_sorted_and_validated(tmp_path):
    path = build_manifest(tmp_path, n=5)
    m = DatasetManifest.load(path)
    assert m.patch_ids == sorted(m.patch_ids)
    assert len(m) == 5
    obj = json.loads(path.read_text())
    obj["class_names"][0] = "Agroforestry"
    path.write_text(json.dumps(obj))
    with pytest.raises(ValueError, match="class list"):
        DatasetManifest.load(path)


def test_manifest_missing_bundle(tmp_path):
    path = build_manifest(tmp_path, n=3)
    import shutil

    shutil.rmtree(tmp_path / "patch_001")
    with pytest.raises(FileNotFoundError, match="patch_001"):
        DatasetManifest.load(path)


def test_manifest_orders_entries():
    m = manifest_for(EUROSAT, [ManifestEntry("z", "z"), ManifestEntry("a", "a")])
    assert m.patch_ids == ["a", "z"]
    with pytest.raises(ValueError, match="duplicate"):
        manifest_for(EUROSAT, [ManifestEntry("a", "a"), ManifestEntry("a", "b")])


def big_manifest(n=100):
    return manifest_for(BIGEARTHNET, [ManifestEntry(f"p{i:03d}", f"p{i:03d}") for i in range(n)])


def test_sample_subset():
    m = big_manifest()
    full = sample_subset(m, 100, 7)
    assert sorted(full.patch_ids) == m.patch_ids
    assert sample_subset(m, 10, 42).patch_ids == sample_subset(m, 10, 42).patch_ids
    assert sample_subset(m, 10, 1).patch_ids != sample_subset(m, 10, 2).patch_ids
    for n in (0, 101):
        with pytest.raises(ValueError):
            sample_subset(m, n, 1)


@pytest.mark.parametrize("n,seed", [(5, 1), (10, 2), (33, 2**64 - 1), (100, 0)])
def test_sample_subset_matches_oracle(n, seed):
    m = big_manifest()
    assert sample_subset(m, n, seed).patch_ids == splitmix_subset(m.patch_ids, n, seed)


def test_sample_subset_frozen_selection():
    assert sample_subset(big_manifest(), 5, 1).patch_ids == ["p003", "p028", "p032", "p035", "p042"]


def test_splitmix64_reference_vectors():
    g = SplitMix64(1234567)
    assert [g.next() for _ in range(5)] == [
        6457827717110365317, 3203168211198807973, 9817491932198370423,
        4593380528125082431, 16408922859458223821,
    ]
    assert SplitMix64(0).next() == 0xE220A8397B1DCDAF


def test_below_is_in_range():
    g = SplitMix64(99)
    draws = [g.below(7) for _ in range(2000)]
    assert set(draws) == set(range(7))
    with pytest.raises(ValueError):
        g.below(0)


def test_random_patch_helper_matches_dataset():
    assert random_patch("e", EUROSAT, (3,)).bands[BandId.B01].values.shape == (64, 64)
