import hashlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp
from PIL import Image

from conftest import FIXTURES

from msprompt.ingest import read_bundle
from msprompt.png import chunk_types
from msprompt.products import (
    DEFAULT_SELECTION,
    NDMI_COLORMAP,
    NDVI_COLORMAP,
    NDWI_COLORMAP,
    PRODUCTS,
    Colormap,
    Composite,
    NormalizedDifferenceIndex,
    ProductId,
    apply_colormap,
    compose_rgb,
    normalized_difference,
    parse_selection,
    render_products,
)
from msprompt.raster import PERCENTILE, BandGrid, BandId, ContractViolation


def arr(*values):
    return np.array([values], dtype=np.float32)


class TestNormalizedDifference:
    def test_examples(self):
        assert normalized_difference(arr(0.8), arr(0.2))[0, 0] == pytest.approx(0.6, abs=1e-7)
        assert normalized_difference(arr(0.3), arr(0.3))[0, 0] == 0.0
        assert normalized_difference(arr(0.0), arr(0.0))[0, 0] == 0.0

    def test_dimension_mismatch_names_shapes(self):
        with pytest.raises(ContractViolation, match="plus 3x2.*minus 2x2"):
            normalized_difference(np.zeros((2, 3), np.float32), np.zeros((2, 2), np.float32))

    @given(
        hnp.arrays(np.float32, (6, 7), elements=st.floats(0, 65535, width=32)),
        hnp.arrays(np.float32, (6, 7), elements=st.floats(0, 65535, width=32)),
    )
    def test_antisymmetric_and_bounded(self, a, b):
        ab = normalized_difference(a, b)
        ba = normalized_difference(b, a)
        assert np.array_equal(ab, -ba)
        assert ab.min() >= -1.0 and ab.max() <= 1.0


class TestColormap:
    def test_validation(self):
        with pytest.raises(ValueError):
            Colormap(((1, 0, 0),), (-1, 1))
        with pytest.raises(ValueError):
            Colormap(((1, 0, 0), (0, 0, 2)), (-1, 1))
        with pytest.raises(ValueError):
            Colormap(((1, 0, 0), (0, 0, 1)), (1, 1))

    @pytest.mark.parametrize("value,rgb", [
        (0.8, (0, 0, 255)),
        (-0.8, (255, 255, 255)),
        (0.0, (255, 255, 255)),
        (0.4, (128, 128, 255)),
        (5.0, (0, 0, 255)),
        (-5.0, (255, 255, 255)),
    ])
    def test_ndwi_values(self, value, rgb):
        img = apply_colormap(arr(value), NDWI_COLORMAP)
        assert tuple(img.pixels[0, 0]) == rgb

    def test_ndvi_and_ndmi_anchor_colors(self):
        img = apply_colormap(arr(-1.0, 0.0, 1.0), NDVI_COLORMAP)
        assert img.pixels[0].tolist() == [[255, 0, 0], [255, 255, 0], [0, 255, 0]]
        img = apply_colormap(arr(-1.0, 0.0, 1.0), NDMI_COLORMAP)
        assert img.pixels[0].tolist() == [[255, 0, 0], [0, 255, 0], [0, 0, 255]]

    @settings(max_examples=200)
    @given(st.lists(st.floats(-1.5, 1.5, width=32), min_size=2, max_size=40),
           st.sampled_from([NDVI_COLORMAP, NDWI_COLORMAP, NDMI_COLORMAP]))
    def test_monotone_per_channel_within_segments(self, values, cmap):
        lo, hi = cmap.domain
        n = len(cmap.control_points)
        edges = np.linspace(lo, hi, n)
        v = np.sort(np.array(values, dtype=np.float32))
        px = apply_colormap(v.reshape(1, -1), cmap).pixels[0].astype(int)
        seg = np.clip(np.searchsorted(edges, v.astype(np.float64), side="right") - 1, 0, n - 2)
        for s in range(n - 1):
            idx = np.nonzero(seg == s)[0]
            if len(idx) < 2:
                continue
            for c in range(3):
                d = np.diff(px[idx, c])
                direction = np.sign(cmap.control_points[s + 1][c] - cmap.control_points[s][c])
                assert np.all(d * direction >= 0)
                if direction == 0:
                    assert np.all(d == 0)


class TestComposite:
    def test_constant_bands_are_black(self):
        g = BandGrid(np.full((4, 4), 9.0), 10)
        img = compose_rgb(g, g, g)
        assert img.pixels.max() == 0

    def test_ramp_red_channel(self):
        ramp = BandGrid(np.arange(256, dtype=np.float32).reshape(16, 16), 10)
        flat = BandGrid(np.full((16, 16), 3.0), 10)
        img = compose_rgb(ramp, flat, flat)
        assert img.pixels[..., 0].min() == 0 and img.pixels[..., 0].max() == 255
        assert np.array_equal(img.pixels[..., 0].ravel(), np.arange(256))
        assert img.pixels[..., 1:].max() == 0

    def test_mismatch(self):
        with pytest.raises(ContractViolation, match="dimensions differ"):
            compose_rgb(BandGrid(np.zeros((2, 2)), 10), BandGrid(np.zeros((2, 2)), 10), BandGrid(np.zeros((3, 2)), 10))


def test_catalog_wiring():
    assert PRODUCTS[ProductId.TRUE_COLOR].kind == Composite(BandId.B04, BandId.B03, BandId.B02)
    assert PRODUCTS[ProductId.FALSE_COLOR].kind == Composite(BandId.B08, BandId.B04, BandId.B03)
    assert PRODUCTS[ProductId.NDVI].kind == NormalizedDifferenceIndex(BandId.B08, BandId.B04, NDVI_COLORMAP)
    assert PRODUCTS[ProductId.NDWI].kind == NormalizedDifferenceIndex(BandId.B03, BandId.B08, NDWI_COLORMAP)
    assert PRODUCTS[ProductId.NDMI_B11].kind == NormalizedDifferenceIndex(BandId.B8A, BandId.B11, NDMI_COLORMAP)
    assert PRODUCTS[ProductId.NDMI_B12].kind == NormalizedDifferenceIndex(BandId.B8A, BandId.B12, NDMI_COLORMAP)
    assert NDWI_COLORMAP.control_points == ((1, 1, 1), (1, 1, 1), (0, 0, 1))
    assert NDWI_COLORMAP.domain == (-0.8, 0.8)


def test_render_default_sizes(ben_patch):
    imgs = render_products(ben_patch)
    assert [i.product_id for i in imgs] == list(DEFAULT_SELECTION)
    assert [(i.width, i.height) for i in imgs] == [(120, 120)] * 4 + [(60, 60)] * 2


@pytest.mark.parametrize("selection,count", [([ProductId.TRUE_COLOR], 1), (["TrueColor", "NDVI"], 2)])
def test_render_ablation_arms(ben_patch, selection, count):
    imgs = render_products(ben_patch, selection)
    assert [str(i.product_id) for i in imgs] == [str(s) for s in selection]
    assert len(imgs) == count


def test_render_order_follows_selection(ben_patch):
    sel = [ProductId.NDMI_B12, ProductId.TRUE_COLOR]
    assert [i.product_id for i in render_products(ben_patch, sel)] == sel


def test_render_missing_band(ben_patch):
    from msprompt.raster import Patch

    bands = {k: v for k, v in ben_patch.bands.items() if k != BandId.B11}
    patch = Patch("no_b11", "bigearthnet", bands)
    with pytest.raises(ContractViolation, match="NDMI_B11 needs band B11"):
        render_products(patch)


def test_parse_selection():
    assert parse_selection("all") == DEFAULT_SELECTION
    assert parse_selection("TrueColor, NDVI") == (ProductId.TRUE_COLOR, ProductId.NDVI)
    with pytest.raises(ValueError, match="known products"):
        parse_selection("TrueColor,SAVI")
    with pytest.raises(ValueError, match="duplicate"):
        parse_selection("NDVI,NDVI")


def test_golden_pngs_byte_identical():
    patch = read_bundle(FIXTURES / "golden_patch")
    for img in render_products(patch):
        golden = (FIXTURES / "golden_png" / f"{img.product_id}.png").read_bytes()
        assert img.to_png() == golden, img.product_id


def test_percentile_normalization_changes_composites_only():
    patch = read_bundle(FIXTURES / "golden_patch")
    a = render_products(patch)
    b = render_products(patch, method=PERCENTILE)
    assert a[0] != b[0]
    assert a[2] == b[2]  # indices ignore band normalization


def test_rendering_is_deterministic(ben_patch):
    first = [hashlib.sha256(i.to_png()).hexdigest() for i in render_products(ben_patch)]
    second = [hashlib.sha256(i.to_png()).hexdigest() for i in render_products(ben_patch)]
    assert first == second


def test_png_decodes_to_pixels(ben_patch, tmp_path):
    img = render_products(ben_patch, ["FalseColor"])[0]
    path = tmp_path / "fc.png"
    path.write_bytes(img.to_png())
    with Image.open(path) as im:
        assert im.mode == "RGB" and im.size == (120, 120)
        assert np.array_equal(np.asarray(im), img.pixels)
    assert chunk_types(img.to_png()) == [b"IHDR", b"IDAT", b"IEND"]
