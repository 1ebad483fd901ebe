"""Compiled and numpy kernels must agree bit for bit."""

import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from msprompt import kernels

pytestmark = pytest.mark.skipif(
    len(kernels.available()) < 2, reason="compiled kernels not built; parity needs both backends"
)

CMAPS = [
    (((1, 0, 0), (1, 1, 0), (0, 1, 0)), -1.0, 1.0),
    (((1, 1, 1), (1, 1, 1), (0, 0, 1)), -0.8, 0.8),
    (((0.2, 0.3, 0.9), (0.7, 0.1, 0.05), (0.0, 1.0, 0.5), (0.33, 0.66, 0.99)), -0.5, 0.25),
]

grids = hnp.arrays(
    np.float32,
    st.tuples(st.integers(1, 16), st.integers(1, 16)),
    elements=st.floats(0, 65535, width=32),
)


@pytest.fixture(scope="module")
def both():
    return kernels.load("cython"), kernels.load("python")


def same_bits(a, b):
    return a.dtype == b.dtype and a.shape == b.shape and a.tobytes() == b.tobytes()


def test_selected_backend_is_compiled():
    if os.environ.get("MSPROMPT_PURE_PYTHON", "") not in ("", "0"):
        pytest.skip("fallback forced by environment")
    assert kernels.BACKEND == "cython"


def test_load_rejects_unknown():
    with pytest.raises(ValueError):
        kernels.load("fortran")


@settings(max_examples=300)
@given(grids, grids)
def test_normalized_difference_parity(both, a, b):
    h, w = min(a.shape[0], b.shape[0]), min(a.shape[1], b.shape[1])
    a, b = np.ascontiguousarray(a[:h, :w]), np.ascontiguousarray(b[:h, :w])
    c, p = both
    assert same_bits(c.normalized_difference(a, b), p.normalized_difference(a, b))


@settings(max_examples=300)
@given(grids, st.floats(0, 70000), st.floats(0, 70000))
def test_rescale_clip_parity(both, a, lo, hi):
    c, p = both
    lo, hi = np.float32(lo), np.float32(hi)
    assert same_bits(c.rescale_clip(a, lo, hi), p.rescale_clip(a, lo, hi))


@settings(max_examples=300)
@given(hnp.arrays(np.float32, st.tuples(st.integers(1, 16), st.integers(1, 16)), elements=st.floats(0, 1, width=32)))
def test_to_byte_parity(both, a):
    c, p = both
    assert same_bits(c.to_byte(a), p.to_byte(a))


@settings(max_examples=300)
@given(
    hnp.arrays(np.float32, st.tuples(st.integers(1, 16), st.integers(1, 16)), elements=st.floats(-2, 2, width=32)),
    st.sampled_from(CMAPS),
)
def test_colormap_parity(both, a, cmap):
    c, p = both
    points, lo, hi = cmap
    assert same_bits(c.colormap(a, points, lo, hi), p.colormap(a, points, lo, hi))


def test_parity_on_large_random_grid(both):
    rng = np.random.default_rng(7)
    a = rng.uniform(0, 65535, (500, 500)).astype(np.float32)
    b = rng.uniform(0, 65535, (500, 500)).astype(np.float32)
    a[::37] = 0
    b[::37] = 0
    c, p = both
    nd_c, nd_p = c.normalized_difference(a, b), p.normalized_difference(a, b)
    assert same_bits(nd_c, nd_p)
    for points, lo, hi in CMAPS:
        assert same_bits(c.colormap(nd_c, points, lo, hi), p.colormap(nd_p, points, lo, hi))
