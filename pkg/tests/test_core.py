import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from camforge import ActivationMap, PixelIndex, is_valid, normalize, top_k_mask
from camforge.core import pixel_count, top_k_flat
from camforge.errors import InvalidK, NonFiniteInput


def brute_force_top_k(values, count):
    """Independent oracle: full sort by (-value, flat index)."""
    flat = values.ravel()
    order = sorted(range(flat.size), key=lambda i: (-flat[i], i))
    w = values.shape[1]
    return {PixelIndex(i // w, i % w) for i in order[:count]}


class TestNormalize:
    def test_affine_example(self):
        m = normalize(ActivationMap([[0, 2], [4, 8]]))
        np.testing.assert_allclose(m.values, [[0, 0.25], [0.5, 1.0]])

    def test_constant_map_collapses_to_zero(self):
        m = normalize(ActivationMap([[5, 5], [5, 5]]))
        assert not m.values.any()

    def test_random_map_hits_bounds(self, rng):
        m = normalize(ActivationMap(rng.normal(size=(8, 8))))
        # independent scan of the output
        lo = min(v for row in m.values for v in row)
        hi = max(v for row in m.values for v in row)
        assert lo == 0.0 and hi == 1.0

    def test_rejects_non_finite(self):
        with pytest.raises(NonFiniteInput):
            normalize(ActivationMap([[0.0, np.nan]]))
        with pytest.raises(NonFiniteInput):
            normalize(ActivationMap([[0.0, np.inf]]))

    @given(arrays(np.float64, (5, 7), elements=st.floats(-100, 100)))
    def test_idempotent(self, vals):
        once = normalize(ActivationMap(vals))
        twice = normalize(once)
        np.testing.assert_array_equal(once.values, twice.values)


class TestIsValid:
    def test_nan_invalid(self):
        assert not is_valid(ActivationMap([[0.5, np.nan]]))

    def test_all_zero_invalid(self):
        assert not is_valid(ActivationMap(np.zeros((4, 4))))

    def test_positive_map_valid(self, rng):
        assert is_valid(normalize(ActivationMap(rng.random((7, 7)))))


class TestTopKMask:
    def test_two_largest_of_four(self):
        m = ActivationMap([[0.9, 0.1], [0.5, 0.2]])
        assert top_k_mask(m, 50) == {PixelIndex(0, 0), PixelIndex(1, 0)}

    def test_full_retention(self, rng):
        m = ActivationMap(rng.random((6, 5)))
        assert len(top_k_mask(m, 100)) == 30

    def test_matches_sort_oracle(self, rng):
        m = ActivationMap(rng.random((16, 16)))
        got = top_k_mask(m, 15)
        assert len(got) == 39  # ceil(0.15 * 256)
        assert got == brute_force_top_k(m.values, 39)

    def test_invalid_k(self):
        m = ActivationMap([[1.0]])
        for k in (0, -5, 100.5):
            with pytest.raises(InvalidK):
                top_k_mask(m, k)

    def test_tie_break_row_major(self):
        m = ActivationMap(np.ones((3, 3)))
        assert top_k_mask(m, 25) == {PixelIndex(0, 0), PixelIndex(0, 1), PixelIndex(0, 2)}

    @settings(max_examples=50)
    @given(
        arrays(np.float64, (6, 6), elements=st.floats(0, 1)),
        st.floats(0.1, 100),
        st.floats(0.1, 100),
    )
    def test_monotone_in_k(self, vals, k1, k2):
        if k1 > k2:
            k1, k2 = k2, k1
        m = ActivationMap(vals)
        assert top_k_mask(m, k1) <= top_k_mask(m, k2)

    @given(arrays(np.float64, (4, 9), elements=st.floats(0, 1)), st.floats(0.01, 100))
    def test_exact_count_even_for_constant_maps(self, vals, k):
        m = ActivationMap(vals)
        assert len(top_k_mask(m, k)) == math.ceil(k / 100 * 36)


def test_top_k_flat_deterministic_under_ties():
    vals = np.zeros((2, 3))
    np.testing.assert_array_equal(top_k_flat(vals, 4), [0, 1, 2, 3])


def test_pixel_count_minimum_one():
    assert pixel_count(0.001, 16, 16) == 1
