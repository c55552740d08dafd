"""Direction-of-arrival likelihood coding tests.

Expected values are computed from the closed form exp(-d^2 / (2 sigma^2))
with the circular distance evaluated by hand, not by calling the module.
"""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slc.coding import (
    DEFAULT_SIGMA_DEG,
    NUM_DOA,
    circular_distance_deg,
    decode_doa,
    encode_doa,
    encode_event,
)
from slc.errors import ValidationError


class TestCircularDistance:
    def test_hand_cases(self):
        assert circular_distance_deg(10, 10) == 0
        assert circular_distance_deg(10, 13) == 3
        assert circular_distance_deg(1, 359) == 2
        assert circular_distance_deg(359, 1) == 2
        assert circular_distance_deg(90, 270) == 180

    @given(st.integers(1, 360), st.integers(1, 360))
    @settings(max_examples=200, deadline=None)
    def test_metric_properties(self, a, b):
        d = circular_distance_deg(a, b)
        assert 0 <= d <= 180
        assert d == circular_distance_deg(b, a)
        assert (d == 0) == (a == b)


class TestEncodeDoa:
    def test_shape_and_range(self):
        code = encode_doa(90)
        assert code.shape == (NUM_DOA,)
        assert np.all(code > 0.0)
        assert np.all(code <= 1.0)

    def test_truth_bin_is_exactly_one(self):
        for truth in (1, 90, 181, 360):
            assert encode_doa(truth)[truth - 1] == 1.0

    def test_one_sigma_bins_hit_inverse_e(self):
        # kernel is exp(-d^2 / sigma^2), so bins exactly sigma away decode to 1/e
        sigma = DEFAULT_SIGMA_DEG
        code = encode_doa(100, sigma_deg=sigma)
        for bin_deg in (100 - sigma, 100 + sigma):
            assert abs(code[int(bin_deg) - 1] - math.exp(-1.0)) < 1e-12

    def test_wraparound_distance(self):
        # truth 1: bin for 359 degrees sits 2 degrees away around the circle
        code = encode_doa(1)
        expected = math.exp(-(2.0**2) / (DEFAULT_SIGMA_DEG**2))
        assert abs(code[358] - expected) < 1e-15
        np.testing.assert_allclose(code[358], code[2])  # 359 and 3 both 2 deg away

    def test_symmetry_about_truth(self):
        code = encode_doa(180)
        for offset in range(1, 90):
            np.testing.assert_allclose(code[179 - offset], code[179 + offset])

    def test_sum_shift_invariant(self):
        sums = [encode_doa(t).sum() for t in range(1, 361)]
        assert max(sums) - min(sums) < 1e-9

    def test_bad_truth_rejected(self):
        for truth in (0, 361, -5):
            with pytest.raises(ValidationError):
                encode_doa(truth)

    def test_bad_sigma_rejected(self):
        with pytest.raises(ValidationError):
            encode_doa(10, sigma_deg=0.0)
        with pytest.raises(ValidationError):
            encode_doa(10, sigma_deg=-1.0)


class TestDecodeDoa:
    def test_round_trip_identity_exhaustive(self):
        for truth in range(1, 361):
            assert decode_doa(encode_doa(truth)) == truth

    def test_tie_breaks_to_lowest_index(self):
        posterior = np.zeros(NUM_DOA)
        posterior[9] = 0.7
        posterior[199] = 0.7
        assert decode_doa(posterior) == 10

    @given(st.integers(1, 360), st.floats(0.1, 50.0), st.floats(-3.0, 3.0))
    @settings(max_examples=100, deadline=None)
    def test_scale_and_shift_invariance(self, truth, scale, shift):
        # decode depends only on the argmax, so monotone maps leave it alone
        code = encode_doa(truth)
        assert decode_doa(code * scale + shift) == truth

    def test_monotone_transform_invariance(self):
        code = encode_doa(222)
        assert decode_doa(np.exp(code)) == 222
        assert decode_doa(code**3) == 222

    def test_wrong_length_rejected(self):
        with pytest.raises(ValidationError):
            decode_doa(np.zeros(359))


class TestEncodeEvent:
    def test_one_hot(self):
        vec = encode_event(3, 10)
        assert vec.shape == (10,)
        assert vec[3] == 1.0
        assert vec.sum() == 1.0

    def test_first_and_last_class(self):
        np.testing.assert_array_equal(encode_event(0, 1), [1.0])
        assert encode_event(9, 10)[9] == 1.0

    def test_out_of_range_rejected(self):
        with pytest.raises(ValidationError):
            encode_event(10, 10)
        with pytest.raises(ValidationError):
            encode_event(-1, 10)
        with pytest.raises(ValidationError):
            encode_event(0, 0)
