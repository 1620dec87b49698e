import numpy as np
import pytest
from hypothesis import given, strategies as st

from neurosoc.fixedpoint import (FixedPoint, FracBitsMismatchError, quantize,
                                 quantize_array, round_half_away, sat_add)


class TestQuantize:
    def test_one_at_q7(self):
        assert quantize(1.0, 7, 16).raw == 128

    def test_zero(self):
        assert quantize(0.0, 7, 8).raw == 0

    def test_saturates_at_int8_max(self):
        # plain integer check: 2.0 * 2**7 = 256 exceeds the int8 max 127
        assert quantize(2.0, 7, 8).raw == 127

    def test_saturates_negative(self):
        assert quantize(-2.0, 7, 8).raw == -128

    def test_rounds_half_away_from_zero(self):
        assert round_half_away(0.5) == 1
        assert round_half_away(-0.5) == -1
        assert round_half_away(2.5) == 3
        assert round_half_away(-2.5) == -3
        assert quantize(0.5, 0, 8).raw == 1
        assert quantize(-0.5, 0, 8).raw == -1

    def test_frac_must_be_below_total(self):
        with pytest.raises(ValueError):
            quantize(1.0, 8, 8)

    @given(st.floats(-0.9, 0.9, allow_nan=False), st.integers(0, 12))
    def test_roundoff_bound(self, x, frac_bits):
        fp = quantize(x, frac_bits, 24)
        assert abs(fp.value - x) <= 2.0 ** (-frac_bits - 1)

    @given(st.lists(st.floats(-3, 3, allow_nan=False), min_size=1, max_size=20),
           st.integers(0, 7))
    def test_array_matches_scalar(self, xs, frac_bits):
        raws = quantize_array(np.array(xs), frac_bits, 8)
        for x, raw in zip(xs, raws):
            assert raw == quantize(x, frac_bits, 8).raw


class TestSatAdd:
    def test_additive_inverse(self):
        a = FixedPoint(100, 7, 16)
        b = FixedPoint(-100, 7, 16)
        assert sat_add(a, b).raw == 0

    def test_saturation(self):
        # wide-integer oracle: 120 + 120 = 240, clamped to the int8 max
        a = FixedPoint(120, 7, 8)
        assert sat_add(a, a).raw == 127

    def test_small_values_exact(self):
        assert sat_add(FixedPoint(5, 7, 8), FixedPoint(7, 7, 8)).raw == 12

    def test_frac_mismatch_rejected(self):
        with pytest.raises(FracBitsMismatchError):
            sat_add(FixedPoint(1, 7, 8), FixedPoint(1, 6, 8))

    def test_widens_to_larger_operand(self):
        wide = sat_add(FixedPoint(120, 7, 8), FixedPoint(1000, 7, 16))
        assert wide.total_bits == 16 and wide.raw == 1120

    @given(st.integers(-128, 127), st.integers(-128, 127))
    def test_commutative(self, x, y):
        a, b = FixedPoint(x, 7, 8), FixedPoint(y, 7, 8)
        assert sat_add(a, b) == sat_add(b, a)

    @given(st.integers(1, 127))
    def test_saturation_idempotent(self, y):
        top = FixedPoint(127, 7, 8)
        assert sat_add(top, FixedPoint(y, 7, 8)) == top


class TestInvariants:
    def test_raw_range_enforced(self):
        with pytest.raises(ValueError):
            FixedPoint(128, 7, 8)
        with pytest.raises(ValueError):
            FixedPoint(-129, 7, 8)

    def test_value_scaling(self):
        assert FixedPoint(64, 7, 8).value == 0.5
        assert FixedPoint(-128, 7, 8).value == -1.0
