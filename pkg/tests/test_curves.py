"""
Unit tests for the step-curve module.
Tests evaluation, generalized inversion, settlement and delta features.
"""

import numpy as np
import pytest

from pricedress.core.curves import Side, StepCurve, delta_features, evaluate, inverse, settle
from pricedress.core.exceptions import CurveValidationError, DisjointDomainsError, MalformedInputError


@pytest.mark.unit
class TestStepCurveValidation:
    """Invariants enforced at construction"""

    def test_needs_two_breakpoints(self):
        with pytest.raises(CurveValidationError):
            StepCurve.from_points(Side.ASK, [(0, 10)])

    def test_volumes_strictly_increasing(self):
        with pytest.raises(CurveValidationError) as info:
            StepCurve.from_points(Side.ASK, [(0, 10), (100, 20), (100, 30)])
        assert info.value.row == 2
        assert "row=2" in str(info.value)

    def test_price_range_enforced(self):
        with pytest.raises(CurveValidationError):
            StepCurve.from_points(Side.ASK, [(0, 10), (100, 3500)])

    def test_price_range_override(self):
        curve = StepCurve.from_points(Side.ASK, [(0, 10), (100, 3500)], enforce_price_range=False)
        assert curve.max_price == 3500

    def test_ask_must_be_nondecreasing(self):
        with pytest.raises(CurveValidationError, match="nondecreasing"):
            StepCurve.from_points(Side.ASK, [(0, 20), (100, 10)])

    def test_bid_must_be_nonincreasing(self):
        with pytest.raises(CurveValidationError, match="nonincreasing"):
            StepCurve.from_points(Side.BID, [(0, 10), (100, 20)])

    def test_negative_volume_rejected(self):
        with pytest.raises(CurveValidationError):
            StepCurve.from_points(Side.ASK, [(-1, 10), (100, 20)])

    def test_domain_end_below_last_breakpoint(self):
        with pytest.raises(CurveValidationError):
            StepCurve.from_points(Side.ASK, [(0, 10), (100, 20)], domain_end=50)

    def test_arrays_are_read_only(self, toy_ask):
        with pytest.raises(ValueError):
            toy_ask.prices[0] = 0.0

    def test_domain_defaults_to_last_breakpoint(self):
        curve = StepCurve.from_points("ASK", [(5, 10), (100, 20)])
        assert curve.side is Side.ASK
        assert curve.volume_start == 5
        assert curve.domain_end == 100

    def test_price_runs_merge_equal_levels(self):
        curve = StepCurve.from_points(Side.ASK, [(0, 10), (50, 10), (100, 20), (150, 20)])
        starts, levels = curve.price_runs()
        np.testing.assert_array_equal(starts, [0, 100])
        np.testing.assert_array_equal(levels, [10, 20])


@pytest.mark.unit
class TestEvaluate:
    """Right-continuous clamped evaluation"""

    def test_inside_step(self, toy_ask):
        assert evaluate(toy_ask, 150) == 20

    def test_right_continuous_at_breakpoint(self, toy_ask):
        assert evaluate(toy_ask, 100) == 20

    def test_left_endpoint(self, toy_ask):
        assert evaluate(toy_ask, 0) == 10

    def test_clamped_outside_domain(self, toy_ask):
        assert evaluate(toy_ask, -10) == 10
        assert evaluate(toy_ask, 1e6) == 100

    def test_vectorized(self, toy_ask):
        np.testing.assert_array_equal(evaluate(toy_ask, [0, 99.9, 100, 250]), [10, 10, 20, 100])

    def test_call_alias(self, toy_ask):
        assert toy_ask(199.99) == 20

    def test_nan_rejected(self, toy_ask):
        with pytest.raises(MalformedInputError):
            evaluate(toy_ask, float("nan"))

    @pytest.mark.parametrize("side", [Side.ASK, Side.BID])
    def test_monotone_on_random_curves(self, curve_factory, side):
        rng = np.random.default_rng(3)
        for _ in range(50):
            curve = curve_factory(rng, side)
            a, b = np.sort(rng.uniform(-10, curve.domain_end + 10, size=(2, 200)), axis=0)
            va, vb = evaluate(curve, a), evaluate(curve, b)
            if side is Side.ASK:
                assert np.all(va <= vb)
            else:
                assert np.all(va >= vb)


@pytest.mark.unit
class TestInverse:
    """Generalized sup-inverse with clamp flag"""

    def test_sup_of_level_set(self, toy_ask):
        assert inverse(toy_ask, 20) == (200, False)

    def test_between_levels(self, toy_ask):
        assert inverse(toy_ask, 15) == (100, False)

    def test_below_minimum_clamps(self, toy_ask):
        assert inverse(toy_ask, 5) == (0, True)

    def test_at_or_above_maximum_clamps(self, toy_ask):
        assert inverse(toy_ask, 100) == (250, True)
        assert inverse(toy_ask, 500) == (250, True)

    def test_bid_inverse(self):
        bid = StepCurve.from_points(Side.BID, [(0, 100), (50, 60), (120, 20)], domain_end=150)
        assert inverse(bid, 60) == (120, False)
        assert inverse(bid, 150) == (0, True)
        assert inverse(bid, 10) == (150, True)

    def test_nan_rejected(self, toy_ask):
        with pytest.raises(MalformedInputError):
            inverse(toy_ask, float("nan"))

    def test_generalized_inverse_characterization(self, curve_factory):
        rng = np.random.default_rng(5)
        for _ in range(50):
            curve = curve_factory(rng, Side.ASK)
            p = rng.uniform(curve.min_price, curve.max_price)
            v, clamped = inverse(curve, p)
            if clamped:
                continue
            assert evaluate(curve, np.nextafter(v, -np.inf)) <= p
            grid = np.linspace(v, curve.domain_end, 500)[1:]
            assert np.all(evaluate(curve, grid) > p)


@pytest.mark.unit
class TestSettle:
    """Curve intersection by gap minimization"""

    def test_crossing_at_bid_drop(self, toy_ask):
        eps = 1e-6
        bid = StepCurve.from_points(Side.BID, [(0, 100), (150, 100), (150 + eps, 5)])
        result = settle(bid, toy_ask)
        assert result.volume == pytest.approx(150, abs=1e-3)
        assert result.price == 20
        assert result.gap == pytest.approx(15)

    def test_identical_flat_curves_tie_break(self):
        bid = StepCurve.from_points(Side.BID, [(0, 50), (100, 50)])
        ask = StepCurve.from_points(Side.ASK, [(0, 50), (100, 50)])
        result = settle(bid, ask)
        assert result.volume == 0
        assert result.gap == 0

    def test_disjoint_domains(self):
        bid = StepCurve.from_points(Side.BID, [(0, 50), (100, 40)])
        ask = StepCurve.from_points(Side.ASK, [(200, 10), (300, 20)])
        with pytest.raises(DisjointDomainsError):
            settle(bid, ask)

    def test_argument_sides_checked(self, toy_ask):
        with pytest.raises(MalformedInputError):
            settle(toy_ask, toy_ask)

    def test_non_crossing_matches_brute_force(self, toy_ask):
        bid = StepCurve.from_points(Side.BID, [(0, 8), (120, 5), (200, 1)], domain_end=250)
        result = settle(bid, toy_ask)
        grid = np.linspace(0, 250, 10001)
        gaps = np.abs(evaluate(bid, grid) - evaluate(toy_ask, grid))
        assert result.gap == pytest.approx(gaps.min())
        assert result.volume == pytest.approx(grid[np.argmin(gaps)], abs=0.05)

    def test_price_is_ask_at_volume(self, curve_factory):
        rng = np.random.default_rng(8)
        for _ in range(20):
            bid, ask = curve_factory(rng, Side.BID), curve_factory(rng, Side.ASK)
            result = settle(bid, ask)
            assert result.price == evaluate(ask, result.volume)
            assert result.gap >= 0

    def test_random_pairs_against_grid(self, curve_factory):
        rng = np.random.default_rng(13)
        for _ in range(50):
            bid, ask = curve_factory(rng, Side.BID), curve_factory(rng, Side.ASK)
            lo = max(bid.volume_start, ask.volume_start)
            hi = min(bid.domain_end, ask.domain_end)
            grid = np.linspace(lo, hi, 10000)
            grid_gap = np.abs(evaluate(bid, grid) - evaluate(ask, grid)).min()
            assert settle(bid, ask).gap <= grid_gap + 1e-12


@pytest.mark.unit
class TestDeltaFeatures:
    """Volume traversed when the forecast moves by m"""

    def test_toy_delta_plus(self, toy_ask):
        feature = delta_features(toy_ask, 15, 50)
        assert feature.delta_plus == 100
        assert feature.delta_minus == 100
        assert not feature.clamped

    def test_top_of_curve(self, toy_ask):
        feature = delta_features(toy_ask, 100, 50)
        assert feature.delta_plus == 0
        assert feature.clamped

    def test_flat_curve(self):
        flat = StepCurve.from_points(Side.ASK, [(0, 50), (100, 50)])
        assert delta_features(flat, 50, 50).delta_plus == 0
        assert delta_features(flat, 49.99, 50).delta_plus == 100

    def test_m_must_be_positive(self, toy_ask):
        with pytest.raises(MalformedInputError):
            delta_features(toy_ask, 15, 0)

    def test_ask_side_required(self):
        bid = StepCurve.from_points(Side.BID, [(0, 50), (100, 40)])
        with pytest.raises(MalformedInputError):
            delta_features(bid, 45, 50)

    def test_delta_plus_nonincreasing_in_forecast(self):
        volumes = np.linspace(0, 1000, 41)
        prices = 10 + 0.002 * volumes ** 2 / 10
        curve = StepCurve(Side.ASK, volumes, np.round(prices, 2), domain_end=1100)
        lowest = np.inf
        # up to one breakpoint spacing of step quantization
        for p_hat in np.linspace(11, prices.max() - 60, 30):
            feature = delta_features(curve, p_hat, 50)
            if feature.clamped:
                continue
            assert feature.delta_plus <= lowest + 25.0
            lowest = min(lowest, feature.delta_plus)
