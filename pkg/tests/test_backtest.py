"""
Unit tests for the rolling-origin backtest.
Tests warm-up checks, temporal hygiene, determinism, data gaps and aggregation,
plus slow calibration and ranking checks on full synthetic markets.
"""

from datetime import date, timedelta

import numpy as np
import pytest
from scipy import stats

from pricedress.core.backtest import (BacktestResult, aggregate, default_first_day, forecasts_frame, run,
                                      sharpness)
from pricedress.core.config import BacktestConfig, ModelConfig
from pricedress.core.curves import StepCurve
from pricedress.core.dataset import HOURS
from pricedress.core.exceptions import InsufficientHistoryError, MalformedInputError
from pricedress.core.verification import reliability
from pricedress.core.volmodel import compute_residuals


def shifted(curve: StepCurve, by: float) -> StepCurve:
    return StepCurve(curve.side, curve.volumes + by, curve.prices, domain_end=curve.domain_end + by)


@pytest.fixture(scope="module")
def small_result(small_plan_factory):
    return run(small_plan_factory())


@pytest.mark.unit
class TestRun:
    """Scores and forecasts of a short backtest"""

    def test_one_record_per_day_hour_model(self, small_result):
        assert isinstance(small_result, BacktestResult)
        assert len(small_result.records) == 10 * 24 * 3
        assert len(small_result.forecasts) == 10 * 24 * 3
        assert small_result.gaps == []

    def test_aggregates(self, small_result):
        table = small_result.aggregates
        assert sorted(table["model"]) == ["bidask", "empirical", "gaussian"]
        assert set(table["count"]) == {240}
        assert (table["crps"] >= 0).all()

    def test_metadata(self, small_result, small_plan_factory):
        plan = small_plan_factory()
        assert small_result.metadata["seed"] == BacktestConfig().seed
        assert small_result.metadata["forecast_span"] == [str(plan.first_day), str(plan.last_day)]
        assert small_result.metadata["n_records"] == 720

    def test_scores_frame(self, small_result):
        frame = small_result.scores_frame()
        assert list(frame.columns) == ["date", "hour", "model", "crps", "qs10", "qs90", "pit",
                                       "exceed_prob", "exceeded"]
        assert frame["pit"].between(0, 1).all()

    def test_deterministic(self, small_plan_factory, small_result):
        assert run(small_plan_factory()).records == small_result.records

    def test_parallel_matches_sequential(self, small_plan_factory, small_result):
        parallel = run(small_plan_factory(backtest_config=BacktestConfig(workers=4)))
        assert parallel.records == small_result.records
        assert parallel.forecasts == small_result.forecasts

    def test_seed_changes_only_pit(self, small_plan_factory, small_result):
        other = run(small_plan_factory(backtest_config=BacktestConfig(seed=1)))
        for a, b in zip(other.records, small_result.records):
            assert a.crps == b.crps
        assert any(a.pit != b.pit for a, b in zip(other.records, small_result.records))

    def test_benchmark_window_only_moves_benchmarks(self, small_plan_factory, small_result):
        windowed = run(small_plan_factory(backtest_config=BacktestConfig(benchmark_window_days=30)))
        by_model = {}
        for a, b in zip(windowed.records, small_result.records):
            by_model.setdefault(a.model, []).append(a.crps == b.crps)
        assert all(by_model["bidask"])
        assert not all(by_model["gaussian"])
        assert not all(by_model["empirical"])

    def test_models_come_from_backtest_config(self, small_plan_factory):
        plan = small_plan_factory(backtest_config=BacktestConfig(models=["gaussian"]))
        assert plan.models == ["gaussian"]
        result = run(plan)
        assert {r.model for r in result.records} == {"gaussian"}
        assert list(result.aggregates["model"]) == ["gaussian"]

    def test_duplicate_models_score_identically(self, small_plan_factory):
        result = run(small_plan_factory(backtest_config=BacktestConfig(models=["bidask", "bidask"])))
        first, second = result.records[0::2], result.records[1::2]
        assert first == second

    def test_excluded_dates_skipped(self, small_plan_factory):
        plan = small_plan_factory()
        skipped = plan.first_day + timedelta(days=2)
        result = run(small_plan_factory(exclude_dates=frozenset({skipped})))
        assert len(result.records) == 9 * 24 * 3
        assert skipped not in {r.date for r in result.records}
        assert result.metadata["excluded_dates"] == [str(skipped)]


@pytest.mark.unit
class TestWarmup:
    """Plans without enough history are refused"""

    def test_short_history(self, small_plan_factory, small_market):
        start, _ = small_market.span
        with pytest.raises(InsufficientHistoryError, match="warm-up"):
            run(small_plan_factory(first_day=start + timedelta(days=60)))

    def test_first_after_last(self, small_plan_factory):
        plan = small_plan_factory()
        with pytest.raises(MalformedInputError):
            run(small_plan_factory(last_day=plan.first_day - timedelta(days=1)))

    def test_default_first_day(self, small_market):
        start, _ = small_market.span
        assert default_first_day(small_market, ModelConfig()) == start + timedelta(days=120)
        assert default_first_day(small_market, ModelConfig(tail_window_days=1000)) is None


@pytest.mark.unit
class TestTemporalHygiene:
    """A day's forecast never sees that day's curves or anything later"""

    def test_future_data_does_not_leak(self, small_plan_factory, small_market):
        plan = small_plan_factory()
        day = plan.first_day + timedelta(days=3)
        mutated = small_market
        for record in small_market:
            if record.date == day:
                mutated = mutated.replace_fields(day, record.hour, ask=shifted(record.ask, 700.0),
                                                 bid=shifted(record.bid, 700.0), volume=record.volume + 900.0)
            elif record.date > day:
                mutated = mutated.replace_fields(record.date, record.hour, ask=shifted(record.ask, -400.0),
                                                 volume=record.volume - 2000.0, price=record.price + 25.0,
                                                 p_hat=record.p_hat * 1.5)

        original = run(small_plan_factory(first_day=day, last_day=day))
        leaked = run(small_plan_factory(dataset=mutated, first_day=day, last_day=day))
        assert leaked.records == original.records
        assert leaked.forecasts == original.forecasts


@pytest.mark.unit
class TestDataGaps:
    """Missing inputs turn into gap entries, not failures"""

    def test_missing_price(self, small_plan_factory, small_market):
        plan = small_plan_factory()
        dataset = small_market.replace_fields(plan.first_day, 7, price=None)
        result = run(small_plan_factory(dataset=dataset))
        assert [(g.date, g.hour) for g in result.gaps] == [(plan.first_day, 7)]
        assert len(result.records) == (10 * 24 - 1) * 3

    def test_missing_previous_ask(self, small_plan_factory, small_market):
        plan = small_plan_factory(backtest_config=BacktestConfig(max_curve_gap_days=1))
        dataset = small_market.replace_fields(plan.first_day - timedelta(days=1), 5, ask=None)
        result = run(small_plan_factory(dataset=dataset, backtest_config=BacktestConfig(max_curve_gap_days=1)))
        assert [(g.date, g.hour) for g in result.gaps] == [(plan.first_day, 5)]
        assert "no ask curve" in result.gaps[0].reason

    def test_older_ask_used_within_gap(self, small_plan_factory, small_market):
        plan = small_plan_factory()
        dataset = small_market.replace_fields(plan.first_day - timedelta(days=1), 5, ask=None)
        result = run(small_plan_factory(dataset=dataset))
        assert result.gaps == []


@pytest.mark.unit
class TestTables:
    """Aggregation, forecast and sharpness tables"""

    def test_aggregate_by_model_hour(self, small_result):
        table = aggregate(small_result.records, group_by="model_hour")
        assert len(table) == 3 * 24
        assert set(table["count"]) == {10}
        assert list(table.columns) == ["model", "hour", "crps", "qs10", "qs90", "count"]

    def test_aggregate_means(self, small_result):
        frame = small_result.scores_frame()
        expected = frame[frame["model"] == "gaussian"]["crps"].mean()
        table = aggregate(small_result.records).set_index("model")
        assert table.loc["gaussian", "crps"] == pytest.approx(expected)

    def test_aggregate_rejects_empty(self):
        with pytest.raises(MalformedInputError):
            aggregate([])

    def test_aggregate_rejects_unknown_grouping(self, small_result):
        with pytest.raises(MalformedInputError):
            aggregate(small_result.records, group_by="day")

    def test_forecasts_frame_columns(self, small_result):
        frame = forecasts_frame(small_result.forecasts)
        assert list(frame.columns) == ["date", "hour", "model", "q05", "q10", "q20", "q50", "q80", "q90",
                                       "q95", "exceed_50"]
        quantiles = frame[["q05", "q10", "q20", "q50", "q80", "q90", "q95"]].to_numpy()
        assert np.all(np.diff(quantiles, axis=1) >= 0)

    def test_sharpness_nested_intervals(self, small_result):
        table = sharpness(small_result.forecasts)
        assert sorted(table["model"]) == ["bidask", "empirical", "gaussian"]
        assert (table["width60"] <= table["width80"]).all()
        assert (table["width80"] <= table["width90"]).all()


@pytest.mark.slow
class TestCalibration:
    """Long backtests on markets with a known, regime-dependent volume-error law"""

    def test_market_exercises_kink_regime(self, calibration_market, calibration_backtest):
        first = date.fromisoformat(calibration_backtest.metadata["forecast_span"][0])
        scored = [r for r in compute_residuals(calibration_market) if r.date >= first]
        kink = sum(r.delta_plus <= ModelConfig().delta0 for r in scored)
        assert kink >= 200
        assert kink < len(scored)

    def test_bidask_pit_uniform(self, calibration_backtest):
        pits = [r.pit for r in calibration_backtest.records if r.model == "bidask"]
        assert len(pits) >= 5000
        assert stats.kstest(pits, "uniform").pvalue > 0.01

    def test_bidask_exceedance_reliable(self, calibration_backtest):
        bidask = [r for r in calibration_backtest.records if r.model == "bidask"]
        bins = reliability([r.exceed_prob for r in bidask], [r.exceeded for r in bidask], min_prob=0.1)
        checked = [b for b in bins if b.count >= 20]
        assert checked
        for b in checked:
            assert abs(b.observed_freq - b.mean_prob) <= 3 * b.standard_error

    def test_bidask_beats_benchmarks_with_spikes(self, spiky_backtest):
        table = spiky_backtest.aggregates.set_index("model")
        assert table.loc["bidask", "crps"] < table.loc["gaussian", "crps"]
        assert table.loc["bidask", "crps"] < table.loc["empirical", "crps"]

    def test_no_gaps_on_complete_market(self, calibration_backtest):
        assert calibration_backtest.gaps == []
        assert set(HOURS) == {r.hour for r in calibration_backtest.records}
