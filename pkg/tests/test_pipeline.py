"""End-to-end pipeline orchestration: timing, alerts, resources, exports."""

import json
import math

import numpy as np
import pytest

from vitalslice.errors import ConfigError, InsufficientDataError
from vitalslice.model import ModelConfig, model_init
from vitalslice.netslice import LatencyModel, LinkModel, SliceConfig
from vitalslice.pipeline import (
    AlertEvent,
    AlertRule,
    PipelineConfig,
    ResourceSpec,
    alerts_to_csv,
    detect_alerts,
    run,
    stage_stats,
    summarize_ms,
    trace_to_csv,
    trace_to_json,
    track_resources,
)
from vitalslice.preprocessing import NormStats
from vitalslice.series import Channel, QualityRule, VitalSeries

MODEL_CFG = ModelConfig(
    channels=1,
    conv1_filters=2,
    conv1_kernel=3,
    conv2_filters=2,
    conv2_kernel=2,
    lstm_layers=1,
    hidden_units=3,
    attention_heads=1,
    attn_dim=2,
    window=8,
    seed=0,
)

FROZEN = dict(
    collection=LatencyModel("collection", 2.3, 0.0),
    edge=LatencyModel("edge", 4.2, 0.0),
    inference=LatencyModel("inference", 7.1, 0.0),
    link=LinkModel(stages=(LatencyModel("uplink", 0.8, 0.0),)),
)

IDENTITY_STATS = NormStats(mean=np.zeros(1), std=np.ones(1))


def bias_model(value: float):
    """Zero every weight so the forward pass returns exactly `value`."""
    model = model_init(MODEL_CFG)
    for _, arr in model.param_items():
        arr[:] = 0.0
    model.dense.bias[:] = value
    return model


def hr_series(n=60, value=70.0):
    data = np.full((n, 1), value)
    return VitalSeries(data, (Channel("hr", "bpm"),))


class TestRun:
    def test_zero_variance_totals_exact(self):
        config = PipelineConfig(window=8, stride=4, seed=0, **FROZEN)
        trace = run(config, hr_series(), bias_model(70.0), IDENTITY_STATS)
        assert trace.n_windows > 0
        for w in trace.windows:
            assert w.delivered
            assert w.total_ms == 14.4
            assert [t.ms for t in w.timings] == [2.3, 0.8, 4.2, 7.1]

    def test_total_is_sum_of_stages(self):
        config = PipelineConfig(window=8, stride=4, seed=3)
        trace = run(config, hr_series(), bias_model(70.0), IDENTITY_STATS)
        for w in trace.windows:
            assert w.total_ms == math.fsum(t.ms for t in w.timings)

    def test_forced_alert_on_every_window(self):
        config = PipelineConfig(
            window=8, stride=4, seed=0,
            alert_rules=(AlertRule("hr", 40.0, 120.0),), **FROZEN,
        )
        trace = run(config, hr_series(), bias_model(130.0), IDENTITY_STATS)
        assert trace.n_windows > 0
        for w in trace.windows:
            assert len(w.alerts) == 1
            assert w.alerts[0].bound == "high"
            assert w.alerts[0].value == pytest.approx(130.0)

    def test_same_seed_identical_traces(self):
        config = PipelineConfig(window=8, stride=4, seed=5)
        a = run(config, hr_series(), bias_model(70.0), IDENTITY_STATS)
        b = run(config, hr_series(), bias_model(70.0), IDENTITY_STATS)
        assert a == b

    def test_different_seed_differs(self):
        base = hr_series()
        a = run(PipelineConfig(window=8, stride=4, seed=5), base,
                bias_model(70.0), IDENTITY_STATS)
        b = run(PipelineConfig(window=8, stride=4, seed=6), base,
                bias_model(70.0), IDENTITY_STATS)
        assert a != b

    def test_short_series_empty_trace(self):
        config = PipelineConfig(window=8, stride=4)
        trace = run(config, hr_series(8), bias_model(70.0), IDENTITY_STATS)
        assert trace.n_windows == 0

    def test_dropped_packets_carry_no_prediction(self):
        lossy = LinkModel(stages=(LatencyModel("uplink", 0.8, 0.0),), p_loss=1.0)
        config = PipelineConfig(
            window=8, stride=4, seed=0,
            collection=FROZEN["collection"], edge=FROZEN["edge"],
            inference=FROZEN["inference"], link=lossy,
            alert_rules=(AlertRule("hr", 40.0, 120.0),),
        )
        trace = run(config, hr_series(), bias_model(130.0), IDENTITY_STATS)
        assert trace.n_windows > 0
        for w in trace.windows:
            assert not w.delivered
            assert w.prediction is None
            assert w.alerts == ()
            # the inference stage never ran
            assert w.timings[3].ms == 0.0

    def test_quality_gate_blocks_transmission(self):
        config = PipelineConfig(
            window=8, stride=4, seed=0,
            quality_rules=(QualityRule("hr", flatline_run=8),), **FROZEN,
        )
        trace = run(config, hr_series(value=70.0), bias_model(70.0), IDENTITY_STATS)
        assert trace.n_windows > 0
        for w in trace.windows:
            assert not w.quality_ok
            assert not w.delivered
            assert w.prediction is None

    def test_model_shape_mismatch_rejected(self):
        config = PipelineConfig(window=10, stride=4)
        with pytest.raises(ConfigError, match="window"):
            run(config, hr_series(), bias_model(70.0), IDENTITY_STATS)

    def test_created_ms_tracks_sampling_rate(self):
        config = PipelineConfig(window=8, stride=4, **FROZEN)
        trace = run(config, hr_series(), bias_model(70.0), IDENTITY_STATS)
        # at 100 Hz the window ending at sample 7 closes 70 ms in
        assert trace.windows[0].created_ms == 70.0
        assert trace.windows[1].created_ms == 110.0

    def test_plain_array_input(self):
        config = PipelineConfig(window=8, stride=4, **FROZEN)
        trace = run(config, np.full((40, 1), 70.0), bias_model(70.0), IDENTITY_STATS)
        assert trace.channels == ("ch0",)
        assert trace.n_windows > 0

    def test_measured_inference_is_wall_clock(self):
        config = PipelineConfig(window=8, stride=4, measure_inference=True, **FROZEN)
        trace = run(config, hr_series(), bias_model(70.0), IDENTITY_STATS)
        for w in trace.windows:
            assert w.timings[3].stage == "inference"
            assert 0.0 < w.timings[3].ms < 1000.0
            assert w.timings[3].ms != 7.1


class TestStageStats:
    def frozen_trace(self):
        config = PipelineConfig(window=8, stride=4, **FROZEN)
        return run(config, hr_series(), bias_model(70.0), IDENTITY_STATS)

    def test_constant_timings_zero_std(self):
        rows = stage_stats(self.frozen_trace())
        by_name = {r.stage: r for r in rows}
        assert by_name["collection"].average_ms == 2.3
        assert by_name["transmission"].average_ms == 0.8
        assert by_name["edge"].average_ms == 4.2
        assert by_name["inference"].average_ms == 7.1
        total = by_name["total"]
        assert (total.average_ms, total.peak_ms, total.std_ms) == (14.4, 14.4, 0.0)

    def test_single_window(self):
        config = PipelineConfig(window=8, stride=4, seed=1)
        trace = run(config, hr_series(9), bias_model(70.0), IDENTITY_STATS)
        assert trace.n_windows == 1
        for row in stage_stats(trace):
            assert row.average_ms == row.peak_ms
            assert row.std_ms == 0.0

    def test_empty_trace_rejected(self):
        lossy = LinkModel(stages=(LatencyModel("uplink", 0.8, 0.0),), p_loss=1.0)
        config = PipelineConfig(window=8, stride=4, link=lossy)
        trace = run(config, hr_series(), bias_model(70.0), IDENTITY_STATS)
        with pytest.raises(InsufficientDataError):
            stage_stats(trace)

    def test_summarize_ms_constant_column(self):
        mean, peak, std = summarize_ms([14.4] * 1000)
        assert (mean, peak, std) == (14.4, 14.4, 0.0)


class TestDetectAlerts:
    CHANNELS = ("hr", "rr")
    RULES = (AlertRule("hr", 40.0, 120.0),)

    def test_value_at_bound_is_silent(self):
        preds = np.array([[120.0, 16.0], [40.0, 16.0]])
        assert detect_alerts(preds, self.CHANNELS, self.RULES) == ()

    def test_all_in_range(self):
        preds = np.array([[70.0, 16.0]])
        assert detect_alerts(preds, self.CHANNELS, self.RULES) == ()

    def test_below_low(self):
        preds = np.array([[35.0, 16.0]])
        events = detect_alerts(preds, self.CHANNELS, self.RULES)
        assert events == (AlertEvent(0, "hr", 35.0, "low", 40.0),)

    def test_above_high_with_offset(self):
        preds = np.array([[125.0, 16.0]])
        events = detect_alerts(preds, self.CHANNELS, self.RULES, start_index=7)
        assert events[0].window_index == 7
        assert events[0].bound == "high"
        assert events[0].threshold == 120.0

    def test_unknown_rule_channel(self):
        with pytest.raises(ConfigError, match="spo2"):
            detect_alerts(np.zeros((1, 2)), self.CHANNELS,
                          (AlertRule("spo2", 80.0, 100.0),))

    def test_channel_count_mismatch(self):
        with pytest.raises(ConfigError):
            detect_alerts(np.zeros((1, 3)), self.CHANNELS, self.RULES)

    def test_rule_validation(self):
        with pytest.raises(ConfigError):
            AlertRule("hr", 120.0, 40.0)


class TestTrackResources:
    def trace(self, n=40):
        config = PipelineConfig(window=8, stride=4, **FROZEN)
        return run(config, hr_series(n), bias_model(70.0), IDENTITY_STATS)

    def test_zero_variance_defaults(self):
        report = track_resources(self.trace())
        by_name = {r.name: r for r in report.rows}
        assert by_name["cpu"].average == 45.0
        assert by_name["cpu"].peak == 45.0
        assert by_name["memory"].average == 52.0
        assert by_name["network"].average == 6.2
        assert all(r.exceedances == 0 for r in report.rows)
        assert len(report.samples) == self.trace().n_windows

    def test_mean_above_threshold_always_exceeds(self):
        spec = (ResourceSpec("cpu", 95.0, 0.0, 85.0),)
        report = track_resources(self.trace(), resources=spec)
        assert report.rows[0].exceedances == len(report.samples)

    def test_same_seed_identical(self):
        spec = (ResourceSpec("cpu", 45.0, 5.0, 85.0),)
        t = self.trace()
        a = track_resources(t, resources=spec, seed=3)
        b = track_resources(t, resources=spec, seed=3)
        assert a == b
        c = track_resources(t, resources=spec, seed=4)
        assert a != c

    def test_percentage_clamped(self):
        spec = (ResourceSpec("cpu", 100.0, 50.0, 85.0),)
        report = track_resources(self.trace(), resources=spec, seed=0)
        assert all(0.0 <= s.values[0] <= 100.0 for s in report.samples)

    def test_spec_validation(self):
        with pytest.raises(ConfigError):
            ResourceSpec("cpu", -1.0, 0.0, 85.0)
        with pytest.raises(ConfigError):
            ResourceSpec("cpu", 45.0, 0.0, 0.0)


class TestExports:
    def trace(self):
        config = PipelineConfig(
            window=8, stride=4,
            alert_rules=(AlertRule("hr", 40.0, 120.0),), **FROZEN,
        )
        return run(config, hr_series(), bias_model(130.0), IDENTITY_STATS)

    def test_csv_header_and_rows(self):
        text = trace_to_csv(self.trace())
        lines = text.strip().split("\n")
        assert lines[0] == (
            "window,created_ms,collection_ms,transmission_ms,edge_ms,"
            "inference_ms,total_ms,delivered,quality_ok,pred_hr,true_hr"
        )
        first = lines[1].split(",")
        assert first[0] == "0"
        assert first[6] == "14.4"
        assert first[7] == "1"

    def test_csv_blank_prediction_when_dropped(self):
        lossy = LinkModel(stages=(LatencyModel("uplink", 0.8, 0.0),), p_loss=1.0)
        config = PipelineConfig(window=8, stride=4, link=lossy)
        trace = run(config, hr_series(), bias_model(70.0), IDENTITY_STATS)
        line = trace_to_csv(trace).strip().split("\n")[1]
        cells = line.split(",")
        assert cells[7] == "0"  # delivered flag
        assert cells[9] == ""  # no prediction column value

    def test_json_round_trip(self):
        trace = self.trace()
        doc = json.loads(trace_to_json(trace))
        assert doc["channels"] == ["hr"]
        assert len(doc["windows"]) == trace.n_windows
        w0 = doc["windows"][0]
        assert w0["total_ms"] == 14.4
        assert w0["alerts"][0]["bound"] == "high"

    def test_alerts_csv(self):
        text = alerts_to_csv(self.trace())
        lines = text.strip().split("\n")
        assert lines[0] == "window,channel,value,bound,threshold"
        assert len(lines) == 1 + self.trace().n_windows
        assert lines[1].startswith("0,hr,130.0,high,120.0")

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            PipelineConfig(window=0)
