"""Series container, CSV ingestion, synthetic generation, quality rules."""

import math

import numpy as np
import pytest

from vitalslice.errors import ConfigError, DataFormatError, NumericError
from vitalslice.series import (
    Channel,
    ChannelSpec,
    QualityCeilings,
    QualityRule,
    VitalSeries,
    assess_quality,
    generate_synthetic,
    load_series_csv,
)

CSV_SMALL = "hr,sbp,dbp,rr\n72,120,80,16\n73,121,81,16\n74,119,79,15\n"


def make_series(data, names=("hr",), rate=100.0):
    return VitalSeries(
        data=np.asarray(data, dtype=np.float64),
        channels=tuple(Channel(n) for n in names),
        sampling_rate_hz=rate,
    )


class TestVitalSeries:
    def test_shape_and_names(self):
        s = make_series([[1.0, 2.0], [3.0, 4.0]], names=("hr", "rr"))
        assert s.n_samples == 2
        assert s.n_channels == 2
        assert s.channel_names == ("hr", "rr")
        assert s.channel_index("rr") == 1

    def test_unknown_channel(self):
        s = make_series([[1.0]])
        with pytest.raises(ConfigError, match="unknown channel"):
            s.channel_index("spo2")

    def test_data_is_read_only(self):
        s = make_series([[1.0], [2.0]])
        with pytest.raises(ValueError):
            s.data[0, 0] = 9.0

    def test_column_count_must_match_channels(self):
        with pytest.raises(ConfigError):
            make_series([[1.0, 2.0]], names=("hr",))

    def test_rejects_non_finite(self):
        with pytest.raises(NumericError):
            make_series([[1.0], [np.nan]])

    def test_rejects_bad_rate(self):
        with pytest.raises(ConfigError):
            make_series([[1.0]], rate=0.0)

    def test_with_data_keeps_metadata(self):
        s = make_series([[1.0], [2.0]], rate=50.0)
        t = s.with_data(np.array([[3.0], [4.0]]))
        assert t.sampling_rate_hz == 50.0
        assert t.channels == s.channels
        assert t.data[1, 0] == 4.0

    def test_csv_round_trip(self):
        s = make_series([[1.5, 2.0], [3.25, 4.0]], names=("a", "b"))
        back = load_series_csv(s.to_csv())
        np.testing.assert_array_equal(back.data, s.data)
        assert back.channel_names == ("a", "b")


class TestLoadSeriesCsv:
    def test_small_file(self):
        s = load_series_csv(CSV_SMALL)
        assert s.n_samples == 3
        assert s.n_channels == 4
        assert s.channel_names == ("hr", "sbp", "dbp", "rr")
        assert s.data[0, 0] == 72.0

    def test_units_applied(self):
        s = load_series_csv(CSV_SMALL, units={"hr": "bpm"})
        assert s.channels[0].unit == "bpm"
        assert s.channels[1].unit == ""

    def test_non_numeric_cell_names_row_and_column(self):
        with pytest.raises(DataFormatError, match="row 1, column 2"):
            load_series_csv("hr,sbp,dbp,rr\n72,abc,80,16\n")

    def test_wrong_arity_names_row(self):
        with pytest.raises(DataFormatError, match="row 2"):
            load_series_csv("hr,rr\n72,16\n72\n")

    def test_header_only(self):
        with pytest.raises(DataFormatError, match="no samples"):
            load_series_csv("hr,rr\n")

    def test_empty_file(self):
        with pytest.raises(DataFormatError, match="no header"):
            load_series_csv("")

    def test_empty_header_name(self):
        with pytest.raises(DataFormatError, match="empty channel name"):
            load_series_csv("hr,,rr\n1,2,3\n")

    def test_sampling_rate_passthrough(self):
        s = load_series_csv(CSV_SMALL, sampling_rate_hz=250.0)
        assert s.sampling_rate_hz == 250.0


class TestGenerateSynthetic:
    def test_degenerate_spec_is_constant(self):
        spec = ChannelSpec("hr", baseline=75.0, amplitude=0.0, noise_std=0.0)
        s = generate_synthetic([spec], duration_s=1.0, sampling_rate_hz=10.0, seed=3)
        assert s.n_samples == 10
        np.testing.assert_array_equal(s.data, np.full((10, 1), 75.0))

    def test_same_seed_bit_identical(self):
        a = generate_synthetic(duration_s=2.0, seed=11)
        b = generate_synthetic(duration_s=2.0, seed=11)
        np.testing.assert_array_equal(a.data, b.data)

    def test_different_seed_differs(self):
        a = generate_synthetic(duration_s=2.0, seed=11)
        b = generate_synthetic(duration_s=2.0, seed=12)
        assert not np.array_equal(a.data, b.data)

    def test_sample_mean_near_baseline(self):
        # sine averages out over whole periods; noise mean shrinks as 1/sqrt(T)
        spec = ChannelSpec("hr", baseline=75.0, amplitude=5.0, period_s=10.0, noise_std=1.0)
        s = generate_synthetic([spec], duration_s=100.0, sampling_rate_hz=100.0, seed=0)
        assert s.n_samples == 10_000
        mean = math.fsum(float(v) for v in s.data[:, 0]) / s.n_samples
        assert abs(mean - 75.0) < 0.1

    def test_channel_metadata(self):
        s = generate_synthetic(duration_s=0.1)
        assert s.channel_names == ("hr", "sbp", "dbp", "rr")
        assert s.channels[0].unit == "bpm"

    def test_sample_count_rounds(self):
        s = generate_synthetic(duration_s=0.25, sampling_rate_hz=10.0)
        # 2.5 samples rounds to 2
        assert s.n_samples == 2

    def test_rejects_bad_duration(self):
        with pytest.raises(ConfigError):
            generate_synthetic(duration_s=0.0)

    def test_rejects_empty_specs(self):
        with pytest.raises(ConfigError):
            generate_synthetic([], duration_s=1.0)

    def test_spec_rejects_bad_period(self):
        with pytest.raises(ConfigError, match="period"):
            ChannelSpec("hr", baseline=75.0, period_s=0.0)

    def test_spec_rejects_negative_noise(self):
        with pytest.raises(ConfigError, match="noise_std"):
            ChannelSpec("hr", baseline=75.0, noise_std=-1.0)


class TestAssessQuality:
    def test_clean_series_passes(self):
        s = make_series([[70.0], [71.0], [72.0], [71.0]])
        rule = QualityRule("hr", min_value=40.0, max_value=180.0, spike_jump=30.0)
        report = assess_quality(s, [rule])
        assert report.passed
        q = report.per_channel[0]
        assert (q.out_of_range, q.flatline_runs, q.spikes) == (0, 0, 0)

    def test_flatline_detected(self):
        s = make_series([[70.0]] * 6 + [[71.0]])
        rule = QualityRule("hr", flatline_run=5)
        report = assess_quality(s, [rule])
        assert report.per_channel[0].flatline_runs == 1
        assert not report.passed

    def test_flatline_run_at_tail(self):
        s = make_series([[71.0]] + [[70.0]] * 5)
        rule = QualityRule("hr", flatline_run=5)
        assert assess_quality(s, [rule]).per_channel[0].flatline_runs == 1

    def test_short_flatline_ignored(self):
        s = make_series([[70.0]] * 4 + [[71.0]])
        rule = QualityRule("hr", flatline_run=5)
        assert assess_quality(s, [rule]).per_channel[0].flatline_runs == 0

    def test_spike_detected(self):
        s = make_series([[70.0], [180.0], [70.0]])
        rule = QualityRule("hr", spike_jump=30.0)
        # both the jump up and the jump back exceed 30
        assert assess_quality(s, [rule]).per_channel[0].spikes == 2

    def test_single_spike(self):
        s = make_series([[70.0], [180.0]])
        rule = QualityRule("hr", spike_jump=30.0)
        assert assess_quality(s, [rule]).per_channel[0].spikes == 1

    def test_out_of_range_counted(self):
        s = make_series([[30.0], [70.0], [200.0]])
        rule = QualityRule("hr", min_value=40.0, max_value=180.0)
        assert assess_quality(s, [rule]).per_channel[0].out_of_range == 2

    def test_unknown_channel_rejected(self):
        s = make_series([[70.0]])
        with pytest.raises(ConfigError, match="unknown channel"):
            assess_quality(s, [QualityRule("spo2")])

    def test_series_unmodified(self):
        data = np.array([[70.0], [71.0]])
        s = make_series(data.copy())
        assess_quality(s, [QualityRule("hr", min_value=0.0, max_value=100.0)])
        np.testing.assert_array_equal(s.data, data)

    def test_ceilings_allow_tolerated_events(self):
        s = make_series([[200.0], [70.0]])
        rule = QualityRule("hr", max_value=180.0)
        report = assess_quality(s, [rule], ceilings=QualityCeilings(out_of_range=2))
        assert report.per_channel[0].out_of_range == 1
        assert report.passed

    def test_rule_validation(self):
        with pytest.raises(ConfigError):
            QualityRule("hr", flatline_run=1)
        with pytest.raises(ConfigError):
            QualityRule("hr", min_value=2.0, max_value=1.0)
