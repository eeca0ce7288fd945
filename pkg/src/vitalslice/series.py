"""Multichannel vital-sign series: loading, synthesis, and quality gating."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataFormatError
from .validation import as_float_matrix, check_finite

DEFAULT_SAMPLING_RATE_HZ = 100.0

#: (name, unit) of the channels monitored by default.
DEFAULT_CHANNELS = (
    ("hr", "bpm"),
    ("sbp", "mmHg"),
    ("dbp", "mmHg"),
    ("rr", "breaths/min"),
)


@dataclass(frozen=True)
class Channel:
    name: str
    unit: str = ""


@dataclass(frozen=True)
class VitalSeries:
    """A fixed-rate multichannel physiological time series.

    ``data`` has one row per sample and one column per channel; the implied
    timestamp of row ``i`` is ``start_time_ms + 1000 * i / sampling_rate_hz``.
    Instances are immutable and safe to share.
    """

    data: np.ndarray
    channels: tuple[Channel, ...]
    sampling_rate_hz: float = DEFAULT_SAMPLING_RATE_HZ
    start_time_ms: float = 0.0

    def __post_init__(self):
        arr = as_float_matrix(self.data, "series data")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        if isinstance(self.channels, (list, tuple)):
            object.__setattr__(self, "channels", tuple(self.channels))
        if self.n_channels < 1:
            raise ConfigError("a series needs at least one channel")
        if arr.shape[1] != self.n_channels:
            raise ConfigError(
                f"data has {arr.shape[1]} columns but {self.n_channels} channels declared"
            )
        if not self.sampling_rate_hz > 0:
            raise ConfigError(f"sampling_rate_hz must be > 0, got {self.sampling_rate_hz}")
        check_finite(arr, "series data")

    @property
    def n_samples(self) -> int:
        return self.data.shape[0]

    @property
    def n_channels(self) -> int:
        return len(self.channels)

    @property
    def channel_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.channels)

    def channel_index(self, name: str) -> int:
        try:
            return self.channel_names.index(name)
        except ValueError:
            raise ConfigError(f"unknown channel {name!r}; have {self.channel_names}") from None

    def with_data(self, data: np.ndarray) -> "VitalSeries":
        return VitalSeries(
            data=data,
            channels=self.channels,
            sampling_rate_hz=self.sampling_rate_hz,
            start_time_ms=self.start_time_ms,
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.channel_names)
        for row in self.data:
            writer.writerow([repr(float(v)) for v in row])
        return buf.getvalue()


def load_series_csv(
    source,
    sampling_rate_hz: float = DEFAULT_SAMPLING_RATE_HZ,
    units: dict[str, str] | None = None,
) -> VitalSeries:
    """Parse a header+rows CSV into a :class:`VitalSeries`.

    ``source`` is a readable text object or a string of CSV content. The
    header row names the channels; every following row is one sample.
    Raises :class:`DataFormatError` naming the offending row and column on
    malformed input, and on a file with no data rows.
    """
    if isinstance(source, str):
        source = io.StringIO(source)
    reader = csv.reader(source)
    try:
        header = next(reader)
    except StopIteration:
        raise DataFormatError("empty file: no header row") from None
    names = [h.strip() for h in header]
    if any(not n for n in names):
        raise DataFormatError("header contains an empty channel name")
    units = units or {}
    channels = tuple(Channel(n, units.get(n, "")) for n in names)

    rows = []
    for row_no, row in enumerate(reader, start=1):
        if not row:
            continue
        if len(row) != len(names):
            raise DataFormatError(
                f"row {row_no}: expected {len(names)} values, got {len(row)}"
            )
        values = []
        for col_no, cell in enumerate(row, start=1):
            try:
                values.append(float(cell))
            except ValueError:
                raise DataFormatError(
                    f"row {row_no}, column {col_no}: non-numeric value {cell.strip()!r}"
                ) from None
        rows.append(values)
    if not rows:
        raise DataFormatError("file has a header but no samples")
    return VitalSeries(
        data=np.array(rows, dtype=np.float64),
        channels=channels,
        sampling_rate_hz=sampling_rate_hz,
    )


@dataclass(frozen=True)
class ChannelSpec:
    """Sinusoid-plus-noise generator settings for one synthetic channel."""

    name: str
    baseline: float
    amplitude: float = 0.0
    period_s: float = 1.0
    noise_std: float = 0.0
    unit: str = ""

    def __post_init__(self):
        if not self.period_s > 0:
            raise ConfigError(f"channel {self.name!r}: period must be > 0, got {self.period_s}")
        if self.noise_std < 0:
            raise ConfigError(f"channel {self.name!r}: noise_std must be >= 0")


#: Desk-scale defaults: plausible resting-adult vitals.
DEFAULT_SYNTH_SPECS = (
    ChannelSpec("hr", baseline=75.0, amplitude=5.0, period_s=10.0, noise_std=1.0, unit="bpm"),
    ChannelSpec("sbp", baseline=120.0, amplitude=8.0, period_s=30.0, noise_std=2.0, unit="mmHg"),
    ChannelSpec("dbp", baseline=80.0, amplitude=5.0, period_s=30.0, noise_std=1.5, unit="mmHg"),
    ChannelSpec("rr", baseline=16.0, amplitude=2.0, period_s=20.0, noise_std=0.5, unit="breaths/min"),
)


def generate_synthetic(
    specs=DEFAULT_SYNTH_SPECS,
    duration_s: float = 60.0,
    sampling_rate_hz: float = DEFAULT_SAMPLING_RATE_HZ,
    seed: int = 0,
) -> VitalSeries:
    """Generate ``baseline + amplitude*sin(2*pi*t/period) + N(0, noise_std)``
    per channel. Identical seeds give bit-identical series.
    """
    if not duration_s > 0:
        raise ConfigError(f"duration must be > 0, got {duration_s}")
    if not sampling_rate_hz > 0:
        raise ConfigError(f"sampling_rate_hz must be > 0, got {sampling_rate_hz}")
    specs = tuple(specs)
    if not specs:
        raise ConfigError("at least one channel spec is required")
    n = int(round(duration_s * sampling_rate_hz))
    if n < 1:
        raise ConfigError("duration too short for one sample at this rate")
    t = np.arange(n, dtype=np.float64) / sampling_rate_hz
    rng = np.random.default_rng(seed)
    cols = []
    for spec in specs:
        clean = spec.baseline + spec.amplitude * np.sin(2.0 * np.pi * t / spec.period_s)
        noise = rng.normal(0.0, spec.noise_std, size=n) if spec.noise_std > 0 else 0.0
        cols.append(clean + noise)
    return VitalSeries(
        data=np.column_stack(cols),
        channels=tuple(Channel(s.name, s.unit) for s in specs),
        sampling_rate_hz=sampling_rate_hz,
    )


@dataclass(frozen=True)
class QualityRule:
    """Per-channel validity heuristics: value range, flatline run, spike jump."""

    channel: str
    min_value: float = -np.inf
    max_value: float = np.inf
    flatline_run: int = 50
    spike_jump: float = np.inf

    def __post_init__(self):
        if self.flatline_run < 2:
            raise ConfigError("flatline_run must be >= 2 samples")
        if self.min_value > self.max_value:
            raise ConfigError(f"channel {self.channel!r}: min > max")


@dataclass(frozen=True)
class QualityCeilings:
    """Maximum tolerated event counts; a report passes when every count is
    strictly below its ceiling."""

    out_of_range: int = 1
    flatline: int = 1
    spike: int = 1


@dataclass(frozen=True)
class ChannelQuality:
    channel: str
    out_of_range: int
    flatline_runs: int
    spikes: int


@dataclass(frozen=True)
class QualityReport:
    per_channel: tuple[ChannelQuality, ...]
    ceilings: QualityCeilings = field(default_factory=QualityCeilings)

    @property
    def passed(self) -> bool:
        c = self.ceilings
        return all(
            q.out_of_range < c.out_of_range
            and q.flatline_runs < c.flatline
            and q.spikes < c.spike
            for q in self.per_channel
        )


def _count_flatline_runs(x: np.ndarray, min_run: int) -> int:
    """Number of maximal constant runs of length >= min_run."""
    if x.size < min_run:
        return 0
    runs = 0
    run_len = 1
    for i in range(1, x.size):
        if x[i] == x[i - 1]:
            run_len += 1
        else:
            if run_len >= min_run:
                runs += 1
            run_len = 1
    if run_len >= min_run:
        runs += 1
    return runs


def assess_quality(
    series: VitalSeries,
    rules,
    ceilings: QualityCeilings | None = None,
) -> QualityReport:
    """Count rule violations per channel; the input series is not modified."""
    rules = list(rules)
    names = set(series.channel_names)
    for rule in rules:
        if rule.channel not in names:
            raise ConfigError(f"quality rule for unknown channel {rule.channel!r}")
    ceilings = ceilings or QualityCeilings()
    results = []
    for rule in rules:
        col = series.data[:, series.channel_index(rule.channel)]
        out_of_range = int(np.sum((col < rule.min_value) | (col > rule.max_value)))
        flatlines = _count_flatline_runs(col, rule.flatline_run)
        if col.size >= 2 and np.isfinite(rule.spike_jump):
            spikes = int(np.sum(np.abs(np.diff(col)) > rule.spike_jump))
        else:
            spikes = 0
        results.append(ChannelQuality(rule.channel, out_of_range, flatlines, spikes))
    return QualityReport(per_channel=tuple(results), ceilings=ceilings)
