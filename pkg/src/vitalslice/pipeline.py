"""End-to-end orchestration over simulated time.

Each window flows sensor -> edge preprocessing -> network -> inference ->
alerting. Compute-stage latencies are sampled from configured
distributions rather than measured, so traces are reproducible on any
machine; the network stage comes from the discrete-event link simulation,
one packet per window.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InsufficientDataError
from .model import Model, forward
from .netslice import (
    LatencyModel,
    LinkModel,
    Packet,
    SchedulerWeights,
    SliceConfig,
    simulate_link,
)
from .preprocessing import NormStats, denormalize_array, fit_normalizer, normalize_array
from .series import DEFAULT_SAMPLING_RATE_HZ, QualityRule, VitalSeries, assess_quality
from .validation import as_float_matrix

# Table-style stage order used for records, statistics, and reports.
STAGE_ORDER = ("collection", "transmission", "edge", "inference")


@dataclass(frozen=True)
class AlertRule:
    """Open-interval band: values strictly outside (low, high) raise events."""

    channel: str
    low: float
    high: float

    def __post_init__(self):
        if not self.low < self.high:
            raise ConfigError(
                f"alert rule for {self.channel!r}: low {self.low} must be "
                f"below high {self.high}"
            )


@dataclass(frozen=True)
class AlertEvent:
    window_index: int
    channel: str
    value: float
    bound: str  # "low" | "high"
    threshold: float


@dataclass(frozen=True)
class StageTiming:
    stage: str
    ms: float

    def __post_init__(self):
        if self.ms < 0:
            raise ConfigError(f"stage {self.stage}: latency must be >= 0")


@dataclass(frozen=True)
class WindowTrace:
    """One window's journey; stage timings follow STAGE_ORDER."""

    index: int
    created_ms: float
    timings: tuple
    delivered: bool
    quality_ok: bool
    prediction: tuple | None
    truth: tuple
    alerts: tuple

    @property
    def total_ms(self) -> float:
        # correctly rounded, so the frozen-stage case sums to exactly 14.4
        return math.fsum(timing.ms for timing in self.timings)


@dataclass(frozen=True)
class PipelineTrace:
    windows: tuple
    channels: tuple

    @property
    def n_windows(self) -> int:
        return len(self.windows)

    @property
    def delivered_windows(self) -> tuple:
        return tuple(w for w in self.windows if w.delivered)

    @property
    def all_alerts(self) -> tuple:
        events = []
        for w in self.windows:
            events.extend(w.alerts)
        return tuple(events)


@dataclass(frozen=True)
class PipelineConfig:
    window: int = 50
    stride: int = 10
    link: LinkModel = LinkModel()
    slice_config: SliceConfig = SliceConfig()
    scheduler: SchedulerWeights = SchedulerWeights()
    alert_rules: tuple = ()
    quality_rules: tuple = ()
    collection: LatencyModel = LatencyModel("collection", 2.3, 0.4)
    edge: LatencyModel = LatencyModel("edge", 4.2, 0.6)
    inference: LatencyModel = LatencyModel("inference", 7.1, 0.8)
    seed: int = 0
    # local profiling only: records the real forward() wall time as the
    # inference stage, which breaks cross-machine reproducibility
    measure_inference: bool = False

    def __post_init__(self):
        if self.window < 1 or self.stride < 1:
            raise ConfigError("window and stride must both be >= 1")
        object.__setattr__(self, "alert_rules", tuple(self.alert_rules))
        object.__setattr__(self, "quality_rules", tuple(self.quality_rules))


def detect_alerts(predictions, channels, rules, start_index: int = 0) -> tuple:
    """Alert events for each prediction row strictly outside a rule's band."""
    predictions = as_float_matrix(predictions, "predictions")
    channels = tuple(channels)
    if predictions.shape[1] != len(channels):
        raise ConfigError(
            f"predictions have {predictions.shape[1]} channels, names list {len(channels)}"
        )
    index_of = {name: i for i, name in enumerate(channels)}
    for rule in rules:
        if rule.channel not in index_of:
            raise ConfigError(f"alert rule channel {rule.channel!r} not in {channels}")
    events = []
    for row, pred in enumerate(predictions):
        for rule in rules:
            value = float(pred[index_of[rule.channel]])
            if value < rule.low:
                events.append(
                    AlertEvent(start_index + row, rule.channel, value, "low", rule.low)
                )
            elif value > rule.high:
                events.append(
                    AlertEvent(start_index + row, rule.channel, value, "high", rule.high)
                )
    return tuple(events)


def run(
    config: PipelineConfig,
    series,
    model: Model,
    norm_stats: NormStats | None = None,
) -> PipelineTrace:
    """Drive every complete window through the five simulated stages.

    A series too short for one window yields an empty trace. Windows whose
    packet drops (or whose quality gate fails) carry no prediction and no
    alerts. `norm_stats` should be the statistics the model was trained
    with; omitted, they are fitted from this series.
    """
    if isinstance(series, VitalSeries):
        data = series.data
        channels = series.channel_names
        rate = series.sampling_rate_hz
    else:
        data = as_float_matrix(series, "series")
        channels = tuple(f"ch{i}" for i in range(data.shape[1]))
        rate = DEFAULT_SAMPLING_RATE_HZ
    w, s = config.window, config.stride
    t_len = data.shape[0]
    if t_len < w + 1:
        return PipelineTrace(windows=(), channels=channels)
    if model.config.window != w or model.config.channels != data.shape[1]:
        raise ConfigError(
            f"model expects ({model.config.channels} channels, window "
            f"{model.config.window}); pipeline has ({data.shape[1]}, {w})"
        )
    if norm_stats is None:
        norm_stats = fit_normalizer(data)
    normalized = normalize_array(data, norm_stats)
    starts = np.arange(0, t_len - w, s)
    n = len(starts)
    ms_per_sample = 1000.0 / rate

    rng_stage = np.random.default_rng((config.seed, 0))
    collection_ms = np.array([config.collection.sample(rng_stage) for _ in range(n)])
    edge_ms = np.array([config.edge.sample(rng_stage) for _ in range(n)])
    inference_ms = np.array([config.inference.sample(rng_stage) for _ in range(n)])

    quality_ok = np.ones(n, dtype=bool)
    if config.quality_rules and isinstance(series, VitalSeries):
        for k, start in enumerate(starts):
            segment = series.with_data(data[start : start + w])
            report = assess_quality(segment, config.quality_rules)
            quality_ok[k] = report.passed

    # one packet per window; creation = the instant preprocessing finishes
    payload = data.shape[1] * w * 8
    packets = []
    for k, start in enumerate(starts):
        if not quality_ok[k]:
            continue
        ready = (float(start) + w - 1) * ms_per_sample
        packets.append(
            Packet(
                packet_id=int(k),
                creation_ms=ready + collection_ms[k] + edge_ms[k],
                payload_bytes=payload,
            )
        )
    packets.sort(key=lambda p: (p.creation_ms, p.packet_id))
    outcome_by_id = {}
    if packets:
        log = simulate_link(
            packets,
            config.link,
            config.scheduler,
            seed=(config.seed, 1),
            bandwidth_mbps=config.slice_config.bandwidth_mbps,
        )
        outcome_by_id = {o.packet_id: o for o in log.outcomes}

    records = []
    for k, start in enumerate(starts):
        truth = data[start + w]
        outcome = outcome_by_id.get(k)
        delivered = outcome is not None and outcome.delivered
        transmission = outcome.total_ms if outcome is not None else 0.0
        prediction = None
        alerts = ()
        inf_ms = 0.0
        if delivered:
            window_block = normalized[start : start + w].T
            if config.measure_inference:
                t0 = time.perf_counter()
                y_hat = forward(model, window_block)
                inf_ms = (time.perf_counter() - t0) * 1000.0
            else:
                inf_ms = float(inference_ms[k])
                y_hat = forward(model, window_block)
            prediction = denormalize_array(y_hat[None, :], norm_stats)[0]
            alerts = detect_alerts(
                prediction[None, :], channels, config.alert_rules, start_index=k
            )
        timings = (
            StageTiming("collection", float(collection_ms[k])),
            StageTiming("transmission", float(transmission)),
            StageTiming("edge", float(edge_ms[k])),
            StageTiming("inference", inf_ms),
        )
        records.append(
            WindowTrace(
                index=int(k),
                created_ms=(float(start) + w - 1) * ms_per_sample,
                timings=timings,
                delivered=bool(delivered),
                quality_ok=bool(quality_ok[k]),
                prediction=tuple(float(v) for v in prediction) if prediction is not None else None,
                truth=tuple(float(v) for v in truth),
                alerts=alerts,
            )
        )
    return PipelineTrace(windows=tuple(records), channels=channels)


@dataclass(frozen=True)
class StageStats:
    stage: str
    average_ms: float
    peak_ms: float
    std_ms: float


def summarize_ms(values) -> tuple[float, float, float]:
    """(mean, peak, population std) with compensated sums, so a constant
    column reports its value exactly and a std of exactly 0."""
    values = [float(v) for v in values]
    n = len(values)
    peak = max(values)
    if min(values) == peak:
        # a constant column's mean is its value by definition; the divide
        # below can still drift an ulp for awkward n (e.g. 13)
        return peak, peak, 0.0
    mean = math.fsum(values) / n
    var = math.fsum((v - mean) ** 2 for v in values) / n
    return mean, peak, math.sqrt(var)


def stage_stats(trace: PipelineTrace) -> tuple:
    """Average/peak/std per stage plus the total row, over delivered windows.

    Standard deviations are population values (the statistics of the
    sampled latencies themselves).
    """
    delivered = trace.delivered_windows
    if not delivered:
        raise InsufficientDataError("trace has no delivered windows to summarize")
    rows = []
    for idx, stage in enumerate(STAGE_ORDER):
        rows.append(StageStats(stage, *summarize_ms(w.timings[idx].ms for w in delivered)))
    rows.append(StageStats("total", *summarize_ms(w.total_ms for w in delivered)))
    return tuple(rows)


# ---------------------------------------------------------------------------
# Resource accounting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ResourceSpec:
    """Simulated utilization source calibrated to a configured mean."""

    name: str
    mean: float
    std: float
    threshold: float
    percentage: bool = True

    def __post_init__(self):
        if self.std < 0 or self.mean < 0 or self.threshold <= 0:
            raise ConfigError(f"resource {self.name}: invalid parameters")


DEFAULT_RESOURCES = (
    ResourceSpec("cpu", 45.0, 0.0, 85.0),
    ResourceSpec("memory", 52.0, 0.0, 90.0),
    ResourceSpec("network", 6.2, 0.0, 10.0, percentage=False),
)


@dataclass(frozen=True)
class ResourceSample:
    timestamp_ms: float
    values: tuple  # aligned with the resource spec order


@dataclass(frozen=True)
class ResourceRow:
    name: str
    average: float
    peak: float
    threshold: float
    exceedances: int


@dataclass(frozen=True)
class ResourceReport:
    samples: tuple
    rows: tuple


def track_resources(
    trace: PipelineTrace, resources=DEFAULT_RESOURCES, seed: int = 0
) -> ResourceReport:
    """One utilization sample per window; percentage resources clamp to
    [0, 100], rate resources clamp at 0."""
    resources = tuple(resources)
    rng = np.random.default_rng((seed, 2))
    samples = []
    for w in trace.windows:
        values = []
        for spec in resources:
            v = spec.mean if spec.std == 0.0 else float(rng.normal(spec.mean, spec.std))
            v = max(0.0, v)
            if spec.percentage:
                v = min(100.0, v)
            values.append(v)
        samples.append(ResourceSample(timestamp_ms=w.created_ms, values=tuple(values)))
    rows = []
    for i, spec in enumerate(resources):
        if samples:
            series = np.array([s.values[i] for s in samples])
            avg, peak = float(series.mean()), float(series.max())
            exceed = int(np.sum(series > spec.threshold))
        else:
            avg = peak = 0.0
            exceed = 0
        rows.append(ResourceRow(spec.name, avg, peak, spec.threshold, exceed))
    return ResourceReport(samples=tuple(samples), rows=tuple(rows))


# ---------------------------------------------------------------------------
# Exports
# ---------------------------------------------------------------------------


def trace_to_csv(trace: PipelineTrace) -> str:
    header = ["window", "created_ms"]
    header.extend(f"{stage}_ms" for stage in STAGE_ORDER)
    header.extend(["total_ms", "delivered", "quality_ok"])
    header.extend(f"pred_{c}" for c in trace.channels)
    header.extend(f"true_{c}" for c in trace.channels)
    lines = [",".join(header)]
    for w in trace.windows:
        row = [str(w.index), repr(w.created_ms)]
        row.extend(repr(t.ms) for t in w.timings)
        row.append(repr(w.total_ms))
        row.append("1" if w.delivered else "0")
        row.append("1" if w.quality_ok else "0")
        if w.prediction is None:
            row.extend("" for _ in trace.channels)
        else:
            row.extend(repr(v) for v in w.prediction)
        row.extend(repr(v) for v in w.truth)
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def trace_to_json(trace: PipelineTrace) -> str:
    doc = {
        "channels": list(trace.channels),
        "windows": [
            {
                "window": w.index,
                "created_ms": w.created_ms,
                "timings": {t.stage: t.ms for t in w.timings},
                "total_ms": w.total_ms,
                "delivered": w.delivered,
                "quality_ok": w.quality_ok,
                "prediction": list(w.prediction) if w.prediction is not None else None,
                "truth": list(w.truth),
                "alerts": [
                    {
                        "window": a.window_index,
                        "channel": a.channel,
                        "value": a.value,
                        "bound": a.bound,
                        "threshold": a.threshold,
                    }
                    for a in w.alerts
                ],
            }
            for w in trace.windows
        ],
    }
    return json.dumps(doc, indent=2)


def alerts_to_csv(trace: PipelineTrace) -> str:
    lines = ["window,channel,value,bound,threshold"]
    for event in trace.all_alerts:
        lines.append(
            f"{event.window_index},{event.channel},{event.value!r},"
            f"{event.bound},{event.threshold!r}"
        )
    return "\n".join(lines) + "\n"
