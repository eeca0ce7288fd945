"""Vital-sign forecasting over a simulated ultra-low-latency network slice.

The package splits into five layers: signal handling (`series`,
`preprocessing`), the predictor and its training loop (`ops`, `model`,
`training`, `quantize`, `forecaster`), the network simulator
(`netslice`), the end-to-end pipeline (`pipeline`), and reporting
(`metrics`, `report`). `cli` wires them into one executable.
"""

from .errors import (
    ConfigError,
    DataFormatError,
    InfeasibleAllocationError,
    InsufficientDataError,
    NumericError,
    ShapeError,
)
from .forecaster import VitalSignForecaster
from .metrics import StatTestResult, f1_alerts, mae_pct, paired_ttest, r2, rmse_pct
from .model import Model, ModelConfig, forward, model_init, predict_rollout
from .netslice import (
    Allocation,
    AllocationProblem,
    LatencyModel,
    LinkModel,
    Packet,
    QosMeasurement,
    QosSpec,
    QosVerdict,
    SchedulerWeights,
    SliceConfig,
    TransmissionLog,
    allocate_exact,
    allocate_greedy,
    e2e_latency,
    make_packet_stream,
    qos_check,
    reliability,
    schedule,
    simulate_link,
)
from .pipeline import AlertRule, PipelineConfig, PipelineTrace, run, stage_stats, track_resources
from .preprocessing import NormStats, ZScoreNormalizer, fit_normalizer, make_windows, split
from .quantize import QuantizedModel, quantize_int8
from .report import MetricsReport, compute_metrics, latency_table, render_report
from .series import ChannelSpec, VitalSeries, generate_synthetic, load_series_csv
from .training import LrSchedule, SearchSpace, cosine_lr, hyperparameter_search, train

__version__ = "0.1.0"

__all__ = [
    "AlertRule",
    "Allocation",
    "AllocationProblem",
    "ChannelSpec",
    "ConfigError",
    "DataFormatError",
    "InfeasibleAllocationError",
    "InsufficientDataError",
    "LatencyModel",
    "LinkModel",
    "LrSchedule",
    "MetricsReport",
    "Model",
    "ModelConfig",
    "NormStats",
    "NumericError",
    "Packet",
    "PipelineConfig",
    "PipelineTrace",
    "QosMeasurement",
    "QosSpec",
    "QosVerdict",
    "QuantizedModel",
    "SchedulerWeights",
    "SearchSpace",
    "ShapeError",
    "SliceConfig",
    "StatTestResult",
    "TransmissionLog",
    "VitalSeries",
    "VitalSignForecaster",
    "ZScoreNormalizer",
    "allocate_exact",
    "allocate_greedy",
    "compute_metrics",
    "cosine_lr",
    "e2e_latency",
    "f1_alerts",
    "fit_normalizer",
    "forward",
    "generate_synthetic",
    "hyperparameter_search",
    "latency_table",
    "load_series_csv",
    "mae_pct",
    "make_packet_stream",
    "make_windows",
    "model_init",
    "paired_ttest",
    "predict_rollout",
    "qos_check",
    "quantize_int8",
    "r2",
    "reliability",
    "render_report",
    "rmse_pct",
    "run",
    "schedule",
    "simulate_link",
    "split",
    "stage_stats",
    "track_resources",
    "train",
]
