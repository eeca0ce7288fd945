"""JSON run configuration: defaults, section-wise merge, and builders that
turn sections into the typed objects the library consumes."""

from __future__ import annotations

import copy
import hashlib
import json

from .errors import ConfigError, DataFormatError
from .model import ModelConfig
from .netslice import LatencyModel, LinkModel, SchedulerWeights, SliceConfig
from .pipeline import AlertRule, PipelineConfig, ResourceSpec
from .series import ChannelSpec
from .training import LrSchedule, SearchSpace

DEFAULT_CONFIG = {
    "signal": {
        "channels": [
            {"name": "hr", "unit": "bpm", "baseline": 75.0, "amplitude": 5.0,
             "period_s": 10.0, "noise_std": 1.0},
            {"name": "sbp", "unit": "mmHg", "baseline": 120.0, "amplitude": 8.0,
             "period_s": 30.0, "noise_std": 2.0},
            {"name": "dbp", "unit": "mmHg", "baseline": 80.0, "amplitude": 5.0,
             "period_s": 30.0, "noise_std": 1.5},
            {"name": "rr", "unit": "breaths/min", "baseline": 16.0, "amplitude": 2.0,
             "period_s": 20.0, "noise_std": 0.5},
        ],
        "duration_s": 60.0,
        "sampling_rate_hz": 100.0,
        "window": 50,
        "stride": 10,
    },
    "model": {
        "conv1_filters": 8,
        "conv1_kernel": 5,
        "conv2_filters": 8,
        "conv2_kernel": 3,
        "lstm_layers": 2,
        "hidden_units": 32,
        "attention_heads": 4,
        "attn_dim": 16,
        "lam": 0.0,
    },
    "training": {
        "epochs": 15,
        "batch": 32,
        "patience": 5,
        "lr_min": 1e-5,
        "lr_max": 2e-3,
        "val_fraction": 0.2,
        "trials": 0,
        "search": {
            "hidden_units": [16, 32],
            "lstm_layers": [1, 2],
            "attention_heads": [2, 4],
            "lam": [0.0, 0.1],
            "lr_max": [2e-4, 5e-3],
        },
    },
    "link": {
        "stages": [
            {"name": "uplink", "mean_ms": 0.8, "std_ms": 0.2},
            {"name": "transport", "mean_ms": 0.0, "std_ms": 0.0},
            {"name": "processing", "mean_ms": 0.0, "std_ms": 0.0},
        ],
        "p_loss": 0.0,
        "p_error": 0.0,
        "p_unavailable": 0.0,
        "max_retransmissions": 0,
    },
    "slice": {
        "reliability": 0.99999,
        "compute_units": 100.0,
        "latency_ms": 1.0,
        "bandwidth_mbps": 10.0,
        "requests_mbps": None,  # defaults to the single window stream
        "node_capacity_mbps": None,  # defaults to [bandwidth_mbps]
    },
    "scheduler": {"w_u": 0.5, "w_r": 0.3, "w_l": 0.2},
    "alerts": [
        {"channel": "hr", "low": 40.0, "high": 120.0},
        {"channel": "sbp", "low": 90.0, "high": 180.0},
        {"channel": "dbp", "low": 50.0, "high": 110.0},
        {"channel": "rr", "low": 8.0, "high": 30.0},
    ],
    "resources": [
        {"name": "cpu", "mean": 45.0, "std": 0.0, "threshold": 85.0, "percentage": True},
        {"name": "memory", "mean": 52.0, "std": 0.0, "threshold": 90.0, "percentage": True},
        {"name": "network", "mean": 6.2, "std": 0.0, "threshold": 10.0, "percentage": False},
    ],
    "pipeline": {
        "collection": {"mean_ms": 2.3, "std_ms": 0.4},
        "edge": {"mean_ms": 4.2, "std_ms": 0.6},
        "inference": {"mean_ms": 7.1, "std_ms": 0.8},
    },
}


def _merge(base, override, path):
    if isinstance(base, dict):
        if not isinstance(override, dict):
            raise ConfigError(f"config section {path} must be an object")
        merged = dict(base)
        for key, value in override.items():
            if key not in base:
                raise ConfigError(f"unknown config key {path}.{key}")
            merged[key] = _merge(base[key], value, f"{path}.{key}")
        return merged
    # lists and scalars replace wholesale
    return copy.deepcopy(override)


def load_config(path=None) -> dict:
    """Defaults, with the user's JSON merged over them key by key.

    Unknown keys fail loudly; lists replace rather than merge.
    """
    config = copy.deepcopy(DEFAULT_CONFIG)
    if path is None:
        return config
    try:
        with open(path, "r", encoding="utf-8") as fh:
            user = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"config file {path}: invalid JSON: {exc}") from exc
    if not isinstance(user, dict):
        raise DataFormatError(f"config file {path}: top level must be an object")
    for section, value in user.items():
        if section not in config:
            raise ConfigError(f"unknown config section {section!r}")
        config[section] = _merge(config[section], value, section)
    return config


def config_hash(config: dict) -> str:
    """Stable hash of the effective configuration (first 16 hex chars)."""
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Section builders
# ---------------------------------------------------------------------------


def channel_specs(config: dict) -> tuple:
    return tuple(
        ChannelSpec(
            name=c["name"],
            unit=c.get("unit", ""),
            baseline=float(c["baseline"]),
            amplitude=float(c["amplitude"]),
            period_s=float(c["period_s"]),
            noise_std=float(c["noise_std"]),
        )
        for c in config["signal"]["channels"]
    )


def model_config(config: dict, channels: int, seed: int) -> ModelConfig:
    m = config["model"]
    return ModelConfig(
        channels=channels,
        conv1_filters=int(m["conv1_filters"]),
        conv1_kernel=int(m["conv1_kernel"]),
        conv2_filters=int(m["conv2_filters"]),
        conv2_kernel=int(m["conv2_kernel"]),
        lstm_layers=int(m["lstm_layers"]),
        hidden_units=int(m["hidden_units"]),
        attention_heads=int(m["attention_heads"]),
        attn_dim=int(m["attn_dim"]),
        lam=float(m["lam"]),
        window=int(config["signal"]["window"]),
        seed=seed,
    )


def lr_schedule(config: dict, epochs: int | None = None) -> LrSchedule:
    t = config["training"]
    return LrSchedule(
        lr_min=float(t["lr_min"]),
        lr_max=float(t["lr_max"]),
        period=int(epochs if epochs is not None else t["epochs"]),
    )


def search_space(config: dict) -> SearchSpace:
    s = config["training"]["search"]
    return SearchSpace(
        hidden_units=tuple(s["hidden_units"]),
        lstm_layers=tuple(s["lstm_layers"]),
        attention_heads=tuple(s["attention_heads"]),
        lam=tuple(s["lam"]),
        lr_max=tuple(s["lr_max"]),
    )


def link_model(config: dict, zero_variance: bool = False) -> LinkModel:
    link = config["link"]
    stages = tuple(
        LatencyModel(
            name=s["name"],
            mean_ms=float(s["mean_ms"]),
            std_ms=0.0 if zero_variance else float(s["std_ms"]),
        )
        for s in link["stages"]
    )
    return LinkModel(
        stages=stages,
        p_loss=0.0 if zero_variance else float(link["p_loss"]),
        p_error=0.0 if zero_variance else float(link["p_error"]),
        p_unavailable=0.0 if zero_variance else float(link["p_unavailable"]),
        max_retransmissions=int(link["max_retransmissions"]),
    )


def slice_config(config: dict) -> SliceConfig:
    s = config["slice"]
    return SliceConfig(
        reliability=float(s["reliability"]),
        compute_units=float(s["compute_units"]),
        latency_ms=float(s["latency_ms"]),
        bandwidth_mbps=float(s["bandwidth_mbps"]),
    )


def scheduler_weights(config: dict) -> SchedulerWeights:
    s = config["scheduler"]
    return SchedulerWeights(w_u=float(s["w_u"]), w_r=float(s["w_r"]), w_l=float(s["w_l"]))


def alert_rules(config: dict) -> tuple:
    return tuple(
        AlertRule(channel=a["channel"], low=float(a["low"]), high=float(a["high"]))
        for a in config["alerts"]
    )


def resource_specs(config: dict) -> tuple:
    return tuple(
        ResourceSpec(
            name=r["name"],
            mean=float(r["mean"]),
            std=float(r["std"]),
            threshold=float(r["threshold"]),
            percentage=bool(r.get("percentage", True)),
        )
        for r in config["resources"]
    )


def pipeline_config(config: dict, seed: int, zero_variance: bool = False) -> PipelineConfig:
    stages = config["pipeline"]

    def stage(name: str) -> LatencyModel:
        s = stages[name]
        return LatencyModel(
            name=name,
            mean_ms=float(s["mean_ms"]),
            std_ms=0.0 if zero_variance else float(s["std_ms"]),
        )

    return PipelineConfig(
        window=int(config["signal"]["window"]),
        stride=int(config["signal"]["stride"]),
        link=link_model(config, zero_variance),
        slice_config=slice_config(config),
        scheduler=scheduler_weights(config),
        alert_rules=alert_rules(config),
        collection=stage("collection"),
        edge=stage("edge"),
        inference=stage("inference"),
        seed=seed,
    )
