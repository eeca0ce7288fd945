"""Command-line entry point.

Five subcommands cover the full workflow: ``synth`` writes signal data,
``train`` fits and saves a predictor, ``simulate`` drives the end-to-end
pipeline, ``netbench`` exercises the network-layer primitives, and
``report`` rebuilds metrics from saved traces. Every subcommand prints
its effective seed and the hash of its effective configuration, and the
same (seed, config) pair always writes byte-identical artifacts.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys

import numpy as np

from . import config as cfg
from .errors import (
    ConfigError,
    DataFormatError,
    InfeasibleAllocationError,
    InsufficientDataError,
    NumericError,
    ShapeError,
)
from .metrics import paired_ttest
from .model import Model, model_init
from .netslice import (
    AllocationProblem,
    Packet,
    QosSpec,
    allocate_exact,
    allocate_greedy,
    make_packet_stream,
    priority,
    qos_check,
    reliability,
    schedule,
    simulate_link,
)
from .pipeline import (
    STAGE_ORDER,
    StageStats,
    alerts_to_csv,
    run,
    stage_stats,
    summarize_ms,
    trace_to_csv,
    track_resources,
)
from .preprocessing import NormStats, fit_normalizer, make_windows, normalize_array, split
from .report import compute_metrics, latency_table, render_report
from .series import generate_synthetic, load_series_csv
from .training import LrSchedule, history_to_csv, hyperparameter_search, train, trials_to_csv

EXIT_CODES = (
    (ConfigError, 2),
    (DataFormatError, 3),
    (InsufficientDataError, 4),
    (ShapeError, 5),
    (NumericError, 6),
    (InfeasibleAllocationError, 7),
    (OSError, 8),
)

_EPILOG = """\
exit codes:
  0  success
  2  bad arguments or configuration
  3  malformed data or config file
  4  not enough data for the requested operation
  5  array shape mismatch
  6  numeric failure (non-finite values, undefined normalization)
  7  infeasible slice allocation
  8  filesystem error
"""


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", metavar="PATH", help="JSON config merged over the defaults")
    sub.add_argument("--seed", type=int, default=0, help="random seed (default: 0)")
    sub.add_argument("--out", metavar="DIR", default=".", help="output directory (default: .)")
    sub.add_argument(
        "--format", choices=("csv", "json"), default="json", help="report format (default: json)"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vitalslice",
        description="Vital-sign forecasting over a simulated low-latency network slice.",
        epilog=_EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic vital-sign CSV")
    _add_common(p)
    p.add_argument("--duration", type=float, default=None, help="seconds of signal to generate")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("train", help="train a predictor and save model + history")
    _add_common(p)
    p.add_argument("--data", metavar="PATH", help="input series CSV (default: synthesize one)")
    p.add_argument("--epochs", type=int, default=None, help="override training epochs")
    p.add_argument(
        "--trials", type=int, default=None, help="hyperparameter search trials before the final fit"
    )
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("simulate", help="run the end-to-end monitoring pipeline")
    _add_common(p)
    p.add_argument("--windows", type=int, default=None, help="simulate exactly this many windows")
    p.add_argument("--model", metavar="PATH", help="model JSON from a train run")
    p.add_argument("--norm", metavar="PATH", help="normalization JSON from a train run")
    p.add_argument(
        "--zero-variance",
        action="store_true",
        help="freeze every latency stage at its mean and disable packet failures",
    )
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("netbench", help="allocation, scheduling, and reliability benchmarks")
    _add_common(p)
    p.set_defaults(fn=cmd_netbench)

    p = sub.add_parser("report", help="rebuild metrics and latency tables from a trace CSV")
    _add_common(p)
    p.add_argument("--trace", metavar="PATH", required=True, help="trace CSV from a simulate run")
    p.add_argument(
        "--compare", metavar="PATH", help="second trace; adds a paired t-test on total latency"
    )
    p.set_defaults(fn=cmd_report)
    return parser


def _announce(args, config: dict) -> None:
    print(f"seed: {args.seed}")
    print(f"config: {cfg.config_hash(config)}")


def _write(out_dir: str, name: str, text: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    print(f"wrote {path}")
    return path


def _load_series(args, config: dict):
    signal = config["signal"]
    if getattr(args, "data", None):
        units = {c["name"]: c.get("unit", "") for c in signal["channels"]}
        # the parser takes a handle or CSV text, never a path
        with open(args.data, "r", encoding="utf-8", newline="") as fh:
            return load_series_csv(fh, sampling_rate_hz=signal["sampling_rate_hz"], units=units)
    duration = getattr(args, "duration", None)
    if duration is None:
        duration = signal["duration_s"]
    return generate_synthetic(
        cfg.channel_specs(config),
        duration_s=duration,
        sampling_rate_hz=signal["sampling_rate_hz"],
        seed=args.seed,
    )


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    config = cfg.load_config(args.config)
    _announce(args, config)
    series = _load_series(args, config)
    _write(args.out, "synthetic.csv", series.to_csv())
    print(f"samples: {series.n_samples} x {series.n_channels} @ {series.sampling_rate_hz} Hz")
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def _norm_to_json(stats: NormStats, channels) -> str:
    doc = {
        "version": 1,
        "channels": list(channels),
        "mean": [float(v) for v in stats.mean],
        "std": [float(v) for v in stats.std],
    }
    return json.dumps(doc, indent=2)


def norm_from_json(text: str) -> NormStats:
    try:
        doc = json.loads(text)
        return NormStats(mean=np.array(doc["mean"]), std=np.array(doc["std"]))
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DataFormatError(f"malformed normalization file: {exc}") from exc


def cmd_train(args) -> int:
    config = cfg.load_config(args.config)
    _announce(args, config)
    series = _load_series(args, config)
    signal, tr = config["signal"], config["training"]
    epochs = args.epochs if args.epochs is not None else int(tr["epochs"])
    trials = args.trials if args.trials is not None else int(tr["trials"])

    stats = fit_normalizer(series)
    normalized = normalize_array(series.data, stats)
    ws = make_windows(normalized, signal["window"], signal["stride"])
    vf = float(tr["val_fraction"])
    train_ws, val_ws, _ = split(ws, (1.0 - vf, vf, 0.0))
    if len(train_ws) < 1 or len(val_ws) < 1:
        raise InsufficientDataError(
            f"{len(ws)} windows cannot cover a train/validation split at "
            f"val_fraction {vf}; provide a longer series"
        )

    model_cfg = cfg.model_config(config, series.n_channels, args.seed)
    lr_max = float(tr["lr_max"])
    if trials > 0:
        space = cfg.search_space(config)
        model_cfg, records = hyperparameter_search(
            space,
            model_cfg,
            train_ws.windows,
            train_ws.targets,
            val_ws.windows,
            val_ws.targets,
            n_trials=trials,
            seed=args.seed,
            batch=int(tr["batch"]),
            lr_min=float(tr["lr_min"]),
            denorm=stats,
        )
        best = min(records, key=lambda r: (r.val_mae_pct, r.trial))
        lr_max = best.lr_max
        _write(args.out, "trials.csv", trials_to_csv(records))
        print(f"search winner: trial {best.trial} at {best.val_mae_pct!r}% validation MAE")

    lr_sched = LrSchedule(
        lr_min=min(float(tr["lr_min"]), lr_max), lr_max=lr_max, period=max(epochs, 1)
    )
    model = model_init(model_cfg)
    best_model, history = train(
        model,
        train_ws.windows,
        train_ws.targets,
        val_ws.windows,
        val_ws.targets,
        epochs=epochs,
        schedule=lr_sched,
        batch=int(tr["batch"]),
        patience=int(tr["patience"]),
        denorm=stats,
    )
    _write(args.out, "model.json", best_model.to_json())
    _write(args.out, "norm.json", _norm_to_json(stats, series.channel_names))
    _write(args.out, "history.csv", history_to_csv(history))
    best_mae = min(rec.val_mae_pct for rec in history)
    print(f"epochs run: {len(history)}")
    print(f"validation MAE%: {best_mae!r}")
    return 0


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def _load_model(args, config: dict, series) -> tuple[Model, NormStats]:
    if args.model:
        with open(args.model, "r", encoding="utf-8") as fh:
            model = Model.from_json(fh.read())
    else:
        model = model_init(cfg.model_config(config, series.n_channels, args.seed))
    if args.norm:
        with open(args.norm, "r", encoding="utf-8") as fh:
            stats = norm_from_json(fh.read())
    else:
        stats = fit_normalizer(series)
    return model, stats


def _allocation_preflight(config: dict) -> None:
    """Reject runs whose configured slice demand cannot be packed at all."""
    s = config["slice"]
    requests = s["requests_mbps"]
    if requests is None:
        return
    nodes = s["node_capacity_mbps"]
    if nodes is None:
        nodes = [s["bandwidth_mbps"]]
    demand = np.asarray(requests, dtype=np.float64)
    power = np.ones((demand.shape[0], len(nodes)))
    allocation = allocate_exact(
        AllocationProblem(power=power, bandwidth_req=demand, capacity=np.asarray(nodes))
    )
    print(f"slice allocation: {list(allocation.assignment)}")


def cmd_simulate(args) -> int:
    config = cfg.load_config(args.config)
    _announce(args, config)
    signal = config["signal"]
    if args.windows is not None:
        if args.windows < 1:
            raise ConfigError(f"--windows must be >= 1, got {args.windows}")
        rate, w, s = signal["sampling_rate_hz"], signal["window"], signal["stride"]
        args.duration = (w + s * (args.windows - 1) + 1) / rate
    else:
        args.duration = None
    series = _load_series(args, config)

    _allocation_preflight(config)
    model, stats = _load_model(args, config, series)
    pcfg = cfg.pipeline_config(config, args.seed, zero_variance=args.zero_variance)
    trace = run(pcfg, series, model, stats)
    delivered = trace.delivered_windows
    print(f"windows: {trace.n_windows} simulated, {len(delivered)} delivered")

    _write(args.out, "trace.csv", trace_to_csv(trace))
    _write(args.out, "alerts.csv", alerts_to_csv(trace))
    stats_rows = stage_stats(trace)
    table = latency_table(stats_rows)
    _write(args.out, "latency.csv", table.csv)

    resources = track_resources(trace, cfg.resource_specs(config), seed=args.seed)
    res_lines = ["resource,average,peak,threshold,exceedances"]
    for row in resources.rows:
        res_lines.append(
            f"{row.name},{row.average!r},{row.peak!r},{row.threshold!r},{row.exceedances}"
        )
    _write(args.out, "resources.csv", "\n".join(res_lines) + "\n")

    metrics = None
    predicted = [w for w in delivered if w.prediction is not None]
    if predicted:
        y_true = np.array([w.truth for w in predicted])
        y_pred = np.array([w.prediction for w in predicted])
        metrics = compute_metrics(y_true, y_pred, trace.channels, cfg.alert_rules(config))
    report = render_report(metrics=metrics, latency=stats_rows, fmt=args.format)
    _write(args.out, f"report.{args.format}", report)
    print(table.text)
    return 0


# ---------------------------------------------------------------------------
# netbench
# ---------------------------------------------------------------------------

N_ALLOC_INSTANCES = 20
N_BENCH_PACKETS = 200


def _csv_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        return "|".join(str(v) for v in value)
    return str(value)


def _allocation_instance(seed: int, index: int) -> AllocationProblem:
    rng = np.random.default_rng((seed, index))
    n = int(rng.integers(2, 6))
    m = int(rng.integers(2, 4))
    power = rng.uniform(1.0, 10.0, size=(n, m))
    demand = rng.uniform(1.0, 4.0, size=n)
    capacity = rng.uniform(2.0, 6.0, size=m)
    # one node can always absorb the whole demand, so the greedy heuristic
    # never dead-ends and the gap against the optimum stays meaningful
    capacity[int(rng.integers(m))] = demand.sum() * float(rng.uniform(1.0, 1.3))
    return AllocationProblem(power=power, bandwidth_req=demand, capacity=capacity)


def _bench_allocations(seed: int) -> list[dict]:
    rows = []
    for i in range(N_ALLOC_INSTANCES):
        problem = _allocation_instance(seed, i)
        exact = allocate_exact(problem)
        greedy = allocate_greedy(problem)
        gap = (greedy.total_power - exact.total_power) / exact.total_power * 100.0
        rows.append(
            {
                "instance": i,
                "requests": problem.n_requests,
                "nodes": problem.n_nodes,
                "exact_power": exact.total_power,
                "greedy_power": greedy.total_power,
                "gap_pct": gap,
            }
        )
    return rows


def _bench_schedule(weights) -> list[dict]:
    packets = [
        Packet(0, 0.0, 200, urgency=0.9, reliability_req=0.9, latency_req=0.9),
        Packet(1, 0.0, 200, urgency=0.1, reliability_req=0.2, latency_req=0.3),
        Packet(2, 0.0, 200, urgency=0.5, reliability_req=0.5, latency_req=0.5),
        Packet(3, 0.0, 200, urgency=0.9, reliability_req=0.1, latency_req=0.1),
        Packet(4, 0.0, 200, urgency=0.2, reliability_req=0.9, latency_req=0.9),
    ]
    ordered = schedule(packets, weights)
    return [
        {
            "rank": rank,
            "packet_id": p.packet_id,
            "urgency": p.urgency,
            "priority": priority(p, weights),
        }
        for rank, p in enumerate(ordered)
    ]


def _bench_reliability(link) -> list[dict]:
    rows = []
    for p in np.linspace(0.0, 1.0, 11):
        p = float(p)
        varied = dataclasses.replace(link, p_error=p, p_loss=p, p_unavailable=p)
        rows.append(
            {
                "p_each": p,
                "per_attempt": reliability(p, p, p),
                "with_retries": varied.delivery_probability(),
            }
        )
    return rows


def cmd_netbench(args) -> int:
    config = cfg.load_config(args.config)
    _announce(args, config)
    weights = cfg.scheduler_weights(config)
    link = cfg.link_model(config)
    slice_cfg = cfg.slice_config(config)

    alloc_rows = _bench_allocations(args.seed)
    sched_rows = _bench_schedule(weights)
    rel_rows = _bench_reliability(link)

    packets = make_packet_stream(N_BENCH_PACKETS, seed=args.seed)
    log = simulate_link(
        packets, link, weights, seed=args.seed, bandwidth_mbps=slice_cfg.bandwidth_mbps
    )
    measurement = log.measurement()
    spec = QosSpec(
        min_reliability=slice_cfg.reliability,
        max_latency_ms=slice_cfg.latency_ms,
        bandwidth_mbps=slice_cfg.bandwidth_mbps,
    )
    verdict = qos_check(measurement, spec)
    link_row = {
        "packets": log.n_packets,
        "delivered_fraction": measurement.reliability,
        "mean_latency_ms": measurement.latency_ms,
        "jitter_ms": measurement.jitter_ms,
        "bandwidth_mbps": measurement.bandwidth_mbps,
        "qos_pass": verdict.passed,
        "violations": list(verdict.violations),
    }

    mean_gap = float(np.mean([r["gap_pct"] for r in alloc_rows]))
    if args.format == "json":
        doc = {
            "version": 1,
            "allocation": alloc_rows,
            "mean_gap_pct": mean_gap,
            "scheduler": sched_rows,
            "reliability": rel_rows,
            "link": link_row,
        }
        _write(args.out, "netbench.json", json.dumps(doc, indent=2) + "\n")
    else:
        sections = []
        for title, rows in (
            ("allocation", alloc_rows),
            ("scheduler", sched_rows),
            ("reliability", rel_rows),
            ("link", [link_row]),
        ):
            keys = list(rows[0])
            lines = [f"[{title}]", ",".join(keys)]
            for row in rows:
                lines.append(",".join(_csv_cell(row[k]) for k in keys))
            sections.append("\n".join(lines))
        sections.append(f"[summary]\nmean_gap_pct\n{mean_gap!r}")
        _write(args.out, "netbench.csv", "\n\n".join(sections) + "\n")

    print(f"allocation instances: {len(alloc_rows)}, mean greedy gap {mean_gap!r}%")
    state = "pass" if verdict.passed else "fail: " + ",".join(verdict.violations)
    print(f"link qos: {state}")
    return 0


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


def _read_trace_csv(path: str):
    """Rows of a simulate-run trace, with per-window stage timings."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        needed = ["window", "created_ms"] + [f"{s}_ms" for s in STAGE_ORDER]
        needed += ["total_ms", "delivered", "quality_ok"]
        for column in needed:
            if column not in fields:
                raise DataFormatError(f"trace {path}: missing column {column!r}")
        channels = tuple(f[len("pred_") :] for f in fields if f.startswith("pred_"))
        rows = list(reader)
    return channels, rows


def _trace_stats(rows) -> tuple:
    delivered = [r for r in rows if r["delivered"] == "1"]
    if not delivered:
        raise InsufficientDataError("trace has no delivered windows to summarize")
    out = []
    for stage in STAGE_ORDER:
        out.append(StageStats(stage, *summarize_ms(float(r[f"{stage}_ms"]) for r in delivered)))
    out.append(StageStats("total", *summarize_ms(float(r["total_ms"]) for r in delivered)))
    return tuple(out)


def cmd_report(args) -> int:
    config = cfg.load_config(args.config)
    _announce(args, config)
    channels, rows = _read_trace_csv(args.trace)
    stats_rows = _trace_stats(rows)

    metrics = None
    predicted = [r for r in rows if r["delivered"] == "1" and r[f"pred_{channels[0]}"] != ""]
    if channels and predicted:
        y_pred = np.array([[float(r[f"pred_{c}"]) for c in channels] for r in predicted])
        y_true = np.array([[float(r[f"true_{c}"]) for c in channels] for r in predicted])
        metrics = compute_metrics(y_true, y_pred, channels, cfg.alert_rules(config))

    stat_tests = None
    if args.compare:
        _, other_rows = _read_trace_csv(args.compare)
        mine = {r["window"]: float(r["total_ms"]) for r in rows if r["delivered"] == "1"}
        theirs = {r["window"]: float(r["total_ms"]) for r in other_rows if r["delivered"] == "1"}
        common = sorted(set(mine) & set(theirs), key=int)
        if len(common) < 2:
            raise InsufficientDataError(
                f"traces share {len(common)} delivered windows; need >= 2 for a paired test"
            )
        result = paired_ttest([mine[k] for k in common], [theirs[k] for k in common])
        stat_tests = [("total_ms: trace vs compare", result)]
        print(
            f"paired t-test over {len(common)} windows: t={result.t!r} "
            f"p={result.p!r} d={result.cohens_d!r}"
        )

    report = render_report(metrics=metrics, latency=stats_rows, stat_tests=stat_tests, fmt=args.format)
    _write(args.out, f"report.{args.format}", report)
    print(latency_table(stats_rows).text)
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except tuple(exc for exc, _ in EXIT_CODES) as err:
        for exc_type, code in EXIT_CODES:
            if isinstance(err, exc_type):
                print(f"error: {err}", file=sys.stderr)
                return code
        raise  # unreachable


if __name__ == "__main__":
    sys.exit(main())
