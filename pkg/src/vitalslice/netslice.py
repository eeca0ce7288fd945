"""Ultra-reliable low-latency slice model.

Covers QoS admission against inclusive bounds, power-minimizing assignment
of bandwidth requests to nodes (exhaustive and greedy solvers), weighted
priority scheduling, latency composition, link reliability, and a seeded
discrete-event transmission simulation with retransmissions and a
bandwidth gate.
"""

from __future__ import annotations

import heapq
import itertools
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InfeasibleAllocationError, ShapeError
from .validation import check_probability


# ---------------------------------------------------------------------------
# Slice and QoS types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SliceConfig:
    """The slice contract: reliability R, compute C, latency bound L (ms),
    bandwidth B (Mbps)."""

    reliability: float = 0.99999
    compute_units: float = 100.0
    latency_ms: float = 1.0
    bandwidth_mbps: float = 10.0

    def __post_init__(self):
        if not 0.0 < self.reliability <= 1.0:
            raise ConfigError(
                f"reliability must lie in (0, 1], got {self.reliability}"
            )
        for name in ("compute_units", "latency_ms", "bandwidth_mbps"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0, got {getattr(self, name)}")


@dataclass(frozen=True)
class QosSpec:
    min_reliability: float = 0.99999
    max_latency_ms: float = 1.0
    bandwidth_mbps: float = 10.0
    max_jitter_ms: float = 0.1

    def __post_init__(self):
        for name in (
            "min_reliability",
            "max_latency_ms",
            "bandwidth_mbps",
            "max_jitter_ms",
        ):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0, got {getattr(self, name)}")


@dataclass(frozen=True)
class QosMeasurement:
    reliability: float = 0.0
    latency_ms: float = 0.0
    jitter_ms: float = 0.0
    bandwidth_mbps: float = 0.0

    def __post_init__(self):
        for name in ("reliability", "latency_ms", "jitter_ms", "bandwidth_mbps"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")


@dataclass(frozen=True)
class QosVerdict:
    passed: bool
    violations: tuple


def qos_check(measurement: QosMeasurement, spec: QosSpec) -> QosVerdict:
    """All four bounds are inclusive; a measurement exactly at a bound passes."""
    violations = []
    if not measurement.reliability >= spec.min_reliability:
        violations.append("reliability")
    if not measurement.latency_ms <= spec.max_latency_ms:
        violations.append("latency")
    if not measurement.jitter_ms <= spec.max_jitter_ms:
        violations.append("jitter")
    if not measurement.bandwidth_mbps <= spec.bandwidth_mbps:
        violations.append("bandwidth")
    return QosVerdict(passed=not violations, violations=tuple(violations))


# ---------------------------------------------------------------------------
# Resource allocation
# ---------------------------------------------------------------------------

EXACT_GUARD = 10**6


@dataclass(frozen=True)
class AllocationProblem:
    """power: (requests, nodes) cost matrix; bandwidth_req per request;
    capacity per node."""

    power: np.ndarray
    bandwidth_req: np.ndarray
    capacity: np.ndarray

    def __post_init__(self):
        power = np.asarray(self.power, dtype=np.float64)
        b_req = np.asarray(self.bandwidth_req, dtype=np.float64)
        cap = np.asarray(self.capacity, dtype=np.float64)
        if power.ndim != 2 or power.shape[0] < 1 or power.shape[1] < 1:
            raise ShapeError("power matrix must be (requests >= 1, nodes >= 1)")
        if b_req.shape != (power.shape[0],):
            raise ShapeError("bandwidth_req length must equal the request count")
        if cap.shape != (power.shape[1],):
            raise ShapeError("capacity length must equal the node count")
        if (power < 0).any() or (b_req < 0).any() or (cap < 0).any():
            raise ConfigError("costs, demands, and capacities must all be >= 0")
        object.__setattr__(self, "power", power)
        object.__setattr__(self, "bandwidth_req", b_req)
        object.__setattr__(self, "capacity", cap)

    @property
    def n_requests(self) -> int:
        return self.power.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.power.shape[1]


@dataclass(frozen=True)
class Allocation:
    """assignment[i] = node chosen for request i."""

    assignment: tuple
    total_power: float


def _feasible(problem: AllocationProblem, assignment) -> tuple:
    """Node indices pushed over capacity by this assignment (empty = ok)."""
    load = np.zeros(problem.n_nodes)
    for i, j in enumerate(assignment):
        load[j] += problem.bandwidth_req[i]
    over = np.nonzero(load > problem.capacity)[0]
    return tuple(int(j) for j in over)


def allocate_exact(problem: AllocationProblem) -> Allocation:
    """Exhaustive minimum-power assignment.

    Guarded at nodes**requests <= 10^6 candidate assignments. Ties resolve
    to the lexicographically smallest assignment vector. When nothing is
    feasible, the error names the binding nodes of the assignment that came
    closest (fewest over-capacity nodes).
    """
    n, m = problem.n_requests, problem.n_nodes
    if m**n > EXACT_GUARD:
        raise ConfigError(
            f"exhaustive search of {m}^{n} assignments exceeds the "
            f"{EXACT_GUARD} guard; use allocate_greedy"
        )
    best = None
    best_power = np.inf
    closest = None
    for assignment in itertools.product(range(m), repeat=n):
        over = _feasible(problem, assignment)
        if over:
            if closest is None or len(over) < len(closest):
                closest = over
            continue
        power = float(sum(problem.power[i, j] for i, j in enumerate(assignment)))
        # strict improvement only: product() yields lexicographic order,
        # so the first optimum seen is the lexicographically smallest
        if power < best_power:
            best_power = power
            best = assignment
    if best is None:
        raise InfeasibleAllocationError(
            "no assignment satisfies the node capacities",
            binding_nodes=closest or (),
        )
    return Allocation(assignment=best, total_power=best_power)


def allocate_greedy(problem: AllocationProblem) -> Allocation:
    """Largest-demand-first heuristic: each request takes the feasible node
    of minimum power (lowest index on ties)."""
    order = sorted(
        range(problem.n_requests), key=lambda i: (-problem.bandwidth_req[i], i)
    )
    residual = problem.capacity.copy()
    assignment = [0] * problem.n_requests
    total = 0.0
    for i in order:
        feasible = [j for j in range(problem.n_nodes) if problem.bandwidth_req[i] <= residual[j]]
        if not feasible:
            raise InfeasibleAllocationError(
                f"request {i} (demand {problem.bandwidth_req[i]}) fits no "
                "node's remaining capacity",
                binding_nodes=tuple(range(problem.n_nodes)),
            )
        j = min(feasible, key=lambda j: (problem.power[i, j], j))
        assignment[i] = j
        residual[j] -= problem.bandwidth_req[i]
        total += float(problem.power[i, j])
    return Allocation(assignment=tuple(assignment), total_power=total)


# ---------------------------------------------------------------------------
# Packets and scheduling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Packet:
    """One transmission unit with normalized urgency/reliability/latency
    factors used by the priority scheduler."""

    packet_id: int
    creation_ms: float
    payload_bytes: int
    urgency: float = 0.5
    reliability_req: float = 0.5
    latency_req: float = 0.5

    def __post_init__(self):
        if self.payload_bytes <= 0:
            raise ConfigError(f"payload_bytes must be > 0, got {self.payload_bytes}")
        if self.creation_ms < 0:
            raise ConfigError(f"creation_ms must be >= 0, got {self.creation_ms}")
        check_probability(self.urgency, "urgency")
        check_probability(self.reliability_req, "reliability_req")
        check_probability(self.latency_req, "latency_req")


@dataclass(frozen=True)
class SchedulerWeights:
    """Urgency/reliability/latency weights, normalized to sum to 1."""

    w_u: float = 0.5
    w_r: float = 0.3
    w_l: float = 0.2

    def __post_init__(self):
        if self.w_u < 0 or self.w_r < 0 or self.w_l < 0:
            raise ConfigError("scheduler weights must be >= 0")
        total = self.w_u + self.w_r + self.w_l
        if total == 0:
            raise ConfigError("at least one scheduler weight must be positive")
        object.__setattr__(self, "w_u", self.w_u / total)
        object.__setattr__(self, "w_r", self.w_r / total)
        object.__setattr__(self, "w_l", self.w_l / total)


def priority(packet: Packet, weights: SchedulerWeights) -> float:
    """Weighted urgency score; higher dequeues first."""
    return (
        weights.w_u * packet.urgency
        + weights.w_r * packet.reliability_req
        + weights.w_l * packet.latency_req
    )


def schedule(packets, weights: SchedulerWeights) -> list:
    """Dequeue order: descending priority, ties FIFO by creation, then id."""
    return sorted(
        packets,
        key=lambda p: (-priority(p, weights), p.creation_ms, p.packet_id),
    )


# ---------------------------------------------------------------------------
# Latency and reliability arithmetic
# ---------------------------------------------------------------------------


def e2e_latency(stages) -> float:
    """Correctly rounded sum of per-stage latencies (ms); any count >= 1.

    fsum keeps the headline stage mix (2.3 + 0.8 + 4.2 + 7.1) at exactly
    14.4 instead of drifting an ulp through sequential addition.
    """
    stages = [float(v) for v in stages]
    if not stages:
        raise ConfigError("at least one latency stage is required")
    for value in stages:
        if value < 0:
            raise ConfigError(f"stage latency must be >= 0, got {value}")
    return math.fsum(stages)


def reliability(p_error: float, p_loss: float, p_unavailable: float) -> float:
    """(1 - P_e)(1 - P_l)(1 - P_u)."""
    check_probability(p_error, "p_error")
    check_probability(p_loss, "p_loss")
    check_probability(p_unavailable, "p_unavailable")
    return (1.0 - p_error) * (1.0 - p_loss) * (1.0 - p_unavailable)


# ---------------------------------------------------------------------------
# Link model and discrete-event simulation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LatencyModel:
    """Zero-truncated normal latency stage; std 0 degenerates to the mean."""

    name: str
    mean_ms: float
    std_ms: float = 0.0

    def __post_init__(self):
        if self.mean_ms < 0 or self.std_ms < 0:
            raise ConfigError(f"stage {self.name}: mean and std must be >= 0")

    def sample(self, rng: np.random.Generator) -> float:
        if self.std_ms == 0.0:
            return self.mean_ms
        return max(0.0, float(rng.normal(self.mean_ms, self.std_ms)))


@dataclass(frozen=True)
class LinkModel:
    """Named latency stages plus per-attempt failure probabilities."""

    stages: tuple = (
        LatencyModel("uplink", 0.8, 0.2),
        LatencyModel("transport", 0.0, 0.0),
        LatencyModel("processing", 0.0, 0.0),
    )
    p_loss: float = 0.0
    p_error: float = 0.0
    p_unavailable: float = 0.0
    max_retransmissions: int = 0

    def __post_init__(self):
        stages = tuple(self.stages)
        if not stages:
            raise ConfigError("a link needs at least one latency stage")
        object.__setattr__(self, "stages", stages)
        check_probability(self.p_loss, "p_loss")
        check_probability(self.p_error, "p_error")
        check_probability(self.p_unavailable, "p_unavailable")
        if self.max_retransmissions < 0:
            raise ConfigError(
                f"max_retransmissions must be >= 0, got {self.max_retransmissions}"
            )

    @property
    def stage_names(self) -> tuple:
        return tuple(stage.name for stage in self.stages)

    def delivery_probability(self) -> float:
        """Closed-form chance a packet survives within the retry budget."""
        per_attempt = reliability(self.p_error, self.p_loss, self.p_unavailable)
        return 1.0 - (1.0 - per_attempt) ** (self.max_retransmissions + 1)


@dataclass(frozen=True)
class PacketOutcome:
    packet_id: int
    delivered: bool
    creation_ms: float
    payload_bytes: int
    queue_ms: float
    stage_ms: tuple  # summed over attempts, aligned with LinkModel.stages
    attempts: int
    loss_events: int
    error_events: int
    unavailable_events: int

    @property
    def total_ms(self) -> float:
        return math.fsum((self.queue_ms, *self.stage_ms))

    @property
    def delivery_time_ms(self):
        if not self.delivered:
            return None
        return self.creation_ms + self.total_ms


@dataclass(frozen=True)
class TransmissionLog:
    outcomes: tuple
    stage_names: tuple

    @property
    def n_packets(self) -> int:
        return len(self.outcomes)

    @property
    def delivered(self) -> tuple:
        return tuple(o for o in self.outcomes if o.delivered)

    @property
    def delivered_fraction(self) -> float:
        if not self.outcomes:
            return 0.0
        return len(self.delivered) / len(self.outcomes)

    @property
    def mean_latency_ms(self) -> float:
        done = self.delivered
        if not done:
            return 0.0
        totals = [o.total_ms for o in done]
        if min(totals) == max(totals):
            return totals[0]  # exact for degenerate (zero-variance) links
        return math.fsum(totals) / len(totals)

    @property
    def jitter_ms(self) -> float:
        """Population standard deviation of delivered packet latencies."""
        done = self.delivered
        if not done:
            return 0.0
        mean = self.mean_latency_ms
        return math.sqrt(math.fsum((o.total_ms - mean) ** 2 for o in done) / len(done))

    def measurement(self) -> QosMeasurement:
        """Observed QoS: delivery rate, mean latency, jitter, throughput."""
        done = self.delivered
        bandwidth = 0.0
        if done:
            span = max(o.delivery_time_ms for o in done) - min(
                o.creation_ms for o in self.outcomes
            )
            if span > 0:
                payload = sum(o.payload_bytes for o in done)
                bandwidth = payload / span * 0.008  # bytes/ms -> Mbps
        return QosMeasurement(
            reliability=self.delivered_fraction,
            latency_ms=self.mean_latency_ms,
            jitter_ms=self.jitter_ms,
            bandwidth_mbps=bandwidth,
        )

    def to_csv(self) -> str:
        header = ["packet_id", "outcome", "queue_ms"]
        header.extend(f"{name}_ms" for name in self.stage_names)
        header.extend(
            ["attempts", "loss_events", "error_events", "unavailable_events", "total_ms"]
        )
        lines = [",".join(header)]
        for o in self.outcomes:
            row = [str(o.packet_id), "delivered" if o.delivered else "dropped", repr(o.queue_ms)]
            row.extend(repr(v) for v in o.stage_ms)
            row.extend(
                [
                    str(o.attempts),
                    str(o.loss_events),
                    str(o.error_events),
                    str(o.unavailable_events),
                    repr(o.total_ms),
                ]
            )
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"


def simulate_link(
    packets,
    link: LinkModel,
    weights: SchedulerWeights,
    seed: int,
    bandwidth_mbps: float = 10.0,
) -> TransmissionLog:
    """Seeded discrete-event transmission of a time-ordered packet list.

    Packets wait in a priority queue (see schedule()) until the bandwidth
    gate admits them: concurrent in-flight payload is capped at the
    allocation's byte budget (Mbps * 125 bytes/ms), with a lone oversized
    packet allowed through an idle link. Admission is strictly head of
    line. Each attempt samples every stage latency, then independent loss,
    error, and unavailability draws; any failure triggers a retransmission
    until the budget is exhausted, after which the packet drops. At equal
    event times completions are processed before admissions.
    """
    packets = list(packets)
    for earlier, later in zip(packets, packets[1:]):
        if later.creation_ms < earlier.creation_ms:
            raise ConfigError("packets must be ordered by creation time")
    if len({p.packet_id for p in packets}) != len(packets):
        raise ConfigError("packet ids must be unique")
    if bandwidth_mbps <= 0:
        raise ConfigError(f"bandwidth_mbps must be > 0, got {bandwidth_mbps}")
    rng = np.random.default_rng(seed)
    cap_bytes = bandwidth_mbps * 125.0  # Mbps -> bytes per millisecond
    arrivals = deque(packets)
    pending = []  # heap of (-score, creation, id, packet)
    inflight = []  # heap of (finish time, admit seq, packet id, bytes)
    inflight_bytes = 0.0
    admit_seq = 0
    outcomes = {}

    def admit(now: float) -> None:
        nonlocal inflight_bytes, admit_seq
        while pending:
            _, _, _, pkt = pending[0]
            if inflight_bytes > 0 and inflight_bytes + pkt.payload_bytes > cap_bytes:
                return  # head of line blocked; nothing behind it may pass
            heapq.heappop(pending)
            queue_ms = now - pkt.creation_ms
            stage_totals = [0.0] * len(link.stages)
            attempts = 0
            losses = errors = unavail = 0
            delivered = False
            span = 0.0
            while attempts <= link.max_retransmissions:
                attempts += 1
                for idx, stage in enumerate(link.stages):
                    sampled = stage.sample(rng)
                    stage_totals[idx] += sampled
                    span += sampled
                lost = rng.random() < link.p_loss
                errored = rng.random() < link.p_error
                down = rng.random() < link.p_unavailable
                losses += int(lost)
                errors += int(errored)
                unavail += int(down)
                if not (lost or errored or down):
                    delivered = True
                    break
            outcomes[pkt.packet_id] = PacketOutcome(
                packet_id=pkt.packet_id,
                delivered=delivered,
                creation_ms=pkt.creation_ms,
                payload_bytes=pkt.payload_bytes,
                queue_ms=queue_ms,
                stage_ms=tuple(stage_totals),
                attempts=attempts,
                loss_events=losses,
                error_events=errors,
                unavailable_events=unavail,
            )
            inflight_bytes += pkt.payload_bytes
            heapq.heappush(
                inflight, (now + span, admit_seq, pkt.packet_id, pkt.payload_bytes)
            )
            admit_seq += 1

    while arrivals or pending or inflight:
        t_arrival = arrivals[0].creation_ms if arrivals else np.inf
        t_finish = inflight[0][0] if inflight else np.inf
        if t_finish <= t_arrival:
            now, _, _, nbytes = heapq.heappop(inflight)
            inflight_bytes -= nbytes
        else:
            pkt = arrivals.popleft()
            now = pkt.creation_ms
            heapq.heappush(
                pending,
                (-priority(pkt, weights), pkt.creation_ms, pkt.packet_id, pkt),
            )
        admit(now)

    ordered = tuple(outcomes[p.packet_id] for p in packets)
    return TransmissionLog(outcomes=ordered, stage_names=link.stage_names)


def make_packet_stream(
    n: int,
    seed: int,
    interval_ms: float = 20.0,
    payload_bytes: int = 200,
) -> list:
    """Seeded packet generator: exponential inter-arrival times with the
    given mean, uniform scheduling factors."""
    if n < 1:
        raise ConfigError(f"need n >= 1 packets, got {n}")
    if interval_ms <= 0:
        raise ConfigError(f"interval_ms must be > 0, got {interval_ms}")
    rng = np.random.default_rng(seed)
    gaps = rng.exponential(interval_ms, size=n)
    times = np.cumsum(gaps) - gaps[0]  # first packet at t=0
    factors = rng.uniform(0.0, 1.0, size=(n, 3))
    return [
        Packet(
            packet_id=i,
            creation_ms=float(times[i]),
            payload_bytes=payload_bytes,
            urgency=float(factors[i, 0]),
            reliability_req=float(factors[i, 1]),
            latency_req=float(factors[i, 2]),
        )
        for i in range(n)
    ]
