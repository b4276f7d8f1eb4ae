"""
COMPUTE-UTILIZATION SIMULATOR
Discrete-event model of one worker's training steps as a DAG of per-layer
forward / backward nodes plus per-layer reduce (communication) nodes.

Two resources:
- compute: serial pipeline, nodes run back-to-back in topological order
- network: reduce nodes run FIFO by ready time, ties broken by (step, layer)

Compute utilization = busy compute time / makespan.
"""

import heapq
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from core.errors import ConfigurationError, SimulationError
from core.logger import PerformanceLogger, get_logger
from training.paramspace import FragmentPattern
from training.schedule import calendar_for

logger = get_logger(__name__)

GBIT = 1e9
DEFAULT_CU_TARGETS = (0.5, 0.8, 0.9, 0.95, 0.99)


def default_bandwidth_grid() -> List[float]:
    """50 log-spaced points from 0.1 to 1000 Gbit/s."""
    return [float(b) for b in np.logspace(-1, 3, 50)]


# ============================================================================
# Configuration
# ============================================================================


class SimMethod(str, Enum):
    DATA_PARALLEL = "data_parallel"
    DILOCO = "diloco"
    STREAMING = "streaming"
    STREAMING_OVERLAP = "streaming_overlap"
    STREAMING_OVERLAP_FP4 = "streaming_overlap_fp4"


class SimConfig(BaseModel):
    """Hardware profile plus synchronization method for one simulation."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    num_layers: int = Field(ge=1)
    num_params: float = Field(gt=0)
    step_time: float = Field(gt=0, description="seconds of compute for one fwd+bwd step")
    bandwidth_gbits: float = Field(default=1.0, gt=0)
    link_latency: float = Field(default=0.0, ge=0)
    method: SimMethod = SimMethod.STREAMING_OVERLAP
    H: int = Field(default=100, ge=1)
    fragment_size: int = Field(default=3, ge=1)
    pattern: FragmentPattern = FragmentPattern.STRIDED
    tau: int = Field(default=1, ge=0)
    bits_per_value: Optional[int] = Field(default=None, ge=1, le=32)
    num_steps: int = Field(default=200, ge=1)

    @model_validator(mode="after")
    def _check_method(self):
        if self.method in (SimMethod.STREAMING, SimMethod.STREAMING_OVERLAP, SimMethod.STREAMING_OVERLAP_FP4):
            if self.num_layers % self.fragment_size:
                raise ValueError(
                    f"fragment_size {self.fragment_size} does not divide num_layers {self.num_layers}"
                )
            fragments = self.num_layers // self.fragment_size
            if self.H < fragments:
                raise ValueError(f"H ({self.H}) must be >= number of fragments ({fragments})")
        if self.method is SimMethod.STREAMING_OVERLAP or self.method is SimMethod.STREAMING_OVERLAP_FP4:
            if self.tau >= self.H:
                raise ValueError(f"overlap delay {self.tau} violates 0 <= tau < H (H={self.H})")
        return self

    @property
    def bytes_per_layer(self) -> float:
        return self.num_params * 4 / self.num_layers

    @property
    def bandwidth_bps(self) -> float:
        return self.bandwidth_gbits * GBIT

    @property
    def effective_bits(self) -> int:
        if self.bits_per_value is not None:
            return self.bits_per_value
        return 4 if self.method is SimMethod.STREAMING_OVERLAP_FP4 else 32

    @property
    def effective_tau(self) -> int:
        if self.method in (SimMethod.STREAMING_OVERLAP, SimMethod.STREAMING_OVERLAP_FP4):
            return self.tau
        return 0


# ============================================================================
# DAG
# ============================================================================


class NodeKind(str, Enum):
    FWD = "fwd"
    BWD_ACT = "bwd_act"
    BWD_PARAM = "bwd_param"
    REDUCE = "reduce"


@dataclass(frozen=True, order=True)
class SimNode:
    step: int
    kind: NodeKind
    layer: int

    @property
    def is_compute(self) -> bool:
        return self.kind is not NodeKind.REDUCE


def _order_key(node: SimNode, num_layers: int) -> Tuple[int, int, int]:
    L = num_layers
    if node.kind is NodeKind.FWD:
        return (node.step, 0, node.layer)
    if node.kind is NodeKind.BWD_ACT:
        return (node.step, 1, 2 * (L - node.layer))
    if node.kind is NodeKind.BWD_PARAM:
        return (node.step, 1, 2 * (L - node.layer) + 1)
    return (node.step, 2, node.layer)


@dataclass
class SimDag:
    """Typed node graph. Compute nodes carry a duration, reduce nodes a payload."""

    num_layers: int
    bandwidth_bps: float = math.inf
    link_latency: float = 0.0
    graph: nx.DiGraph = field(default_factory=nx.DiGraph)
    _plan: Optional["_Plan"] = field(default=None, repr=False, compare=False)

    def add_compute(self, node: SimNode, duration: float) -> SimNode:
        self.graph.add_node(node, duration=float(duration))
        self._plan = None
        return node

    def add_reduce(self, node: SimNode, payload_bits: float) -> SimNode:
        self.graph.add_node(node, payload_bits=float(payload_bits))
        self._plan = None
        return node

    def add_edge(self, src: SimNode, dst: SimNode) -> None:
        for n in (src, dst):
            if n not in self.graph:
                raise SimulationError(f"edge endpoint {n} is not a node")
        self.graph.add_edge(src, dst)
        self._plan = None

    def reduce_duration(self, node: SimNode) -> float:
        bits = self.graph.nodes[node]["payload_bits"]
        if math.isinf(self.bandwidth_bps):
            return self.link_latency
        return bits / self.bandwidth_bps + self.link_latency

    def retimed(self, bandwidth_bps: float, link_latency: Optional[float] = None) -> "SimDag":
        """Same structure (shared graph and plan) under a different network."""
        return SimDag(
            num_layers=self.num_layers,
            bandwidth_bps=bandwidth_bps,
            link_latency=self.link_latency if link_latency is None else link_latency,
            graph=self.graph,
            _plan=self.plan(),
        )

    @property
    def num_compute_nodes(self) -> int:
        return sum(1 for n in self.graph if n.is_compute)

    @property
    def num_reduce_nodes(self) -> int:
        return sum(1 for n in self.graph if not n.is_compute)

    def nodes_at_step(self, step: int, kind: Optional[NodeKind] = None) -> List[SimNode]:
        return sorted(
            n for n in self.graph if n.step == step and (kind is None or n.kind is kind)
        )

    @property
    def total_payload_bytes(self) -> float:
        return sum(
            data["payload_bits"] for n, data in self.graph.nodes(data=True) if not n.is_compute
        ) / 8

    def plan(self) -> "_Plan":
        if self._plan is None:
            self._plan = _Plan.compile(self)
        return self._plan


@dataclass(frozen=True)
class _Plan:
    """Index-based view of a SimDag, computed once and reused across bandwidths."""

    compute: Tuple[SimNode, ...]
    compute_duration: Tuple[float, ...]
    compute_preds: Tuple[Tuple[int, ...], ...]
    compute_reduce_preds: Tuple[Tuple[int, ...], ...]
    reduces: Tuple[SimNode, ...]
    reduce_preds: Tuple[Tuple[int, ...], ...]
    releases: Tuple[Tuple[int, ...], ...]

    @classmethod
    def compile(cls, dag: SimDag) -> "_Plan":
        g = dag.graph
        if not nx.is_directed_acyclic_graph(g):
            cycle = nx.find_cycle(g)
            raise SimulationError(f"dependency cycle through {cycle[0][0]}")
        order = list(
            nx.lexicographical_topological_sort(g, key=lambda n: _order_key(n, dag.num_layers))
        )
        compute = [n for n in order if n.is_compute]
        reduces = [n for n in order if not n.is_compute]
        c_index = {n: i for i, n in enumerate(compute)}
        r_index = {n: i for i, n in enumerate(reduces)}

        compute_preds, compute_reduce_preds = [], []
        for n in compute:
            preds = list(g.predecessors(n))
            compute_preds.append(tuple(c_index[p] for p in preds if p.is_compute))
            compute_reduce_preds.append(tuple(sorted(r_index[p] for p in preds if not p.is_compute)))

        releases: List[List[int]] = [[] for _ in compute]
        reduce_preds = []
        for r in reduces:
            preds = list(g.predecessors(r))
            if not preds:
                raise SimulationError(f"reduce node {r} has no producer")
            if any(not p.is_compute for p in preds):
                raise SimulationError(f"reduce node {r} depends on another reduce")
            idx = tuple(c_index[p] for p in preds)
            reduce_preds.append(idx)
            # released once its last producer (in compute order) finishes
            releases[max(idx)].append(r_index[r])

        return cls(
            compute=tuple(compute),
            compute_duration=tuple(g.nodes[n]["duration"] for n in compute),
            compute_preds=tuple(compute_preds),
            compute_reduce_preds=tuple(compute_reduce_preds),
            reduces=tuple(reduces),
            reduce_preds=tuple(reduce_preds),
            releases=tuple(tuple(r) for r in releases),
        )


def _layer_payload_bits(config: SimConfig) -> float:
    return config.bytes_per_layer * 8 * config.effective_bits / 32


def _reduce_schedule(config: SimConfig) -> Dict[int, List[Tuple[int, int]]]:
    """step -> [(layer, apply_step)] for every reduce event of the method."""
    L, T = config.num_layers, config.num_steps
    events: Dict[int, List[Tuple[int, int]]] = {}
    if config.method is SimMethod.DATA_PARALLEL:
        for t in range(1, T + 1):
            events[t] = [(l, t + 1) for l in range(1, L + 1)]
        return events

    if config.method is SimMethod.DILOCO:
        fragment_size, pattern = L, FragmentPattern.SEQUENTIAL
    else:
        fragment_size, pattern = config.fragment_size, config.pattern
    tau = config.effective_tau
    spec, calendar = calendar_for(L, fragment_size, pattern, T, config.H, [tau])
    for t, fragments in calendar.send_events.items():
        for p in fragments:
            for block in spec.fragments[p]:
                events.setdefault(t, []).append((block + 1, t + tau + 1))
    return events


def build_dag(config: SimConfig) -> SimDag:
    """One worker's num_steps training steps with the method's reduce nodes."""
    if not isinstance(config, SimConfig):
        raise ConfigurationError(f"expected SimConfig, got {type(config).__name__}")
    L, T = config.num_layers, config.num_steps
    node_time = config.step_time / (3 * L - 1)
    dag = SimDag(num_layers=L, bandwidth_bps=config.bandwidth_bps, link_latency=config.link_latency)

    fwd = lambda l, t: SimNode(t, NodeKind.FWD, l)  # noqa: E731
    bwd_act = lambda l, t: SimNode(t, NodeKind.BWD_ACT, l)  # noqa: E731
    bwd_param = lambda l, t: SimNode(t, NodeKind.BWD_PARAM, l)  # noqa: E731

    for t in range(1, T + 1):
        for l in range(1, L + 1):
            dag.add_compute(fwd(l, t), node_time)
            dag.add_compute(bwd_param(l, t), node_time)
            if l > 1:
                dag.add_compute(bwd_act(l, t), node_time)
        for l in range(1, L):
            dag.add_edge(fwd(l, t), fwd(l + 1, t))
        dag.add_edge(fwd(L, t), bwd_param(L, t))
        if L > 1:
            dag.add_edge(fwd(L, t), bwd_act(L, t))
        for l in range(L, 1, -1):
            dag.add_edge(bwd_act(l, t), bwd_param(l - 1, t))
            if l > 2:
                dag.add_edge(bwd_act(l, t), bwd_act(l - 1, t))

    for t in range(1, T):
        for l in range(1, L + 1):
            dag.add_edge(bwd_param(l, t), fwd(l, t + 1))

    payload = _layer_payload_bits(config)
    for t, layers in sorted(_reduce_schedule(config).items()):
        for l, apply_step in layers:
            reduce = dag.add_reduce(SimNode(t, NodeKind.REDUCE, l), payload)
            dag.add_edge(bwd_param(l, t), reduce)
            if apply_step <= T:
                dag.add_edge(reduce, fwd(l, apply_step))
    return dag


# ============================================================================
# Simulation
# ============================================================================


@dataclass(frozen=True)
class SimResult:
    makespan: float
    compute_busy: float
    cu: float
    network_busy: float
    bytes_total: float


def simulate(dag: SimDag) -> SimResult:
    plan = dag.plan()
    finish_c = [0.0] * len(plan.compute)
    finish_r: List[Optional[float]] = [None] * len(plan.reduces)
    ready_heap: List[Tuple[float, int, int, int]] = []
    compute_free = net_free = busy = net_busy = 0.0

    def run_next_reduce() -> None:
        nonlocal net_free, net_busy
        ready, _, _, r = heapq.heappop(ready_heap)
        duration = dag.reduce_duration(plan.reduces[r])
        start = max(net_free, ready)
        net_free = start + duration
        net_busy += duration
        finish_r[r] = net_free

    for c, duration in enumerate(plan.compute_duration):
        start = compute_free
        for r in plan.compute_reduce_preds[c]:
            while finish_r[r] is None:
                if not ready_heap:
                    raise SimulationError(f"{plan.compute[c]} waits on a reduce that never becomes ready")
                run_next_reduce()
            start = max(start, finish_r[r])
        for p in plan.compute_preds[c]:
            start = max(start, finish_c[p])
        finish_c[c] = start + duration
        compute_free = finish_c[c]
        busy += duration
        for r in plan.releases[c]:
            node = plan.reduces[r]
            ready = max(finish_c[p] for p in plan.reduce_preds[r])
            heapq.heappush(ready_heap, (ready, node.step, node.layer, r))

    while ready_heap:
        run_next_reduce()

    makespan = max(compute_free, net_free)
    if makespan <= 0.0:
        raise SimulationError("empty schedule has no makespan")
    return SimResult(
        makespan=makespan,
        compute_busy=busy,
        cu=busy / makespan,
        network_busy=net_busy,
        bytes_total=dag.total_payload_bytes,
    )


# ============================================================================
# Sweeps
# ============================================================================


@dataclass(frozen=True)
class SweepRow:
    method: str
    bandwidth_gbits: float
    cu: float
    makespan_s: float
    bytes_total: float
    step_time_s: Optional[float] = None


SWEEP_COLUMNS = ["method", "bandwidth_gbits", "cu", "makespan_s", "bytes_total"]


def sweep(
    config: SimConfig,
    bandwidths: Optional[Sequence[float]] = None,
    methods: Optional[Iterable] = None,
    step_times: Optional[Sequence[float]] = None,
) -> List[SweepRow]:
    """Simulate every (step_time, method, bandwidth) point; structure is built once per method."""
    grid = list(bandwidths) if bandwidths is not None else default_bandwidth_grid()
    if not grid:
        raise ConfigurationError("bandwidth grid is empty")
    if any(b <= 0 for b in grid):
        raise ConfigurationError("bandwidths must be positive")
    methods = [SimMethod(m) for m in (methods or [config.method])]
    times = list(step_times) if step_times else [None]

    rows: List[SweepRow] = []
    with PerformanceLogger(logger, "bandwidth sweep", points=len(grid) * len(methods) * len(times)):
        for step_time in times:
            for method in methods:
                updates = {"method": method}
                if step_time is not None:
                    updates["step_time"] = step_time
                cfg = SimConfig(**{**config.model_dump(), **updates})
                base = build_dag(cfg)
                for bw in grid:
                    result = simulate(base.retimed(bw * GBIT))
                    rows.append(
                        SweepRow(
                            method=method.value,
                            bandwidth_gbits=float(bw),
                            cu=result.cu,
                            makespan_s=result.makespan,
                            bytes_total=result.bytes_total,
                            step_time_s=step_time,
                        )
                    )
                logger.debug("method swept", method=method.value, step_time=step_time)
    return rows


def cu_targets(
    rows: Sequence[SweepRow], targets: Sequence[float] = DEFAULT_CU_TARGETS
) -> Dict[str, Dict[float, Optional[float]]]:
    """Smallest grid bandwidth reaching each CU target, per method (None if never reached)."""
    table: Dict[str, Dict[float, Optional[float]]] = {}
    for row in rows:
        key = row.method if row.step_time_s is None else f"{row.method}@{row.step_time_s:g}s"
        table.setdefault(key, {t: None for t in targets})
        for t in targets:
            best = table[key][t]
            if row.cu >= t and (best is None or row.bandwidth_gbits < best):
                table[key][t] = row.bandwidth_gbits
    return table
