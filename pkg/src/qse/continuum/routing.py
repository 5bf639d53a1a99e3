"""SLO-aware placement of pipeline tasks onto continuum nodes."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Literal, Optional, Protocol, Sequence

import numpy as np

from ..ansatz import AnsatzSpec, build_circuit
from ..cutting import block_gate_cut_plan, partition_fragments
from ..errors import InfeasibleUnitError, SimulationIntegrityError
from .model import DOMAIN_ORDER, ContinuumConfig, NodeSpec, UnitSpec

DEADLINE_SLACK_MS = 1e-9


@dataclass(frozen=True)
class QuantumExecutionMode:
    """How a quantum unit runs on a node: whole, or cut into fragments."""

    mode: Literal["direct", "cut"]
    n_cuts: int = 0
    n_combinations: int = 1
    max_fragment_width: int = 0

    def service_factor(self, parallelism: int) -> float:
        """Multiplier on the base service time: combinations run in waves."""
        if self.mode == "direct":
            return 1.0
        return self.n_combinations / min(parallelism, self.n_combinations)


@lru_cache(maxsize=256)
def _cut_shape(width: int, depth: int, max_qubits: int) -> QuantumExecutionMode:
    spec = AnsatzSpec(width, depth=depth)
    circuit = build_circuit(spec, np.zeros(spec.n_params), np.zeros(width))
    plan = block_gate_cut_plan(circuit, max_qubits)
    widths = [len(f) for f in partition_fragments(circuit, plan)]
    return QuantumExecutionMode("cut", plan.n_cuts, plan.n_combinations, max(widths))


def plan_quantum_execution(unit: UnitSpec | "Task", node: NodeSpec) -> QuantumExecutionMode:
    """Direct if the unit fits on the node, otherwise a gate-cut plan whose
    fragments fit in ``node.max_qubits``."""
    if not node.is_quantum:
        raise InfeasibleUnitError(f"node {node.id!r} has no quantum resource")
    width = unit.width
    if width is None or width <= node.max_qubits:
        return QuantumExecutionMode("direct", max_fragment_width=width or 0)
    if node.max_qubits < 2:
        # a brick-wall ansatz has no valid cut into single-qubit fragments
        raise InfeasibleUnitError(
            f"unit of width {width} cannot be cut onto {node.id!r} with max_qubits={node.max_qubits}"
        )
    return _cut_shape(width, unit.depth, node.max_qubits)


@dataclass(frozen=True)
class Task:
    """One routable piece of work: a graph unit or a warm-start step."""

    id: str
    resources: tuple[str, ...]
    domains: tuple[str, ...]
    service_key: str
    service_ms: Optional[float] = None
    quantum: bool = False
    optional: bool = False
    energy_cost: float = 0.0
    width: Optional[int] = None
    depth: int = 8
    quality_gain: float = 0.0
    output_payload: Optional[float] = None

    @classmethod
    def from_unit(cls, unit: UnitSpec) -> "Task":
        return cls(
            id=unit.id, resources=tuple(unit.resources), domains=tuple(unit.domains),
            service_key=unit.id, service_ms=unit.service_ms, quantum=unit.is_quantum,
            optional=unit.optional, energy_cost=unit.energy_cost, width=unit.width,
            depth=unit.depth, quality_gain=unit.quality_gain, output_payload=unit.output_payload,
        )


@dataclass(frozen=True)
class RequestView:
    """What the router needs to know about a request at decision time."""

    id: str
    client: str
    location: Optional[str]      # node id holding the data; None = client device
    payload: float               # current data size, drives transfer time
    size: float                  # original request size, scales service time
    deadline_ms: float
    quantum_optional: bool


@dataclass
class ClusterState:
    """Mutable view of the continuum: slot reservations, energy, outages."""

    config: ContinuumConfig
    slot_free: dict[str, list[float]] = field(default_factory=dict)
    energy: dict[str, float] = field(default_factory=dict)
    down: set[str] = field(default_factory=set)

    @classmethod
    def initial(cls, config: ContinuumConfig) -> "ClusterState":
        slots = config.simulation.capacity_slots
        return cls(
            config,
            {n.id: [0.0] * slots[n.capacity_class] for n in config.nodes},
            {n.id: (math.inf if n.energy_budget is None else float(n.energy_budget)) for n in config.nodes},
        )

    def check(self) -> None:
        ids = {n.id for n in self.config.nodes}
        if set(self.slot_free) != ids or set(self.energy) != ids:
            raise SimulationIntegrityError("cluster state does not match the node registry")
        if not self.down <= ids:
            raise SimulationIntegrityError(f"unknown nodes marked down: {sorted(self.down - ids)}")
        for nid, slots in self.slot_free.items():
            if not slots or any(not math.isfinite(t) or t < 0 for t in slots):
                raise SimulationIntegrityError(f"corrupt slot table for {nid!r}: {slots}")
            if self.energy[nid] < 0:
                raise SimulationIntegrityError(f"negative energy on {nid!r}")

    def earliest_slot(self, node_id: str) -> tuple[int, float]:
        slots = self.slot_free[node_id]
        i = int(np.argmin(slots))
        return i, slots[i]

    def domain_of(self, location: Optional[str]) -> str:
        return "edge" if location is None else self.config.node(location).domain


@dataclass(frozen=True)
class Placement:
    decision: Literal["place", "skip-qnn", "forward-to-cloud", "reject"]
    task: Optional[str] = None
    node: Optional[str] = None
    transfer_ms: float = 0.0
    ready_ms: float = 0.0
    start_ms: float = 0.0
    service_ms: float = 0.0
    completion_ms: float = 0.0
    inter_domain: bool = False
    mode: Optional[QuantumExecutionMode] = None
    reason: str = ""

    @property
    def meets_slo(self) -> bool:
        return self.decision == "place"


def base_service_ms(task: Task, node: NodeSpec) -> Optional[float]:
    st = node.service_time
    if task.service_key in st:
        return st[task.service_key]
    if "default" in st:
        return st["default"]
    return task.service_ms


def transfer_ms(state: ClusterState, request: RequestView, node: NodeSpec) -> tuple[float, bool]:
    """(transfer time, crosses a domain boundary) for moving the request's data to ``node``."""
    if request.location == node.id:
        return 0.0, False
    if request.location is None and node.domain == "edge" and node.client == request.client:
        return 0.0, False  # on-device hand-off
    src = state.domain_of(request.location)
    return state.config.link(src, node.domain).transfer_ms(request.payload), src != node.domain


def _candidate(state: ClusterState, request: RequestView, task: Task, node: NodeSpec, now: float):
    if node.id in state.down:
        return None
    if node.resource not in task.resources or node.domain not in task.domains:
        return None
    if node.domain == "edge" and (node.client != request.client or state.energy[node.id] < task.energy_cost):
        return None
    base = base_service_ms(task, node)
    if base is None:
        return None
    mode = None
    if task.quantum:
        try:
            mode = plan_quantum_execution(task, node)
        except InfeasibleUnitError:
            return None
    service = base * request.size * (mode.service_factor(node.parallelism) if mode else 1.0)
    xfer, inter = transfer_ms(state, request, node)
    ready = now + xfer
    _, free = state.earliest_slot(node.id)
    start = max(ready, free)
    return Placement("place", task.id, node.id, xfer, ready, start, service, start + service, inter, mode)


class RoutingPolicy(Protocol):
    def route(self, request: RequestView, tasks: Sequence[Task], state: ClusterState, now: float) -> Placement:
        ...


class GreedySloPolicy:
    """Minimum predicted completion among placements that meet the deadline.

    Ties go to the lowest node id. When nothing meets the deadline: skip an
    optional quantum stage if the request allows it, else forward to the best
    cloud node regardless of budget, else reject.
    """

    def route(self, request: RequestView, tasks: Sequence[Task], state: ClusterState, now: float) -> Placement:
        state.check()
        if request.location is not None and request.location not in state.slot_free:
            raise SimulationIntegrityError(f"request {request.id!r} sits on unknown node {request.location!r}")
        options = []
        for task in tasks:
            for node in state.config.nodes:
                p = _candidate(state, request, task, node, now)
                if p is not None:
                    options.append(p)
        key = lambda p: (p.completion_ms, p.node, p.task)
        feasible = [p for p in options if p.completion_ms <= request.deadline_ms + DEADLINE_SLACK_MS]
        if feasible:
            return min(feasible, key=key)
        if tasks and all(t.quantum and t.optional for t in tasks) and request.quantum_optional:
            return Placement("skip-qnn", tasks[0].id, reason="no quantum placement meets the deadline")
        cloud = [p for p in options if state.config.node(p.node).domain == "cloud"]
        if cloud:
            best = min(cloud, key=key)
            return Placement("forward-to-cloud", **{k: getattr(best, k) for k in (
                "task", "node", "transfer_ms", "ready_ms", "start_ms", "service_ms",
                "completion_ms", "inter_domain", "mode")}, reason="deadline cannot be met")
        return Placement("reject", tasks[0].id if tasks else None, reason="no eligible node")


class TwoTierPolicy(GreedySloPolicy):
    """Edge balancer with a coarse view, then a full-view domain balancer.

    The edge tier only sees, per domain, the mean earliest-free time of the
    eligible nodes. It commits to the domain with the best coarse prediction
    that meets the deadline (closer domain on ties); the chosen domain's
    balancer then places greedily with full state. If the committed domain
    has no feasible node the decision falls back to the full-view policy.
    """

    def route(self, request: RequestView, tasks: Sequence[Task], state: ClusterState, now: float) -> Placement:
        state.check()
        if request.location is not None and state.domain_of(request.location) != "edge":
            return super().route(request, tasks, state, now)
        by_domain: dict[str, list[Placement]] = {}
        for task in tasks:
            for node in state.config.nodes:
                p = _candidate(state, request, task, node, now)
                if p is not None:
                    by_domain.setdefault(state.config.node(p.node).domain, []).append(p)
        coarse = []
        for dom, opts in by_domain.items():
            mean_free = float(np.mean([state.earliest_slot(p.node)[1] for p in opts]))
            est = min(max(p.ready_ms, mean_free) + p.service_ms for p in opts)
            if est <= request.deadline_ms + DEADLINE_SLACK_MS:
                coarse.append((est, domain_rank(dom), dom))
        if coarse:
            _, _, dom = min(coarse)
            feasible = [p for p in by_domain[dom] if p.completion_ms <= request.deadline_ms + DEADLINE_SLACK_MS]
            if feasible:
                return min(feasible, key=lambda p: (p.completion_ms, p.node, p.task))
        return super().route(request, tasks, state, now)


POLICIES = {"greedy": GreedySloPolicy, "two-tier": TwoTierPolicy}


def route(request: RequestView, tasks: Sequence[Task], state: ClusterState, now: float,
          policy: RoutingPolicy | None = None) -> Placement:
    return (policy or GreedySloPolicy()).route(request, tasks, state, now)


def domain_rank(domain: str) -> int:
    return DOMAIN_ORDER.index(domain)
