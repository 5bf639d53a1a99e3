"""Configuration vocabulary for the edge-fog-cloud simulator.

Every type here is a pydantic model, so a whole scenario can be loaded from
one YAML/JSON document (see :mod:`qse.continuum.config`) and validated before
anything runs.
"""
from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

Domain = Literal["edge", "fog", "cloud"]
Resource = Literal["CPU", "TPU", "GPU", "QPU", "MQPU"]
Grade = Literal["mobile", "server"]
CapacityClass = Literal["very_low", "low", "medium", "high", "unlimited"]
Stage = Literal["raw_classical", "neural_features", "quantum_ready", "classified"]
StepKind = Literal["C2Q", "Q2Q", "Q2C", "C2N", "N2Q"]

DOMAIN_ORDER = ("edge", "fog", "cloud")
STAGE_ORDER = ("raw_classical", "neural_features", "quantum_ready", "classified")
QUANTUM_RESOURCES = ("QPU", "MQPU")
CONFIG_VERSION = 1

DEFAULT_CAPACITY_SLOTS = {"very_low": 1, "low": 1, "medium": 2, "high": 4, "unlimited": 64}


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class NodeSpec(_Strict):
    id: str
    domain: Domain
    resource: Resource
    grade: Grade
    capacity_class: CapacityClass
    service_time: dict[str, float] = Field(default_factory=dict)  # mean ms per unit id / step kind / "default"
    max_qubits: Optional[int] = Field(None, ge=1)
    outage_rate: float = Field(0.0, ge=0.0)        # events per simulated hour
    energy_budget: Optional[float] = Field(None, ge=0.0)   # edge only
    owner: Optional[str] = None                     # client served by an edge node; defaults to id
    parallelism: int = Field(1, ge=1)               # cluster parallelism for cut fragments

    @model_validator(mode="after")
    def _table_consistency(self):
        quantum = self.resource in QUANTUM_RESOURCES
        if quantum and self.max_qubits is None:
            raise ValueError(f"quantum node {self.id!r} needs max_qubits")
        if not quantum and self.max_qubits is not None:
            raise ValueError(f"classical node {self.id!r} must not set max_qubits")
        if self.resource in ("MQPU", "TPU") and self.grade != "mobile":
            raise ValueError(f"{self.resource} nodes are mobile-grade ({self.id!r})")
        if self.domain == "edge" and self.grade != "mobile":
            raise ValueError(f"edge nodes are mobile-grade ({self.id!r})")
        if self.domain == "cloud" and self.grade != "server":
            raise ValueError(f"cloud nodes are server-grade ({self.id!r})")
        if self.domain != "edge" and self.energy_budget is not None:
            raise ValueError(f"energy_budget applies to edge nodes only ({self.id!r})")
        for key, ms in self.service_time.items():
            if ms < 0:
                raise ValueError(f"negative service time for {key!r} on {self.id!r}")
        return self

    @property
    def client(self) -> str:
        return self.owner or self.id

    @property
    def is_quantum(self) -> bool:
        return self.resource in QUANTUM_RESOURCES


class SloSpec(_Strict):
    latency_budget_ms: float = Field(gt=0)
    quality_target: float = Field(0.0, ge=0.0, le=1.0)
    quantum_optional: bool = True


class LinkSpec(_Strict):
    latency_ms: float = Field(0.0, ge=0.0)
    ms_per_unit: float = Field(0.0, ge=0.0)

    def transfer_ms(self, payload: float) -> float:
        return self.latency_ms + self.ms_per_unit * payload


class UnitSpec(_Strict):
    """A deployment unit: one or more partitions deployed together."""

    id: str
    kind: Literal["classical_depthwise", "quantum_widthwise"]
    domains: list[Domain]
    resources: list[Resource]
    input: Stage
    output: Stage
    width: Optional[int] = Field(None, ge=1)   # qubits, quantum units
    depth: int = Field(8, ge=1)
    optional: bool = False
    quality_gain: float = Field(0.0, ge=0.0, le=1.0)
    output_payload: Optional[float] = Field(None, ge=0.0)
    energy_cost: float = Field(0.0, ge=0.0)
    service_ms: Optional[float] = Field(None, ge=0.0)

    @model_validator(mode="after")
    def _check(self):
        if STAGE_ORDER.index(self.output) <= STAGE_ORDER.index(self.input):
            raise ValueError(f"unit {self.id!r}: stages must move forward ({self.input} -> {self.output})")
        quantum = self.kind == "quantum_widthwise"
        if quantum and self.width is None:
            raise ValueError(f"quantum unit {self.id!r} needs width")
        if quantum and not set(self.resources) <= set(QUANTUM_RESOURCES):
            raise ValueError(f"quantum unit {self.id!r} must require QPU/MQPU")
        if not quantum and set(self.resources) & set(QUANTUM_RESOURCES):
            raise ValueError(f"classical unit {self.id!r} cannot require quantum resources")
        if not self.domains or not self.resources:
            raise ValueError(f"unit {self.id!r} needs at least one domain and one resource")
        return self

    @property
    def is_quantum(self) -> bool:
        return self.kind == "quantum_widthwise"


class PartitionGraph(_Strict):
    units: list[UnitSpec]
    edges: list[tuple[str, str]] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check(self):
        ids = [u.id for u in self.units]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate unit id")
        by_id = {u.id: u for u in self.units}
        for a, b in self.edges:
            if a not in by_id or b not in by_id:
                raise ValueError(f"edge ({a!r}, {b!r}) references an unknown unit")
            if by_id[b].input != by_id[a].output:
                raise ValueError(
                    f"edge {a!r} -> {b!r}: {b!r} expects {by_id[b].input} but {a!r} produces {by_id[a].output}"
                )
        sources = [u for u in ids if not any(b == u for _, b in self.edges)]
        if len(sources) != 1:
            raise ValueError(f"partition graph needs exactly one source unit, found {sources}")
        # acyclic + every path ends in a sink that outputs "classified"
        state: dict[str, int] = {}

        def visit(u):
            if state.get(u) == 1:
                raise ValueError(f"cycle through unit {u!r}")
            if state.get(u) == 2:
                return
            state[u] = 1
            succ = self.successors(u)
            if not succ and by_id[u].output != "classified":
                raise ValueError(f"sink unit {u!r} must output 'classified'")
            for v in succ:
                visit(v)
            state[u] = 2

        visit(sources[0])
        unreachable = set(ids) - set(state)
        if unreachable:
            raise ValueError(f"units unreachable from the source: {sorted(unreachable)}")
        return self

    @property
    def source(self) -> str:
        targets = {b for _, b in self.edges}
        return next(u.id for u in self.units if u.id not in targets)

    def unit(self, unit_id: str) -> UnitSpec:
        for u in self.units:
            if u.id == unit_id:
                return u
        raise KeyError(unit_id)

    def successors(self, unit_id: str) -> list[str]:
        return [b for a, b in self.edges if a == unit_id]


STEP_FORMATS = {
    "C2Q": ("C", "Q"), "Q2Q": ("Q", "Q"), "Q2C": ("Q", "C"), "C2N": ("C", "N"), "N2Q": ("N", "Q"),
}


class WarmStartStep(_Strict):
    kind: StepKind
    resource: Resource
    domains: list[Domain] = Field(default_factory=lambda: ["edge", "fog"])
    intensity_gain: float = Field(ge=0.0, le=1.0)
    energy_cost: float = Field(0.0, ge=0.0)
    service_ms: float = Field(0.0, ge=0.0)

    @property
    def input_format(self) -> str:
        return STEP_FORMATS[self.kind][0]

    @property
    def output_format(self) -> str:
        return STEP_FORMATS[self.kind][1]


class WarmStartPipeline(_Strict):
    steps: list[WarmStartStep]
    refine: Optional[WarmStartStep] = None
    max_refinements: int = Field(0, ge=0)


class FinalTask(_Strict):
    resource: Resource = "QPU"
    domain: Domain = "cloud"
    service_ms: float = Field(0.0, ge=0.0)


class WarmStartSection(_Strict):
    pipelines: dict[str, WarmStartPipeline]
    clients: dict[str, str] = Field(default_factory=dict)   # client id -> pipeline name
    final_task: FinalTask = FinalTask()


class RequestSpec(_Strict):
    id: str
    client: str
    arrival_ms: float = Field(ge=0.0)
    slo: SloSpec
    payload: float = Field(1.0, ge=0.0)
    flow: Optional[Literal["graph", "warmstart"]] = None


class GeneratorSpec(_Strict):
    count: int = Field(ge=0)
    rate_per_s: float = Field(gt=0)
    clients: list[str]
    slo: SloSpec
    payload: float = Field(1.0, ge=0.0)
    start_ms: float = Field(0.0, ge=0.0)

    @field_validator("clients")
    @classmethod
    def _non_empty(cls, v):
        if not v:
            raise ValueError("generator needs at least one client")
        return v


class WorkloadSpec(_Strict):
    flow: Literal["graph", "warmstart"] = "graph"
    requests: list[RequestSpec] = Field(default_factory=list)
    generator: Optional[GeneratorSpec] = None


class OutageSpec(_Strict):
    node: str
    at_ms: float = Field(ge=0.0)
    duration_ms: float = Field(gt=0.0)


class SimulationSettings(_Strict):
    policy: Literal["greedy", "two-tier"] = "greedy"
    trace_sample_rate: float = Field(1.0, gt=0.0, le=1.0)
    jitter_ms: float = Field(0.0, ge=0.0)
    max_reroutes: int = Field(5, ge=0)
    outage_duration_ms: float = Field(1000.0, gt=0.0)
    horizon_ms: Optional[float] = Field(None, gt=0.0)
    capacity_slots: dict[CapacityClass, int] = Field(default_factory=lambda: dict(DEFAULT_CAPACITY_SLOTS))

    @model_validator(mode="after")
    def _slots(self):
        missing = set(DEFAULT_CAPACITY_SLOTS) - set(self.capacity_slots)
        if missing:
            raise ValueError(f"capacity_slots missing {sorted(missing)}")
        if any(v < 1 for v in self.capacity_slots.values()):
            raise ValueError("capacity_slots must be >= 1")
        return self


class ContinuumConfig(_Strict):
    version: Literal[1] = CONFIG_VERSION
    seed: int = 0
    name: str = ""
    simulation: SimulationSettings = SimulationSettings()
    links: dict[str, LinkSpec] = Field(default_factory=dict)
    nodes: list[NodeSpec]
    graph: Optional[PartitionGraph] = None
    warmstart: Optional[WarmStartSection] = None
    workload: WorkloadSpec = WorkloadSpec()
    outages: list[OutageSpec] = Field(default_factory=list)

    @model_validator(mode="after")
    def _cross_refs(self):
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate node id")
        for key in self.links:
            parts = key.split("-")
            if key != "intra" and (len(parts) != 2 or not set(parts) <= set(DOMAIN_ORDER)):
                raise ValueError(f"link key {key!r} must be 'intra' or '<domain>-<domain>'")
        for o in self.outages:
            if o.node not in ids:
                raise ValueError(f"outage references unknown node {o.node!r}")
        flows = {self.workload.flow} | {r.flow for r in self.workload.requests if r.flow}
        if "graph" in flows and (self.workload.requests or self.workload.generator) and self.graph is None:
            raise ValueError("graph flow requested but no partition graph given")
        if "warmstart" in flows and (self.workload.requests or self.workload.generator):
            if self.warmstart is None:
                raise ValueError("warmstart flow requested but no warmstart section given")
        if self.warmstart is not None:
            for client, name in self.warmstart.clients.items():
                if name not in self.warmstart.pipelines:
                    raise ValueError(f"client {client!r} uses unknown pipeline {name!r}")
        return self

    def node(self, node_id: str) -> NodeSpec:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def link(self, a: str, b: str) -> LinkSpec:
        if a == b:
            return self.links.get("intra", LinkSpec())
        return self.links.get(f"{a}-{b}") or self.links.get(f"{b}-{a}") or LinkSpec()
