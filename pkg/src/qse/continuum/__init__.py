"""Edge-fog-cloud continuum: node registry, routing, warm-start chains and
an event-driven simulator."""
from .engine import (ContinuumSimulator, SimulationResult, TraceEvent, compute_metrics, merge_intervals,
                     simulate, single_request)
from .model import (ContinuumConfig, LinkSpec, NodeSpec, PartitionGraph, RequestSpec, SloSpec, UnitSpec,
                    WarmStartPipeline, WarmStartStep)
from .routing import (ClusterState, GreedySloPolicy, Placement, QuantumExecutionMode, RequestView, Task, TwoTierPolicy,
                      plan_quantum_execution, route)
from .warmstart import ClientCapabilities, StepPlacement, apply_warmstart_chain, validate_chain


def load_continuum_config(path) -> ContinuumConfig:
    from ..config import load_config
    return load_config(path, ContinuumConfig)


__all__ = [
    "ClientCapabilities", "ClusterState", "ContinuumConfig", "ContinuumSimulator", "GreedySloPolicy",
    "LinkSpec", "NodeSpec", "PartitionGraph", "Placement", "QuantumExecutionMode", "RequestSpec",
    "RequestView", "SimulationResult", "SloSpec", "StepPlacement", "Task", "TraceEvent", "TwoTierPolicy", "UnitSpec",
    "WarmStartPipeline", "WarmStartStep", "apply_warmstart_chain", "compute_metrics",
    "load_continuum_config", "merge_intervals", "plan_quantum_execution", "route", "simulate",
    "single_request", "validate_chain",
]
