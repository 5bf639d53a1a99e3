"""Edge-to-cloud warm-start chains for preparing quantum inputs."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional

from ..errors import InvalidPipelineError
from .model import DOMAIN_ORDER, STEP_FORMATS, FinalTask, WarmStartPipeline, WarmStartStep

_KINDS = {fmt: kind for kind, fmt in STEP_FORMATS.items()}


@dataclass(frozen=True)
class ClientCapabilities:
    client: str
    resources: frozenset[str]
    energy: float


@dataclass(frozen=True)
class StepPlacement:
    """One executed stage. ``fused`` lists the declared steps it absorbs."""

    kind: str
    domain: str
    resource: str
    intensity_gain: float
    energy_cost: float
    service_ms: float
    fused: tuple[str, ...] = ()
    refinement: bool = False
    final: bool = False


def validate_chain(pipeline: WarmStartPipeline) -> None:
    if not pipeline.steps:
        raise InvalidPipelineError("warm-start pipeline has no steps")
    fmt = "C"
    for i, step in enumerate(pipeline.steps):
        if step.input_format != fmt:
            raise InvalidPipelineError(
                f"step {i} ({step.kind}) expects {step.input_format} but receives {fmt}"
            )
        fmt = step.output_format
    r = pipeline.refine
    if r is not None and r.input_format != r.output_format:
        raise InvalidPipelineError(f"refinement step {r.kind} must preserve its data format")


def _place(step: WarmStartStep, floor: int, caps: ClientCapabilities, energy: float,
           domain_resources: Mapping[str, frozenset]) -> Optional[str]:
    for dom in sorted(step.domains, key=DOMAIN_ORDER.index):
        if DOMAIN_ORDER.index(dom) < floor:
            continue
        if dom == "edge":
            if step.resource in caps.resources and energy >= step.energy_cost:
                return dom
        elif step.resource in domain_resources.get(dom, frozenset()):
            return dom
    return None


def apply_warmstart_chain(caps: ClientCapabilities, pipeline: WarmStartPipeline, quality_target: float,
                          domain_resources: Mapping[str, frozenset],
                          final_task: FinalTask = FinalTask()) -> list[StepPlacement]:
    """Place each step at the most proximal capable domain, stopping once the
    accumulated intensity reaches ``quality_target``.

    A step that cannot run anywhere it is allowed is fused into the next step
    that can, so skipping C2N before N2Q yields a single C2Q. Once work leaves
    the edge it never returns there. The final quantum task always closes the
    chain.
    """
    validate_chain(pipeline)
    placed: list[StepPlacement] = []
    pending: list[WarmStartStep] = []
    quality = 0.0
    energy = caps.energy
    floor = 0
    fmt = "C"

    for step in pipeline.steps:
        if quality >= quality_target:
            break
        dom = _place(step, floor, caps, energy, domain_resources)
        fused_kind = _KINDS.get(((pending[0].input_format if pending else step.input_format), step.output_format))
        if dom is None or fused_kind is None:
            pending.append(step)
            continue
        absorbed = pending + [step]
        gain = min(1.0, sum(s.intensity_gain for s in absorbed))
        if dom == "edge":
            energy -= step.energy_cost
        placed.append(StepPlacement(
            fused_kind, dom, step.resource, gain, step.energy_cost if dom == "edge" else 0.0,
            sum(s.service_ms for s in absorbed), tuple(s.kind for s in absorbed),
        ))
        pending = []
        quality = min(1.0, quality + gain)
        floor = max(floor, DOMAIN_ORDER.index(dom))
        fmt = step.output_format

    r = pipeline.refine
    n_ref = 0
    while r is not None and quality < quality_target and n_ref < pipeline.max_refinements and not pending:
        if r.input_format != fmt:
            break
        dom = _place(r, max(floor, 1), caps, energy, domain_resources)
        if dom is None:
            break
        placed.append(StepPlacement(r.kind, dom, r.resource, r.intensity_gain, 0.0, r.service_ms,
                                    (r.kind,), refinement=True))
        quality = min(1.0, quality + r.intensity_gain)
        floor = max(floor, DOMAIN_ORDER.index(dom))
        n_ref += 1

    placed.append(StepPlacement(
        "quantum-task", final_task.domain, final_task.resource, 0.0, 0.0, final_task.service_ms,
        tuple(s.kind for s in pending), final=True,
    ))
    return placed


def chain_quality(placements: list[StepPlacement]) -> float:
    return min(1.0, sum(p.intensity_gain for p in placements))
