"""Seeded discrete-event simulation of requests flowing through the continuum."""
from __future__ import annotations

import csv
import heapq
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..errors import InvalidArgumentError
from .model import ContinuumConfig, RequestSpec, SloSpec
from .routing import POLICIES, ClusterState, Placement, RequestView, RoutingPolicy, Task
from .warmstart import ClientCapabilities, StepPlacement, apply_warmstart_chain

log = logging.getLogger(__name__)

# same-time ordering: capacity returns first, work finishing exactly at an
# outage boundary completes, new arrivals see the updated state last
_PRIORITY = {"recovery": 0, "service-complete": 1, "outage": 2, "transfer-complete": 3,
             "service-start": 4, "arrival": 5}
SLO_SLACK_MS = 1e-9
DEFAULT_HORIZON_TAIL_MS = 5_000.0  # random outages are drawn up to last arrival + tail
_FMT_STAGE = {"C": "raw_classical", "N": "neural_features", "Q": "quantum_ready"}


@dataclass(frozen=True)
class TraceEvent:
    t: float
    event: str
    node: Optional[str]
    request: Optional[str]
    detail: dict

    def to_json(self) -> str:
        record = {"t": round(self.t, 6), "event": self.event, "node": self.node,
                  "request": self.request, "detail": {k: self.detail[k] for k in sorted(self.detail)}}
        return json.dumps(record, separators=(",", ":"))


@dataclass
class _Request:
    spec: RequestSpec
    index: int
    flow: str
    location: Optional[str] = None
    payload: float = 1.0
    quality: float = 0.0
    stage: str = "raw_classical"
    frontier: list[str] = field(default_factory=list)
    ws_tasks: list[Task] = field(default_factory=list)
    ws_pos: int = 0
    started: bool = False
    token: int = 0
    active_node: Optional[str] = None
    active_task: Optional[Task] = None
    phase: Optional[str] = None
    reroutes: int = 0
    status: str = "pending"

    @property
    def deadline(self) -> float:
        return self.spec.arrival_ms + self.spec.slo.latency_budget_ms


@dataclass
class SimulationResult:
    events: list[TraceEvent]
    metrics: dict
    outcomes: dict[str, str]
    config: ContinuumConfig

    def trace_lines(self, sample_rate: float | None = None) -> list[str]:
        """JSON lines for the trace. Sampling keeps every event of a
        deterministic subset of requests plus all node-level events."""
        rate = self.config.simulation.trace_sample_rate if sample_rate is None else sample_rate
        keep = _sampled_requests(self.outcomes, rate)
        return [e.to_json() for e in self.events if e.request is None or e.request in keep]

    def write_trace(self, path, sample_rate: float | None = None) -> None:
        Path(path).write_text("".join(line + "\n" for line in self.trace_lines(sample_rate)), encoding="utf-8")

    def metrics_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "value"])
        for k, v in self.metrics.items():
            w.writerow([k, _fmt(v)])
        return buf.getvalue()

    def write_metrics(self, path) -> None:
        Path(path).write_text(self.metrics_csv(), encoding="utf-8")


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(round(float(v), 6))


def _sampled_requests(outcomes: dict[str, str], rate: float) -> set[str]:
    ids = list(outcomes)
    return {rid for i, rid in enumerate(ids) if math.floor((i + 1) * rate) > math.floor(i * rate)}


def merge_intervals(intervals: list[tuple[float, float]]) -> list[tuple[float, float]]:
    out: list[list[float]] = []
    for a, b in sorted(intervals):
        if out and a <= out[-1][1]:
            out[-1][1] = max(out[-1][1], b)
        else:
            out.append([a, b])
    return [(a, b) for a, b in out]


class ContinuumSimulator:
    """Runs one scenario. ``inject_outage`` may be called before ``run``."""

    def __init__(self, config: ContinuumConfig, *, seed: int | None = None,
                 policy: RoutingPolicy | None = None):
        self.config = config
        self.seed = config.seed if seed is None else int(seed)
        self.policy = policy or POLICIES[config.simulation.policy]()
        self._outages: list[tuple[str, float, float]] = [
            (o.node, o.at_ms, o.at_ms + o.duration_ms) for o in config.outages
        ]
        ss = np.random.SeedSequence(self.seed)
        self._rng_work, self._rng_out, self._rng_jitter = (np.random.default_rng(s) for s in ss.spawn(3))

    def inject_outage(self, node: str, at_ms: float, duration_ms: float) -> None:
        try:
            self.config.node(node)
        except KeyError:
            raise InvalidArgumentError(f"unknown node {node!r}") from None
        if at_ms < 0 or duration_ms <= 0:
            raise InvalidArgumentError("outage needs at_ms >= 0 and duration_ms > 0")
        self._outages.append((node, float(at_ms), float(at_ms) + float(duration_ms)))

    # -- workload and outage generation ------------------------------------
    def _requests(self) -> list[RequestSpec]:
        wl = self.config.workload
        reqs = list(wl.requests)
        g = wl.generator
        if g is not None and g.count:
            gaps = self._rng_work.exponential(1000.0 / g.rate_per_s, size=g.count)
            times = g.start_ms + np.cumsum(gaps)
            for i, t in enumerate(times):
                reqs.append(RequestSpec(id=f"g{i:06d}", client=g.clients[i % len(g.clients)],
                                        arrival_ms=round(float(t), 6), slo=g.slo, payload=g.payload))
        ids = [r.id for r in reqs]
        if len(set(ids)) != len(ids):
            raise InvalidArgumentError("duplicate request id in workload")
        return sorted(reqs, key=lambda r: (r.arrival_ms, r.id))

    def _outage_windows(self, horizon: float) -> dict[str, list[tuple[float, float]]]:
        windows: dict[str, list[tuple[float, float]]] = {}
        for node, a, b in self._outages:
            windows.setdefault(node, []).append((a, b))
        mean = self.config.simulation.outage_duration_ms
        for node in sorted(self.config.nodes, key=lambda n: n.id):
            if node.outage_rate <= 0:
                continue
            t = 0.0
            per_ms = node.outage_rate / 3.6e6
            while True:
                t += float(self._rng_out.exponential(1.0 / per_ms))
                if t >= horizon:
                    break
                windows.setdefault(node.id, []).append((t, t + float(self._rng_out.exponential(mean))))
        return {n: merge_intervals(w) for n, w in sorted(windows.items())}

    # -- main loop ----------------------------------------------------------
    def run(self) -> SimulationResult:
        cfg = self.config
        specs = self._requests()
        last_arrival = specs[-1].arrival_ms if specs else 0.0
        horizon = cfg.simulation.horizon_ms or (last_arrival + DEFAULT_HORIZON_TAIL_MS)
        self.state = ClusterState.initial(cfg)
        self.events: list[TraceEvent] = []
        self._heap: list = []
        self._seq = 0
        flow_default = cfg.workload.flow
        self.reqs = {s.id: _Request(s, i, s.flow or flow_default, payload=s.payload)
                     for i, s in enumerate(specs)}
        for r in self.reqs.values():
            self._push(r.spec.arrival_ms, "arrival", rid=r.spec.id)
        for node, wins in self._outage_windows(horizon).items():
            for a, b in wins:
                self._push(a, "outage", node=node, until=b)
                self._push(b, "recovery", node=node)

        while self._heap:
            t, _, _, kind, data = heapq.heappop(self._heap)
            getattr(self, "_on_" + kind.replace("-", "_"))(t, **data)

        outcomes = {rid: r.status for rid, r in self.reqs.items()}
        metrics = compute_metrics(self.events, cfg, outcomes)
        log.info("simulated %d requests, %d events", len(outcomes), len(self.events))
        return SimulationResult(self.events, metrics, outcomes, cfg)

    def _push(self, t: float, kind: str, **data) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (t, _PRIORITY[kind], self._seq, kind, data))

    def _emit(self, t, event, node=None, request=None, **detail) -> None:
        self.events.append(TraceEvent(t, event, node, request, detail))

    # -- handlers -----------------------------------------------------------
    def _on_arrival(self, t, rid):
        r = self.reqs[rid]
        self._emit(t, "arrival", None, rid, client=r.spec.client, flow=r.flow, payload=r.payload)
        if r.flow == "warmstart":
            plan = self._warmstart_plan(r)
            r.ws_tasks = [_step_task(i, sp) for i, sp in enumerate(plan)]
            self._emit(t, "warmstart-plan", None, rid,
                       steps=[f"{sp.domain}:{sp.kind}" for sp in plan])
        self._advance(r, t)

    def _on_transfer_complete(self, t, rid, token, node, source, inter_domain, payload):
        r = self.reqs[rid]
        if token != r.token:
            return
        r.phase = "queued"
        self._emit(t, "transfer-complete", node, rid, source=source, inter_domain=inter_domain, payload=payload)

    def _on_service_start(self, t, rid, token, node, task):
        r = self.reqs[rid]
        if token != r.token:
            return
        r.phase = "service"
        self._emit(t, "service-start", node, rid, task=task)

    def _on_service_complete(self, t, rid, token, node, task, service_ms):
        r = self.reqs[rid]
        if token != r.token:
            return
        tk = r.active_task
        r.location, r.active_node, r.active_task, r.phase = node, None, None, None
        r.quality = min(1.0, r.quality + tk.quality_gain)
        if tk.output_payload is not None:
            r.payload = tk.output_payload
        self._emit(t, "service-complete", node, rid, task=task, service_ms=service_ms,
                   quantum=tk.quantum, quality=round(r.quality, 6))
        self._finish_task(r, tk)
        self._advance(r, t)

    def _on_outage(self, t, node, until):
        st = self.state
        st.down.add(node)
        st.slot_free[node] = [until] * len(st.slot_free[node])
        self._emit(t, "outage", node, None, until=until)
        hit = sorted((r for r in self.reqs.values() if r.status == "pending" and r.active_node == node),
                     key=lambda r: r.index)
        for r in hit:
            r.token += 1
            r.reroutes += 1
            self._emit(t, "reroute", node, r.spec.id, phase=r.phase, task=r.active_task.id, attempt=r.reroutes)
            r.active_node, r.active_task, r.phase = None, None, None
            if r.reroutes > self.config.simulation.max_reroutes:
                self._terminal(r, t, "failed", reason="reroute limit reached")
            else:
                self._advance(r, t)

    def _on_recovery(self, t, node):
        st = self.state
        st.down.discard(node)
        st.slot_free[node] = [max(s, t) for s in st.slot_free[node]]
        self._emit(t, "recovery", node, None)

    # -- request progression ------------------------------------------------
    def _warmstart_plan(self, r: _Request) -> list[StepPlacement]:
        ws = self.config.warmstart
        name = ws.clients.get(r.spec.client, "default")
        if name not in ws.pipelines:
            name = sorted(ws.pipelines)[0]
        owned = [n for n in self.config.nodes if n.domain == "edge" and n.client == r.spec.client]
        caps = ClientCapabilities(
            r.spec.client,
            frozenset(n.resource for n in owned),
            sum(self.state.energy[n.id] for n in owned),
        )
        domain_resources = {
            d: frozenset(n.resource for n in self.config.nodes if n.domain == d and n.id not in self.state.down)
            for d in ("fog", "cloud")
        }
        return apply_warmstart_chain(caps, ws.pipelines[name], r.spec.slo.quality_target,
                                     domain_resources, ws.final_task)

    def _next_tasks(self, r: _Request) -> list[Task]:
        if r.flow == "warmstart":
            return r.ws_tasks[r.ws_pos:r.ws_pos + 1]
        graph = self.config.graph
        if not r.started:
            r.started = True
            r.frontier = [graph.source]
        return [Task.from_unit(graph.unit(u)) for u in r.frontier]

    def _finish_task(self, r: _Request, task: Task) -> None:
        if r.flow == "warmstart":
            r.ws_pos += 1
            fmt = task.service_key[-1] if not task.quantum else None
            r.stage = "classified" if task.quantum else _FMT_STAGE.get(fmt, r.stage)
        else:
            unit = self.config.graph.unit(task.id)
            r.stage = unit.output
            r.frontier = self.config.graph.successors(task.id)

    def _skip(self, r: _Request, tasks: list[Task], t: float, reason: str) -> None:
        self._emit(t, "skip-qnn", None, r.spec.id, task=tasks[0].id, reason=reason)
        if r.flow == "warmstart":
            r.ws_pos += 1
            return
        graph = self.config.graph
        succ: list[str] = []
        for tk in tasks:
            for s in graph.successors(tk.id):
                if s not in succ:
                    succ.append(s)
        r.frontier = succ
        r.stage = graph.unit(tasks[0].id).output

    def _advance(self, r: _Request, t: float) -> None:
        while True:
            tasks = self._next_tasks(r)
            if not tasks:
                self._classify(r, t)
                return
            if (r.flow == "graph" and all(tk.quantum and tk.optional for tk in tasks)
                    and r.quality >= r.spec.slo.quality_target):
                self._skip(r, tasks, t, "quality target already met")
                continue
            view = RequestView(r.spec.id, r.spec.client, r.location, r.payload, r.spec.payload,
                               r.deadline, r.spec.slo.quantum_optional)
            p = self.policy.route(view, tasks, self.state, t)
            if p.decision == "skip-qnn":
                self._skip(r, tasks, t, p.reason)
                continue
            if p.decision == "reject":
                self._terminal(r, t, "rejected", task=p.task, reason=p.reason, slo_violation=True)
                return
            self._dispatch(r, [tk for tk in tasks if tk.id == p.task][0], p, t)
            return

    def _dispatch(self, r: _Request, task: Task, p: Placement, t: float) -> None:
        st = self.state
        node = self.config.node(p.node)
        jitter = self.config.simulation.jitter_ms
        service = p.service_ms + (float(self._rng_jitter.exponential(jitter)) if jitter > 0 else 0.0)
        completion = p.start_ms + service
        i, _ = st.earliest_slot(node.id)
        st.slot_free[node.id][i] = completion
        if node.domain == "edge":
            st.energy[node.id] -= task.energy_cost
        r.token += 1
        r.active_node, r.active_task, r.phase = node.id, task, "transfer"
        detail = dict(task=task.id, decision=p.decision, predicted_completion=round(p.completion_ms, 6))
        if p.mode is not None:
            detail.update(quantum_mode=p.mode.mode, cut_combinations=p.mode.n_combinations)
        self._emit(t, "dispatch", node.id, r.spec.id, **detail)
        rid, tok = r.spec.id, r.token
        self._push(p.ready_ms, "transfer-complete", rid=rid, token=tok, node=node.id,
                   source=r.location or f"device:{r.spec.client}", inter_domain=p.inter_domain, payload=r.payload)
        self._push(p.start_ms, "service-start", rid=rid, token=tok, node=node.id, task=task.id)
        self._push(completion, "service-complete", rid=rid, token=tok, node=node.id, task=task.id,
                   service_ms=round(service, 6))

    def _classify(self, r: _Request, t: float) -> None:
        latency = t - r.spec.arrival_ms
        self._terminal(r, t, "classified", latency_ms=round(latency, 6),
                       slo_violation=latency > r.spec.slo.latency_budget_ms + SLO_SLACK_MS)

    def _terminal(self, r: _Request, t: float, status: str, **detail) -> None:
        r.status = status
        r.token += 1
        detail.setdefault("slo_violation", True)
        self._emit(t, status, None, r.spec.id, **detail)


def _step_task(i: int, sp: StepPlacement) -> Task:
    return Task(id=f"{i}:{sp.kind}", resources=(sp.resource,), domains=(sp.domain,), service_key=sp.kind,
                service_ms=sp.service_ms, quantum=sp.final, energy_cost=sp.energy_cost,
                quality_gain=sp.intensity_gain)


def compute_metrics(events: list[TraceEvent], config: ContinuumConfig, outcomes: dict[str, str]) -> dict:
    """Aggregate metrics. Computed from the full event list, never the sampled trace."""
    lat = np.array([e.detail["latency_ms"] for e in events if e.event == "classified"], dtype=float)
    count = lambda name: sum(1 for e in events if e.event == name)
    makespan = max((e.t for e in events if e.request is not None), default=0.0)
    pct = (lambda q: float(np.percentile(lat, q))) if lat.size else (lambda q: 0.0)
    m: dict = {
        "arrivals": count("arrival"),
        "classified": count("classified"),
        "rejected": count("rejected"),
        "failed": count("failed"),
        "slo_violations": sum(1 for e in events if e.event in ("classified", "rejected", "failed")
                              and e.detail.get("slo_violation")),
        "latency_mean_ms": float(lat.mean()) if lat.size else 0.0,
        "latency_p50_ms": pct(50),
        "latency_p95_ms": pct(95),
        "latency_p99_ms": pct(99),
        "latency_max_ms": float(lat.max()) if lat.size else 0.0,
        "qnn_used": sum(1 for e in events if e.event == "service-complete" and e.detail.get("quantum")),
        "qnn_skipped": count("skip-qnn"),
        "forwarded_to_cloud": sum(1 for e in events if e.event == "dispatch"
                                  and e.detail.get("decision") == "forward-to-cloud"),
        "reroutes": count("reroute"),
        "outages": count("outage"),
        "inter_domain_payload": float(sum(e.detail["payload"] for e in events
                                          if e.event == "transfer-complete" and e.detail["inter_domain"])),
        "makespan_ms": float(makespan),
    }
    slots = config.simulation.capacity_slots
    for node in sorted(config.nodes, key=lambda n: n.id):
        busy = sum(e.detail["service_ms"] for e in events if e.event == "service-complete" and e.node == node.id)
        m[f"utilization[{node.id}]"] = busy / (slots[node.capacity_class] * makespan) if makespan > 0 else 0.0
    return m


def simulate(config: ContinuumConfig, *, seed: int | None = None, policy: RoutingPolicy | None = None,
             outages: list[tuple[str, float, float]] = ()) -> SimulationResult:
    sim = ContinuumSimulator(config, seed=seed, policy=policy)
    for node, at, dur in outages:
        sim.inject_outage(node, at, dur)
    return sim.run()


def single_request(config: ContinuumConfig, client: str, slo: SloSpec, arrival_ms: float = 0.0,
                   payload: float = 1.0, flow: str | None = None) -> SimulationResult:
    """Convenience: run ``config`` with its workload replaced by one request."""
    wl = config.workload.model_copy(update={
        "requests": [RequestSpec(id="r0", client=client, arrival_ms=arrival_ms, slo=slo, payload=payload,
                                 flow=flow)],
        "generator": None,
    })
    return simulate(config.model_copy(update={"workload": wl}))
