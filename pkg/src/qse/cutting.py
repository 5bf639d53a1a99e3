"""Wire and gate cutting with exact linear-combination reconstruction.

Wire cut (8 terms, sum |c| = 4). The identity channel on the cut wire is

    rho = 1/2 [ Tr(rho) (|0><0| + |1><1|)
               + sum_{P in X,Y,Z} Tr(P rho) (|P+><P+| - |P-><P-|) ]

so each term measures ``P`` (or nothing, for the identity pair) at the end
of the upstream segment and prepares one eigenstate on a fresh downstream
qubit, with coefficient +1/2 or -1/2.

Gate cut (6 terms, sum |c| = 3). ``CNOT(c, t) = H_t CZ H_t`` and, up to a
global phase, ``CZ = RZ_c(pi/2) RZ_t(pi/2) exp(i pi/4 Z_c Z_t)``. The ZZ
rotation channel decomposes into local operations::

    1/2 id  +  1/2 (Z x Z)  +  1/2 M x (S+ - S-)  +  1/2 (S+ - S-) x M

where ``M`` is a Z measurement weighted by its +-1 outcome and
``S+ = RZ(-pi/2)``, ``S- = RZ(pi/2)``.

Measurements with a +-1 outcome weight are realised as ``MeasureCollapse``
branches: every fragment variant expands into one :class:`SubcircuitInstance`
per outcome assignment, weighted by the product of outcome signs.
"""
from __future__ import annotations

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import pi, prod
from typing import Callable, Mapping, Sequence

from .errors import ExecutorError, IncompleteResultsError, InvalidArgumentError, InvalidPlanError
from .statevector import (
    CNOT, RY, RZ, Circuit, H, MeasureCollapse, PrepareState, expectation_pauli_product, run_circuit,
)

log = logging.getLogger(__name__)

WIRE_TERMS_PER_CUT = 8
GATE_TERMS_PER_CUT = 6

Observable = tuple[tuple[int, str], ...]


@dataclass(frozen=True)
class CutPlan:
    """``wire_cuts``: (gate_index, qubit) -- cut ``qubit`` right after gate
    ``gate_index`` (``-1`` cuts before the first gate). ``gate_cuts``: indices
    of CNOT gates to replace by local operations."""

    wire_cuts: tuple[tuple[int, int], ...] = ()
    gate_cuts: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "wire_cuts", tuple((int(g), int(q)) for g, q in self.wire_cuts))
        object.__setattr__(self, "gate_cuts", tuple(int(g) for g in self.gate_cuts))

    @property
    def n_cuts(self) -> int:
        return len(self.wire_cuts) + len(self.gate_cuts)

    @property
    def n_combinations(self) -> int:
        return WIRE_TERMS_PER_CUT ** len(self.wire_cuts) * GATE_TERMS_PER_CUT ** len(self.gate_cuts)

    def validate(self, circuit: Circuit) -> None:
        n_gates = len(circuit.gates)
        if len(set(self.wire_cuts)) != len(self.wire_cuts):
            raise InvalidPlanError(f"duplicate wire cut in {self.wire_cuts}")
        if len(set(self.gate_cuts)) != len(self.gate_cuts):
            raise InvalidPlanError(f"duplicate gate cut in {self.gate_cuts}")
        for g, q in self.wire_cuts:
            if not (-1 <= g < n_gates):
                raise InvalidPlanError(f"wire cut after gate {g}: circuit has {n_gates} gates")
            if not (0 <= q < circuit.n_qubits):
                raise InvalidPlanError(f"wire cut on qubit {q}: circuit has {circuit.n_qubits} qubits")
        for g in self.gate_cuts:
            if not (0 <= g < n_gates):
                raise InvalidPlanError(f"gate cut index {g} out of range ({n_gates} gates)")
            if circuit.gates[g].kind != "CNOT":
                raise InvalidPlanError(f"gate cut index {g} references {circuit.gates[g]!r}, not a CNOT")
        for i, gate in enumerate(circuit.gates):
            if not gate.is_unitary:
                raise InvalidPlanError(f"only unitary circuits can be cut; gate {i} is {gate!r}")


@dataclass(frozen=True)
class WireSubstitution:
    measure: str   # "I", "X", "Y" or "Z" on the upstream segment
    prepare: str   # eigenstate label for the downstream segment


@dataclass(frozen=True)
class GateSubstitution:
    control: str   # one of "I", "Z", "S+", "S-", "M"
    target: str


@dataclass(frozen=True)
class CutTerm:
    coefficient: float
    substitutions: tuple


_WIRE_TERMS = (
    ("I", "Z+", 0.5), ("I", "Z-", 0.5),
    ("X", "X+", 0.5), ("X", "X-", -0.5),
    ("Y", "Y+", 0.5), ("Y", "Y-", -0.5),
    ("Z", "Z+", 0.5), ("Z", "Z-", -0.5),
)

_GATE_TERMS = (
    ("I", "I", 0.5), ("Z", "Z", 0.5),
    ("M", "S+", 0.5), ("M", "S-", -0.5),
    ("S+", "M", 0.5), ("S-", "M", -0.5),
)

_LOCAL_ANGLE = {"Z": pi, "S+": -pi / 2, "S-": pi / 2}


def expand_wire_cut(circuit: Circuit, location: tuple[int, int]) -> list[CutTerm]:
    CutPlan(wire_cuts=(location,)).validate(circuit)
    return [CutTerm(c, (WireSubstitution(m, p),)) for m, p, c in _WIRE_TERMS]


def expand_gate_cut(circuit: Circuit, cnot_index: int) -> list[CutTerm]:
    CutPlan(gate_cuts=(cnot_index,)).validate(circuit)
    return [CutTerm(c, (GateSubstitution(a, b),)) for a, b, c in _GATE_TERMS]


@dataclass(frozen=True)
class SubcircuitInstance:
    """One executable fragment circuit for one measurement-outcome branch.

    Its contribution to the fragment value is
    ``weight * P(branch) * <observable>``.
    """

    fragment: int
    variant: tuple[int, ...]
    circuit: Circuit
    weight: float
    observable: Observable
    outcomes: tuple[int, ...] = ()


@dataclass(frozen=True)
class Fragment:
    index: int
    nodes: tuple[tuple[int, int], ...]    # local qubit i <-> (original qubit, wire segment)
    cuts: tuple[int, ...]                 # plan-order indices of the cuts touching this fragment
    observable: Observable                # in local qubit indices

    @property
    def width(self) -> int:
        return len(self.nodes)

    @property
    def qubits(self) -> tuple[int, ...]:
        return tuple(sorted({q for q, _ in self.nodes}))


@dataclass(frozen=True)
class Combination:
    key: tuple[int, ...]          # term index per cut, plan order (wire cuts, then gate cuts)
    coefficient: float
    variants: tuple[tuple[int, ...], ...]   # variant key per fragment


@dataclass
class CutExpansion:
    circuit: Circuit
    plan: CutPlan
    observable: Observable
    fragments: list[Fragment]
    terms: list[list[CutTerm]]
    combinations: list[Combination]
    variants: dict[tuple[int, tuple[int, ...]], list[SubcircuitInstance]] = field(repr=False)

    @property
    def n_combinations(self) -> int:
        return len(self.combinations)

    def instances(self, combination: Combination) -> list[list[SubcircuitInstance]]:
        """Per-fragment instances of one combination."""
        return [self.variants[(f.index, combination.variants[f.index])] for f in self.fragments]

    def max_fragment_width(self) -> int:
        return max(f.width for f in self.fragments)


def _check_observable(circuit: Circuit, observable) -> Observable:
    obs = tuple((int(q), str(p)) for q, p in observable)
    qubits = [q for q, _ in obs]
    if len(set(qubits)) != len(qubits):
        raise InvalidArgumentError(f"duplicate qubit in observable {obs}")
    for q, p in obs:
        if not (0 <= q < circuit.n_qubits):
            raise InvalidArgumentError(f"observable qubit {q} out of range")
        if p not in ("I", "X", "Y", "Z"):
            raise InvalidArgumentError(f"unknown Pauli {p!r}")
    return tuple((q, p) for q, p in obs if p != "I")


class _UnionFind:
    def __init__(self, items):
        self.parent = {i: i for i in items}

    def find(self, a):
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def _segmenter(circuit: Circuit, plan: CutPlan):
    cuts_on = {q: sorted(g for g, qq in plan.wire_cuts if qq == q) for q in range(circuit.n_qubits)}

    def segment(q: int, gate_index: int) -> int:
        return sum(1 for g in cuts_on[q] if g < gate_index)

    return cuts_on, segment


def partition_fragments(circuit: Circuit, plan: CutPlan) -> list[tuple[tuple[int, int], ...]]:
    """Group (qubit, wire segment) nodes into fragments linked by uncut CNOTs.

    Fragments are ordered by their smallest node. An empty plan yields a
    single fragment holding every qubit.
    """
    plan.validate(circuit)
    n = circuit.n_qubits
    cuts_on, segment = _segmenter(circuit, plan)
    gate_cut_set = set(plan.gate_cuts)
    nodes = [(q, s) for q in range(n) for s in range(len(cuts_on[q]) + 1)]
    uf = _UnionFind(nodes)
    if plan.n_cuts == 0:
        for q in range(1, n):
            uf.union((0, 0), (q, 0))
    for i, gate in enumerate(circuit.gates):
        if gate.kind == "CNOT" and i not in gate_cut_set:
            c, t = gate.qubits
            uf.union((c, segment(c, i)), (t, segment(t, i)))
    groups: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for node in nodes:
        groups.setdefault(uf.find(node), []).append(node)
    return [tuple(sorted(m)) for m in sorted(groups.values(), key=min)]


def enumerate_subcircuits(circuit: Circuit, plan: CutPlan, observable) -> CutExpansion:
    """Expand ``plan`` into fragments, variants and weighted combinations.

    Variants are deduplicated: a fragment's circuit only depends on the terms
    chosen for the cuts that touch it, so each distinct choice is listed once
    and shared by every combination that uses it.
    """
    ordered = partition_fragments(circuit, plan)
    obs = _check_observable(circuit, observable)
    n = circuit.n_qubits
    n_wire = len(plan.wire_cuts)
    cuts_on, segment = _segmenter(circuit, plan)
    frag_of = {node: fi for fi, members in enumerate(ordered) for node in members}
    local = {node: members.index(node) for members in ordered for node in members}

    # which cuts touch each fragment
    touching: list[set[int]] = [set() for _ in ordered]
    for k, (g, q) in enumerate(plan.wire_cuts):
        s = segment(q, g + 1)
        touching[frag_of[(q, s - 1)]].add(k)
        touching[frag_of[(q, s)]].add(k)
    for j, g in enumerate(plan.gate_cuts):
        c, t = circuit.gates[g].qubits
        touching[frag_of[(c, segment(c, g))]].add(n_wire + j)
        touching[frag_of[(t, segment(t, g))]].add(n_wire + j)

    last_node = {q: (q, len(cuts_on[q])) for q in range(n)}
    frag_obs: list[list[tuple[int, str]]] = [[] for _ in ordered]
    for q, p in obs:
        node = last_node[q]
        frag_obs[frag_of[node]].append((local[node], p))

    fragments = [
        Fragment(fi, members, tuple(sorted(touching[fi])), tuple(sorted(frag_obs[fi])))
        for fi, members in enumerate(ordered)
    ]

    terms = [expand_wire_cut(circuit, loc) for loc in plan.wire_cuts]
    terms += [expand_gate_cut(circuit, g) for g in plan.gate_cuts]

    variants: dict[tuple[int, tuple[int, ...]], list[SubcircuitInstance]] = {}
    for frag in fragments:
        choices = [range(len(terms[k])) for k in frag.cuts]
        for vkey in itertools.product(*choices):
            chosen = dict(zip(frag.cuts, vkey))
            variants[(frag.index, vkey)] = _build_variant(circuit, plan, frag, chosen, terms,
                                                          segment, frag_of, local, vkey)

    combinations = []
    for key in itertools.product(*[range(len(t)) for t in terms]):
        coef = prod(terms[k][i].coefficient for k, i in enumerate(key))
        vkeys = tuple(tuple(key[k] for k in f.cuts) for f in fragments)
        combinations.append(Combination(tuple(key), float(coef), vkeys))

    return CutExpansion(circuit, plan, obs, fragments, terms, combinations, variants)


def _build_variant(circuit, plan, frag, chosen, terms, segment, frag_of, local, vkey):
    """All measurement branches of one fragment for one choice of terms."""
    n_wire = len(plan.wire_cuts)
    ops: list[tuple[float, int, object]] = []   # (position, tie-break, op); op "M" = branch point
    seq = 0

    def emit(pos, node, op):
        nonlocal seq
        if frag_of[node] == frag.index:
            ops.append((pos, seq, (local[node], op)))
            seq += 1

    gate_cut_index = {g: n_wire + j for j, g in enumerate(plan.gate_cuts)}
    for i, gate in enumerate(circuit.gates):
        if i in gate_cut_index:
            k = gate_cut_index[i]
            if k not in chosen:
                continue
            sub = terms[k][chosen[k]].substitutions[0]
            c, t = gate.qubits
            cn, tn = (c, segment(c, i)), (t, segment(t, i))
            for op in _local_ops(sub.control) + [("RZ", pi / 2)]:
                emit(i, cn, op)
            for op in [("H",)] + _local_ops(sub.target) + [("RZ", pi / 2), ("H",)]:
                emit(i, tn, op)
            continue
        if gate.kind == "CNOT":
            c, t = gate.qubits
            cn, tn = (c, segment(c, i)), (t, segment(t, i))
            if frag_of[cn] == frag.index:
                ops.append((i, seq, ("CNOT", local[cn], local[tn])))
                seq += 1
            continue
        q = gate.qubits[0]
        op = ("H",) if gate.kind == "H" else (gate.kind, gate.theta)
        emit(i, (q, segment(q, i)), op)

    for k, (g, q) in enumerate(plan.wire_cuts):
        if k not in chosen:
            continue
        sub = terms[k][chosen[k]].substitutions[0]
        s = segment(q, g + 1)
        if sub.measure != "I":
            emit(g + 0.5, (q, s - 1), ("M", sub.measure))
        emit(g + 0.5, (q, s), ("P", sub.prepare))

    ops.sort(key=lambda item: (item[0], item[1]))
    n_branch = sum(1 for _, _, op in ops if op[0] != "CNOT" and op[1][0] == "M")  # op = (local, (name, ...))
    instances = []
    for outcomes in itertools.product((1, -1), repeat=n_branch):
        gates, it = [], iter(outcomes)
        for _, _, op in ops:
            if op[0] == "CNOT":
                gates.append(CNOT(op[1], op[2]))
                continue
            lq, (name, *args) = op
            if name == "H":
                gates.append(H(lq))
            elif name in ("RY", "RZ"):
                gates.append((RY if name == "RY" else RZ)(lq, args[0]))
            elif name == "M":
                gates.append(MeasureCollapse(lq, args[0], next(it)))
            elif name == "P":
                gates.append(PrepareState(lq, args[0]))
        instances.append(SubcircuitInstance(
            frag.index, vkey, Circuit(frag.width, gates), float(prod(outcomes)), frag.observable, outcomes,
        ))
    return instances


def _local_ops(name: str) -> list[tuple]:
    if name == "I":
        return []
    if name == "M":
        return [("M", "Z")]
    return [("RZ", _LOCAL_ANGLE[name])]


Executor = Callable[[SubcircuitInstance], float]


def statevector_executor(instance: SubcircuitInstance) -> float:
    """``P(branch) * <observable>`` for one instance, starting from |0...0>."""
    state, weight = run_circuit(instance.circuit)
    if weight == 0.0:
        return 0.0
    return weight * expectation_pauli_product(state, instance.observable)


def fragment_values(expansion: CutExpansion, instance_results: Mapping[tuple, Sequence[float]]) -> dict:
    """Combine per-instance executor results into one value per variant."""
    values = {}
    for vk, instances in expansion.variants.items():
        res = instance_results[vk]
        total = 0.0
        for inst, r in zip(instances, res):
            total += inst.weight * r
        values[vk] = total
    return values


def combination_results(expansion: CutExpansion, variant_values: Mapping) -> dict[tuple[int, ...], list[float]]:
    return {
        combo.key: [variant_values[(f.index, combo.variants[f.index])] for f in expansion.fragments]
        for combo in expansion.combinations
    }


def reconstruct(expansion: CutExpansion, results: Mapping[tuple[int, ...], Sequence[float]]) -> float:
    """Sum over combinations of coefficient x product of fragment values.

    ``results`` maps each combination key to its per-fragment values. The sum
    runs in combination order, so the result does not depend on how or when
    the values were produced.
    """
    total = 0.0
    for combo in expansion.combinations:
        if combo.key not in results:
            raise IncompleteResultsError(f"missing results for combination {combo.key}")
        vals = results[combo.key]
        if len(vals) != len(expansion.fragments):
            raise IncompleteResultsError(
                f"combination {combo.key}: expected {len(expansion.fragments)} fragment values, got {len(vals)}"
            )
        total += combo.coefficient * prod(vals)
    return total


def run_instances(expansion: CutExpansion, executor: Executor = statevector_executor,
                  parallelism: int = 1) -> dict:
    """Execute every instance; returns ``{variant key: [result per instance]}``."""
    jobs = [(vk, i, inst) for vk, insts in expansion.variants.items() for i, inst in enumerate(insts)]

    def call(job):
        vk, _, inst = job
        try:
            return executor(inst)
        except Exception as exc:  # noqa: BLE001 - re-raised with the failing instance identified
            combo = next((c.key for c in expansion.combinations
                          if c.variants[inst.fragment] == inst.variant), None)
            raise ExecutorError(
                f"executor failed on fragment {inst.fragment} variant {inst.variant} "
                f"(combination {combo}, outcomes {inst.outcomes}): {exc}",
                combination=combo, fragment=inst.fragment,
            ) from exc

    if parallelism > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            outputs = list(pool.map(call, jobs))
    else:
        outputs = [call(job) for job in jobs]

    results: dict = {vk: [None] * len(insts) for vk, insts in expansion.variants.items()}
    for (vk, i, _), out in zip(jobs, outputs):
        results[vk][i] = float(out)
    return results


def execute_cut(circuit: Circuit, plan: CutPlan, observable, executor: Executor = statevector_executor,
                parallelism: int = 1) -> float:
    """Enumerate, execute every fragment variant, reconstruct."""
    expansion = enumerate_subcircuits(circuit, plan, observable)
    log.debug("cut: %d combinations, %d variants, fragment widths %s", expansion.n_combinations,
              len(expansion.variants), [f.width for f in expansion.fragments])
    raw = run_instances(expansion, executor, parallelism)
    values = fragment_values(expansion, raw)
    return reconstruct(expansion, combination_results(expansion, values))


def uncut_expectation(circuit: Circuit, observable) -> float:
    state, _ = run_circuit(circuit)
    return expectation_pauli_product(state, _check_observable(circuit, observable))


def block_gate_cut_plan(circuit: Circuit, max_width: int) -> CutPlan:
    """Gate-cut every CNOT that crosses a boundary between contiguous qubit
    blocks of ``max_width`` qubits. Fragments then never exceed ``max_width``."""
    if max_width < 1:
        raise InvalidArgumentError("max_width must be >= 1")
    block = [q // max_width for q in range(circuit.n_qubits)]
    cuts = [i for i, g in enumerate(circuit.gates)
            if g.kind == "CNOT" and block[g.qubits[0]] != block[g.qubits[1]]]
    return CutPlan(gate_cuts=tuple(cuts))
