"""UMQ gate plans from adjacent pair gates and SWAP networks.

The target qubit starts on one end of the chain. It is entangled with its
neighbour, swapped one site inwards, entangled with the next ion and so on,
so ``L - 1`` phase gates and ``L - 2`` SWAPs (3 CNOTs each) give ``4L - 7``
fast gates. The target state ends up on the far end of the chain. Local
rotations are free in time and error.

Besides the bookkeeping this module holds the budget arithmetic used for
comparisons (simulation threshold, MS timing, heating budget) and a
brute-force simulation of a whole UMQ circuit with imperfect pulses.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from fastgate.errors import InvalidArgument
from fastgate.gate_design import KickSequence
from fastgate.ion_chain import ModeStructure

SWAP_CNOTS = 3
LOCALS_PER_CNOT = 4
MS_PAIR_TIME_S = 50e-6
HUBBARD_UMQ_COUNT = 2680  # 10 Trotter steps of a 20-site lattice, taken as given

_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
_RZ = np.diag(np.exp(-1j * np.pi / 4 * np.array([1.0, -1.0])))  # exp(-i pi/4 Z)


@dataclass(frozen=True)
class PairGate:
    i: int
    j: int


@dataclass(frozen=True)
class Swap:
    i: int
    j: int


def fast_gate_count(L: int) -> int:
    if int(L) != L or L < 2:
        raise InvalidArgument(f"ion count must be an integer >= 2, got {L!r}")
    return 1 if L == 2 else 4 * L - 7


def umq_steps(L: int, target_ion: int = 0) -> list:
    """Ordered PairGate / Swap steps; the target walks away from its end of the chain."""
    fast_gate_count(L)
    if target_ion == 0:
        sites = list(range(L))
    elif target_ion == L - 1:
        sites = list(range(L - 1, -1, -1))
    else:
        raise InvalidArgument("the target ion must sit at an end of the chain")
    steps = []
    for k in range(L - 1):
        a, b = sorted((sites[k], sites[k + 1]))
        steps.append(PairGate(a, b))
        if k < L - 2:
            steps.append(Swap(a, b))
    return steps


@dataclass
class UmqPlan:
    ion_count: int
    target_ion: int
    steps: list
    gates: dict = field(repr=False)  # (i, j) -> GateOutcome

    @property
    def fast_gate_count(self) -> int:
        return sum(1 if isinstance(s, PairGate) else SWAP_CNOTS for s in self.steps)

    @property
    def local_rotation_count(self) -> int:
        return sum(LOCALS_PER_CNOT * SWAP_CNOTS for s in self.steps if isinstance(s, Swap))

    @property
    def reversed_fast_gate_count(self) -> int:
        # undoing the qubit displacement costs another pass; reuse of sequences is not assumed
        return self.fast_gate_count

    def _gate_outcomes(self):
        for s in self.steps:
            g = self.gates[(s.i, s.j)]
            yield from ([g] if isinstance(s, PairGate) else [g] * SWAP_CNOTS)

    @property
    def fidelity_bound(self) -> float:
        return float(np.prod([g.fidelity for g in self._gate_outcomes()]))

    @property
    def duration(self) -> float:
        return float(sum(g.duration for g in self._gate_outcomes()))

    @property
    def feasible(self) -> bool:
        return all(g.feasible for g in self.gates.values())

    def to_dict(self, include_reverse: bool = False) -> dict:
        mult = 2 if include_reverse else 1
        return {
            "ion_count": self.ion_count,
            "target_ion": self.target_ion,
            "steps": [{"kind": "gate" if isinstance(s, PairGate) else "swap", "pair": [s.i, s.j]} for s in self.steps],
            "fast_gate_count": self.fast_gate_count * mult,
            "reversed_fast_gate_count": self.reversed_fast_gate_count,
            "local_rotation_count": self.local_rotation_count * mult,
            "fidelity_bound": self.fidelity_bound**mult,
            "duration_s": self.duration * mult,
            "include_reverse": include_reverse,
            "pair_gates": {f"{i}-{j}": g.to_dict() for (i, j), g in sorted(self.gates.items())},
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(**kw))


def umq_plan(L: int, pair_gates, target_ion: int = 0) -> UmqPlan:
    """Plan over ``L`` ions; ``pair_gates`` maps ``(i, i+1)`` to GateOutcome (or is a list ordered by ``i``)."""
    steps = umq_steps(L, target_ion)
    if not isinstance(pair_gates, dict):
        pair_gates = {tuple(g.sequence.pair): g for g in pair_gates}
    gates = {}
    for s in steps:
        key = (s.i, s.j)
        g = pair_gates.get(key)
        if g is None:
            raise InvalidArgument(f"no gate supplied for pair {key}")
        gates[key] = g
    return UmqPlan(L, target_ion, steps, gates)


def simulation_threshold(num_umq_gates: int, target_total_fidelity: float) -> float:
    """Per-UMQ fidelity whose ``num_umq_gates``-th power reaches the target."""
    if num_umq_gates < 1:
        raise InvalidArgument("need at least one UMQ gate")
    if not 0 < target_total_fidelity <= 1:
        raise InvalidArgument("target fidelity must lie in (0, 1]")
    return float(target_total_fidelity ** (1.0 / num_umq_gates))


def ms_time(n_ions: int, t1: float = MS_PAIR_TIME_S) -> float:
    if n_ions < 1:
        raise InvalidArgument("need at least one ion")
    return float(np.sqrt(n_ions) * t1)


@dataclass(frozen=True)
class HeatingBudget:
    absorption_probability: float
    per_umq_time: float | None


def heating_time_budget(heating_rate: float, total_time: float, umq_count: int | None = None) -> HeatingBudget:
    """Chance of at least one absorbed phonon over ``total_time``, plus the time available per UMQ."""
    if heating_rate < 0 or total_time < 0:
        raise InvalidArgument("rate and time must be >= 0")
    p = float(-np.expm1(-heating_rate * total_time))
    per = None if umq_count is None else total_time / umq_count
    return HeatingBudget(p, per)


def uncorrelated_error_aggregate(per_gate_error: float, gate_count: int) -> float:
    if per_gate_error < 0 or gate_count < 1:
        raise InvalidArgument("error must be >= 0 and gate count >= 1")
    return float(per_gate_error * np.sqrt(gate_count))


# ---------------------------------------------------------------- circuit level


def _cz_locals(c, t):
    return [((c,), _RZ), ((t,), _RZ)]


def circuit_ops(plan: UmqPlan) -> list:
    """Expand the plan into ``("gate", (i, j))`` and ``("local", qubits, U)`` operations.

    ``CNOT(c -> t) = H_t CZ H_t`` and ``CZ = e^{i pi/4} e^{-i pi/4 Z_c} e^{-i pi/4 Z_t} U_I``
    with ``U_I = exp(i pi/4 Z_c Z_t)``; the global phase is dropped.
    """
    ops = []

    def cnot(c, t):
        ops.append(("local", (t,), _H))
        ops.append(("gate", tuple(sorted((c, t)))))
        ops.extend(("local", q, u) for q, u in _cz_locals(c, t))
        ops.append(("local", (t,), _H))

    for s in plan.steps:
        if isinstance(s, PairGate):
            ops.append(("gate", (s.i, s.j)))
        else:
            cnot(s.i, s.j)
            cnot(s.j, s.i)
            cnot(s.i, s.j)
    return ops


def _apply_qubit_op(psi, nq, qubits, u):
    k = len(qubits)
    psi = psi.reshape((2,) * nq)
    out = np.tensordot(u.reshape((2,) * (2 * k)), psi, axes=(list(range(k, 2 * k)), list(qubits)))
    return np.moveaxis(out, list(range(k)), list(qubits)).ravel()


def ideal_circuit_state(plan: UmqPlan, psi0=None) -> np.ndarray:
    """Qubit state after the circuit with every fast gate replaced by the ideal phase gate."""
    from fastgate.oracle_sim import ideal_phase_gate, plus_state

    L = plan.ion_count
    psi = plus_state(L) if psi0 is None else np.asarray(psi0, dtype=complex)
    uid = ideal_phase_gate()
    for op in circuit_ops(plan):
        if op[0] == "gate":
            psi = _apply_qubit_op(psi, L, op[1], uid)
        else:
            psi = _apply_qubit_op(psi, L, op[1], op[2])
    return psi


@dataclass(frozen=True)
class UmqPulseError:
    fidelity: float  # against the ideal circuit
    pulse_infidelity: float  # against the same circuit with perfect pulses
    n_max: int


def _umq_final(plan, modes, xi, level, n_max, relative_phase):
    from fastgate.oracle_sim import FockSimulator, check_truncation, plus_state

    sim = FockSimulator(modes, range(plan.ion_count), n_max)
    state = sim.product_state(plus_state(plan.ion_count), [level] * plan.ion_count)
    for op in circuit_ops(plan):
        if op[0] == "gate":
            seq: KickSequence = plan.gates[op[1]].sequence
            state = sim.run_sequence(state, seq, xi=xi, relative_phase=relative_phase)
        else:
            state = sim.local(state, op[1], op[2])
    check_truncation(state, n_max)
    return state


def umq_pulse_error(plan: UmqPlan, modes: ModeStructure, xi: float, level: int = 1, n_max: int | None = None,
                    relative_phase: float = np.pi) -> UmqPulseError:
    """Joint simulation of the whole UMQ circuit built from imperfect pulses.

    All ``L`` modes and qubits are simulated together (practical for ``L = 3``
    and small ``n``). Every mode starts in the number state ``level``; gates
    run back to back. Reports the representative fidelity against the ideal
    circuit, and the infidelity against the perfect-pulse circuit, which
    isolates the pulse error from the design error of the kick sequences.
    """
    from fastgate.oracle_sim import plus_state, representative_fidelity, suggest_n_max

    L = plan.ion_count
    if n_max is None:
        n_max = max(suggest_n_max(g.sequence, modes, level) for g in plan.gates.values())
    state = _umq_final(plan, modes, xi, level, n_max, relative_phase)
    mot = np.zeros([n_max] * L, dtype=complex)
    mot[(level,) * L] = 1.0
    f = representative_fidelity(state, ideal_circuit_state(plan, plus_state(L)), mot)
    ref = _umq_final(plan, modes, 1.0, level, n_max, relative_phase)
    overlap = np.vdot(ref.amplitudes.ravel(), state.amplitudes.ravel())
    return UmqPulseError(f, float(max(1.0 - abs(overlap) ** 2, 0.0)), n_max)
