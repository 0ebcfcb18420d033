from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fastgate.errors import InvalidArgument
from fastgate.gate_design import GateOutcome, frag_sequence
from fastgate.oracle_sim import ideal_phase_gate, plus_state
from fastgate.umq_composer import (
    PairGate,
    Swap,
    _apply_qubit_op,
    circuit_ops,
    fast_gate_count,
    heating_time_budget,
    ideal_circuit_state,
    ms_time,
    simulation_threshold,
    umq_plan,
    umq_pulse_error,
    umq_steps,
    uncorrelated_error_aggregate,
)


def _gates(modes, L, n=1):
    return [GateOutcome.evaluate(frag_sequence(n, 0.31e-6, 0.22e-6, 0.13e-6, pair=(i, i + 1)), modes, 0.1)
            for i in range(L - 1)]


def _circuit_unitary(plan):
    L = plan.ion_count
    cols = []
    for k in range(2**L):
        psi = np.zeros(2**L, dtype=complex)
        psi[k] = 1
        cols.append(ideal_circuit_state(plan, psi))
    return np.array(cols).T


@given(st.integers(min_value=3, max_value=60))
def test_gate_count_formula(L):
    steps = umq_steps(L)
    n_gate = sum(isinstance(s, PairGate) for s in steps)
    n_swap = sum(isinstance(s, Swap) for s in steps)
    assert n_gate == L - 1 and n_swap == L - 2
    assert n_gate + 3 * n_swap == fast_gate_count(L) == 4 * L - 7


def test_steps_order_and_ends():
    assert umq_steps(3) == [PairGate(0, 1), Swap(0, 1), PairGate(1, 2)]
    assert umq_steps(3, target_ion=2) == [PairGate(1, 2), Swap(1, 2), PairGate(0, 1)]
    with pytest.raises(InvalidArgument):
        umq_steps(4, target_ion=1)
    with pytest.raises(InvalidArgument):
        fast_gate_count(1)


def test_plan_counts_and_aggregates(modes3):
    gates = _gates(modes3, 3)
    plan = umq_plan(3, gates)
    assert plan.fast_gate_count == 5
    assert plan.local_rotation_count == 12
    assert plan.fidelity_bound == pytest.approx(gates[0].fidelity ** 4 * gates[1].fidelity)
    assert plan.duration == pytest.approx(4 * gates[0].duration + gates[1].duration)
    d = json.loads(plan.to_json(include_reverse=True))
    assert d["fast_gate_count"] == 10
    assert d["fidelity_bound"] == pytest.approx(plan.fidelity_bound ** 2)


def test_plan_missing_pair(modes3):
    with pytest.raises(InvalidArgument):
        umq_plan(3, {(0, 1): _gates(modes3, 3)[0]})


def test_swap_network_realises_swap(modes3):
    # one Swap step on its own, phases dropped: must equal SWAP up to a global phase
    plan = umq_plan(3, _gates(modes3, 3))
    plan.steps = [Swap(0, 1)]
    u = _circuit_unitary(plan)
    swap = np.eye(8)[[0, 1, 4, 5, 2, 3, 6, 7]]
    ph = np.vdot(swap[:, 0], u[:, 0])
    assert np.allclose(u, ph * swap, atol=1e-12)


def test_ideal_circuit_is_gate_swap_gate(modes3):
    plan = umq_plan(3, _gates(modes3, 3))
    uid = ideal_phase_gate()
    psi = plus_state(3)
    psi = _apply_qubit_op(psi, 3, (0, 1), uid)
    psi = _apply_qubit_op(psi, 3, (0, 1), np.eye(4)[[0, 2, 1, 3]])
    psi = _apply_qubit_op(psi, 3, (1, 2), uid)
    got = ideal_circuit_state(plan)
    assert abs(np.vdot(psi, got)) == pytest.approx(1.0, abs=1e-12)
    assert sum(op[0] == "gate" for op in circuit_ops(plan)) == 5


def test_threshold_arithmetic():
    f = simulation_threshold(2680, 0.7)
    assert f ** 2680 == pytest.approx(0.7, rel=1e-12)
    assert 1 - f == pytest.approx(1.331e-4, rel=1e-3)
    with pytest.raises(InvalidArgument):
        simulation_threshold(0, 0.7)
    with pytest.raises(InvalidArgument):
        simulation_threshold(10, 0)


def test_ms_time_and_budget():
    assert ms_time(40) == pytest.approx(np.sqrt(40) * 50e-6)
    b = heating_time_budget(10.0, 0.1, 2680)
    assert b.absorption_probability == pytest.approx(1 - np.exp(-1))
    assert b.per_umq_time == pytest.approx(0.1 / 2680)
    assert uncorrelated_error_aggregate(1e-4, 100) == pytest.approx(1e-3)
    with pytest.raises(InvalidArgument):
        heating_time_budget(-1, 1)


def test_umq_pulse_error_perfect_pulses(modes3):
    plan = umq_plan(3, _gates(modes3, 3))
    r = umq_pulse_error(plan, modes3, 1.0)
    assert r.pulse_infidelity == pytest.approx(0.0, abs=1e-10)
    assert 0 < r.fidelity <= 1


def test_umq_pulse_error_grows(modes3):
    plan = umq_plan(3, _gates(modes3, 3))
    a = umq_pulse_error(plan, modes3, 0.999).pulse_infidelity
    b = umq_pulse_error(plan, modes3, 0.998).pulse_infidelity
    assert 0 < a < b
