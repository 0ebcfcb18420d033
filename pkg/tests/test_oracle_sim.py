from __future__ import annotations

from math import factorial

import numpy as np
import pytest

from fastgate.errors import InvalidArgument, TruncationError
from fastgate.gate_design import (
    KickSequence,
    branch_phases,
    conditional_displacement,
    conditional_phase,
    frag_sequence,
    plus_state_fidelity,
    state_averaged_fidelity,
)
from fastgate.oracle_sim import (
    FockSimulator,
    PulseParams,
    displacement,
    evolve_sequence,
    ideal_phase_gate,
    oracle_phase_and_displacements,
    plus_state,
    pulse_error_gate,
    pulse_infidelity,
    representative_fidelity,
    rotational_infidelity,
    square_pulse,
    thermal_gate_fidelity,
    thermal_weights,
    unitary_representative_fidelity,
)

SEQ = frag_sequence(1, 0.31e-6, 0.22e-6, 0.13e-6)


def test_displacement_matches_coherent_state():
    beta = 0.7 - 0.4j
    d = displacement(beta, 40)
    k = np.arange(12)
    coh = np.exp(-abs(beta) ** 2 / 2) * beta**k / np.sqrt([factorial(int(x)) for x in k])
    assert d[:12, 0] == pytest.approx(coh, abs=1e-10)
    assert np.allclose(d.conj().T @ d, np.eye(40), atol=1e-12)


def test_thermal_weights_sum_and_ratio():
    w = thermal_weights(0.1)
    assert w.sum() == pytest.approx(1, abs=1e-8)
    assert w[1] / w[0] == pytest.approx(0.1 / 1.1)
    assert thermal_weights(0.0).tolist() == [1.0]
    with pytest.raises(InvalidArgument):
        thermal_weights(-1)


def test_ideal_gate_is_zz_phase():
    u = ideal_phase_gate()
    assert np.allclose(u, np.diag(np.exp(1j * np.pi / 4 * np.array([1, -1, -1, 1]))))


def test_oracle_reproduces_analytic_phase_and_displacement(modes2):
    chi, alpha = oracle_phase_and_displacements(SEQ, modes2)
    assert chi == pytest.approx(conditional_phase(SEQ, modes2), abs=1e-8)
    assert alpha == pytest.approx(conditional_displacement(SEQ, modes2), abs=1e-7)


def test_oracle_three_ion_outer_pair(modes3):
    seq = frag_sequence(1, 0.31e-6, 0.22e-6, 0.13e-6, pair=(1, 2))
    chi, alpha = oracle_phase_and_displacements(seq, modes3)
    assert chi == pytest.approx(conditional_phase(seq, modes3), abs=1e-8)
    assert alpha == pytest.approx(conditional_displacement(seq, modes3), abs=1e-7)


@pytest.mark.parametrize("nbar", [0.0, 0.1])
def test_thermal_fidelity_matches_analytic(modes2, nbar):
    assert thermal_gate_fidelity(SEQ, modes2, nbar) == pytest.approx(state_averaged_fidelity(SEQ, modes2, nbar), abs=1e-8)


def test_plus_state_fidelity_matches_traced_simulation(modes2):
    st = evolve_sequence(SEQ, modes2)
    f = representative_fidelity(st, ideal_phase_gate() @ plus_state(2))
    assert f == pytest.approx(plus_state_fidelity(SEQ, modes2, 0.0), abs=1e-8)


def test_kick_conserves_norm_and_branch_phase_zero_for_single_kick(modes2):
    seq = KickSequence((0.0,), (3,))
    st = evolve_sequence(seq, modes2)
    assert st.norm() == pytest.approx(1.0, abs=1e-12)
    assert np.all(branch_phases(seq, modes2) == 0)


def test_truncation_error_raised(modes2):
    with pytest.raises(TruncationError) as err:
        evolve_sequence(frag_sequence(8, 0.31e-6, 0.22e-6, 0.13e-6), modes2, n_max=6)
    assert err.value.suggested_n_max > 6


def test_rotational_infidelity_closed_form():
    for xi in (0.9, 0.99, 0.999, 1.0):
        assert rotational_infidelity(xi) == pytest.approx(np.sin(np.pi * (1 - xi) / 2) ** 2, abs=1e-14)
    with pytest.raises(InvalidArgument):
        rotational_infidelity(0)


def test_square_pulse_pi_is_flip():
    u = square_pulse(1.0)
    assert abs(u[1, 0]) == pytest.approx(1.0)
    assert unitary_representative_fidelity(u @ u, np.eye(2)) == pytest.approx(1.0)


def test_pulse_params_validation():
    with pytest.raises(InvalidArgument):
        PulseParams(xi=0)
    with pytest.raises(InvalidArgument):
        PulseParams(duration=-1)
    assert PulseParams(1.0, 1e-12).rabi_frequency == pytest.approx(np.pi / 2e-12)


def test_perfect_pulses_reproduce_kicks(modes2):
    a = evolve_sequence(SEQ, modes2, levels=[1, 1])
    b = evolve_sequence(SEQ, modes2, levels=[1, 1], xi=1.0)
    assert abs(np.vdot(a.amplitudes.ravel(), b.amplitudes.ravel())) == pytest.approx(1.0, abs=1e-10)
    assert pulse_infidelity(SEQ, modes2, 1.0) == pytest.approx(0.0, abs=1e-10)


def test_pulse_error_grows_with_area_error(modes2):
    e = [pulse_infidelity(SEQ, modes2, xi) for xi in (0.9995, 0.999, 0.998)]
    assert e[0] < e[1] < e[2]
    # quadratic in the area error
    assert e[2] / e[1] == pytest.approx(4.0, rel=0.05)


def test_separable_close_to_full(modes2):
    full = pulse_error_gate(SEQ, modes2, 0.999, method="full")
    sep = pulse_error_gate(SEQ, modes2, 0.999, method="separable")
    assert len(sep.per_mode) == 2
    assert sep.infidelity == pytest.approx(full.infidelity, rel=0.2)


def test_pulse_error_method_validation(modes2):
    with pytest.raises(InvalidArgument):
        pulse_error_gate(SEQ, modes2, 0.999, method="bogus")


def test_simulator_local_and_free(modes2):
    sim = FockSimulator(modes2, (0, 1), 8)
    st = sim.product_state(plus_state(2), [1, 0])
    st2 = sim.free(st, 1e-7)
    assert st2.norm() == pytest.approx(1.0)
    z = np.diag([1.0, -1.0]).astype(complex)
    st3 = sim.local(sim.local(st2, (0,), z), (0,), z)
    assert np.allclose(st3.amplitudes, st2.amplitudes)


def _pair_transfer(modes, xi, phase, n_max=30):
    sim = FockSimulator(modes, (0, 1), n_max)
    st = sim.product_state(np.array([1, 0, 0, 0], dtype=complex), [1] * len(modes.mode_freqs))
    st = sim.pulse_pair(st, [0], 1, xi, phase)
    return float(np.sum(np.abs(st.amplitudes.reshape(2, 2, -1)[1]) ** 2))


@pytest.mark.parametrize("xi", [0.5, 0.9, 0.99, 1.0])
def test_relative_phase_pi_cancels_transfer_without_recoil(modes2, xi):
    from fastgate.ion_chain import ModeStructure

    still = ModeStructure(modes2.positions, modes2.mode_freqs, modes2.mode_matrix, 0 * modes2.mode_lamb_dicke)
    assert _pair_transfer(still, xi, np.pi) < 1e-10


def test_relative_phase_pi_suppresses_transfer_with_recoil(modes2):
    for xi in (0.9, 0.99):
        assert _pair_transfer(modes2, xi, np.pi) < 0.1 * _pair_transfer(modes2, xi, 0.0)
    assert _pair_transfer(modes2, 1.0, 0.0) < 1e-20


def test_separability_check_small_on_two_ions(modes2):
    from fastgate.oracle_sim import separability_check

    assert separability_check(SEQ, modes2, 0.999) < 0.2


def test_separable_warns_outside_regime(modes2):
    with pytest.warns(RuntimeWarning, match="separable regime"):
        pulse_error_gate(SEQ, modes2, 0.95)


def test_separability_warning(modes2, monkeypatch):
    import fastgate.oracle_sim as osim

    monkeypatch.setattr(osim, "SEPARABILITY_TOL", 0.0)
    with pytest.warns(RuntimeWarning, match="two-mode check"):
        osim.pulse_error_gate(SEQ, modes2, 0.999, check=True)
