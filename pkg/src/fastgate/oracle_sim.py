"""Brute-force truncated-Fock simulation of fast gates.

This is the reference the analytic formulas in :mod:`fastgate.gate_design`
are checked against, and the engine for imperfect-pulse studies. States are
dense tensors of shape ``(2,) * q + (N,) * P`` for ``q`` qubits and ``P``
modes. Qubit basis: ``|0>`` has ``sigma_z = +1``.

Displacements use the matrix exponential of the truncated generator, so they
are exactly unitary on the truncated space; truncation error shows up as
population in the top Fock levels, which is monitored.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import expm, logm

from fastgate.errors import InvalidArgument, TruncationError
from fastgate.gate_design import BRANCH_SIGNS, TARGET_PHASE, KickSequence
from fastgate.ion_chain import ModeStructure

LEAKAGE_TOL = 1e-8
THERMAL_WEIGHT_TOL = 1e-8
DEFAULT_PULSE_DURATION = 1e-12
MAX_GROWTH = 4
SEPARABILITY_TOL = 0.25  # relative infidelity mismatch tolerated on the two-mode check
SEPARABLE_MAX_AREA_ERROR = 0.01


@lru_cache(maxsize=32)
def annihilation(dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1)


def displacement(beta: complex, dim: int) -> np.ndarray:
    a = annihilation(dim)
    return expm(beta * a.T - np.conj(beta) * a)


def number_state(k: int, dim: int) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[k] = 1.0
    return v


def thermal_weights(nbar: float, tol: float = THERMAL_WEIGHT_TOL) -> np.ndarray:
    """Bose-Einstein populations, truncated once the cumulative weight exceeds ``1 - tol``."""
    if nbar < 0:
        raise InvalidArgument("nbar must be >= 0")
    if nbar == 0:
        return np.ones(1)
    q = nbar / (1.0 + nbar)
    weights = [1.0 / (1.0 + nbar)]
    while sum(weights) < 1.0 - tol:
        weights.append(weights[-1] * q)
    return np.asarray(weights)


def product_thermal_mixture(nbar: float, n_modes: int, tol: float = THERMAL_WEIGHT_TOL):
    """Number-state product components ``(levels, weight)`` of a thermal product state, renormalised."""
    w1 = thermal_weights(nbar, tol / max(n_modes, 1))
    grids = np.meshgrid(*[np.arange(len(w1))] * n_modes, indexing="ij")
    levels = np.stack([g.ravel() for g in grids], axis=1)
    weights = np.prod(w1[levels], axis=1)
    keep = weights > tol * 1e-3
    levels, weights = levels[keep], weights[keep]
    return levels, weights / weights.sum()


def plus_state(n_qubits: int) -> np.ndarray:
    """Even superposition of all computational basis states."""
    return np.full(2**n_qubits, 2.0 ** (-n_qubits / 2), dtype=complex)


def ideal_phase_gate() -> np.ndarray:
    """``exp(i pi/4 sigma_z sigma_z)`` on two qubits."""
    return np.diag(np.exp(1j * TARGET_PHASE * BRANCH_SIGNS[:, 0] * BRANCH_SIGNS[:, 1]))


@dataclass
class FockGateState:
    """Joint qubit-motion state vector with ``q`` qubit axes followed by ``P`` mode axes."""

    amplitudes: np.ndarray
    n_qubits: int

    @property
    def n_modes(self) -> int:
        return self.amplitudes.ndim - self.n_qubits

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def leakage(self) -> float:
        """Largest population held in the top two Fock levels of any mode."""
        prob = np.abs(self.amplitudes) ** 2
        worst = 0.0
        for ax in range(self.n_qubits, prob.ndim):
            top = np.take(prob, [-2, -1], axis=ax).sum()
            worst = max(worst, float(top))
        return worst

    def spin_vector(self) -> np.ndarray:
        """Qubit amplitudes reshaped to ``(2**q, M)`` with all modes flattened."""
        return self.amplitudes.reshape(2**self.n_qubits, -1)

    def reduced_spin(self) -> np.ndarray:
        v = self.spin_vector()
        return v @ v.conj().T


class FockSimulator:
    """Applies kicks, imperfect pulses, local gates and free evolution.

    ``ions`` lists the chain indices that carry qubits, in qubit order.
    ``n_max`` is the per-mode Fock dimension (an int or one per mode).
    ``mode_subset`` restricts the motion to some modes; the others are
    treated as absent, which is what the separable-mode method needs.
    """

    def __init__(self, modes: ModeStructure, ions, n_max, mode_subset=None):
        self.modes = modes
        self.ions = list(ions)
        self.mode_idx = list(range(len(modes.mode_freqs))) if mode_subset is None else list(mode_subset)
        dims = [n_max] * len(self.mode_idx) if np.isscalar(n_max) else list(n_max)
        if len(dims) != len(self.mode_idx):
            raise InvalidArgument("one Fock dimension per simulated mode is required")
        self.dims = [int(d) for d in dims]
        self.w = modes.angular_freqs[self.mode_idx]
        self._dcache: dict = {}

    @property
    def n_qubits(self) -> int:
        return len(self.ions)

    def qubit_of(self, ion: int) -> int:
        try:
            return self.ions.index(ion)
        except ValueError:
            raise InvalidArgument(f"ion {ion} carries no simulated qubit") from None

    def coupling(self, ion: int) -> np.ndarray:
        return self.modes.couplings(ion)[self.mode_idx]

    def product_state(self, spin: np.ndarray, levels) -> FockGateState:
        spin = np.asarray(spin, dtype=complex).reshape((2,) * self.n_qubits)
        out = spin
        for lvl, dim in zip(levels, self.dims):
            if lvl >= dim - 2:
                raise InvalidArgument("initial Fock level too close to the truncation")
            out = np.multiply.outer(out, number_state(int(lvl), dim))
        return FockGateState(out, self.n_qubits)

    def _disp(self, k: int, beta: complex) -> np.ndarray:
        key = (k, complex(np.round(beta, 14)))
        m = self._dcache.get(key)
        if m is None:
            m = displacement(beta, self.dims[k])
            self._dcache[key] = m
        return m

    def _apply_mode_op(self, amp, k, mat, nq=None):
        ax = (self.n_qubits if nq is None else nq) + k
        out = np.tensordot(mat, amp, axes=([1], [ax]))
        return np.moveaxis(out, 0, ax)

    def _apply_kick_operator(self, amp, ion, sign, nq=None):
        """``exp(i sign k x_ion)`` on the motion, i.e. ``prod_p D(i sign eta_p b_p,ion)``.

        ``nq`` is the number of qubit axes in front of the mode axes of ``amp``.
        """
        for k, c in enumerate(self.coupling(ion)):
            if c != 0:
                amp = self._apply_mode_op(amp, k, self._disp(k, 1j * sign * c), nq)
        return amp

    def free(self, state: FockGateState, dt: float) -> FockGateState:
        if dt == 0:
            return state
        amp = state.amplitudes
        for k, (w, dim) in enumerate(zip(self.w, self.dims)):
            shape = [1] * amp.ndim
            shape[self.n_qubits + k] = dim
            amp = amp * np.exp(-1j * w * dt * np.arange(dim)).reshape(shape)
        return FockGateState(amp, state.n_qubits)

    def kick(self, state: FockGateState, ion: int, zeta: int) -> FockGateState:
        """Perfect state-dependent kick ``exp(-2 i zeta k x_ion sigma_z)``."""
        q = self.qubit_of(ion)
        amp = np.array(state.amplitudes)
        for spin_idx, sz in ((0, 1.0), (1, -1.0)):
            sl = [slice(None)] * amp.ndim
            sl[q] = spin_idx
            # the slice drops one qubit axis
            amp[tuple(sl)] = self._apply_kick_operator(amp[tuple(sl)], ion, -2 * zeta * sz, self.n_qubits - 1)
        return FockGateState(amp, state.n_qubits)

    def pulse(self, state: FockGateState, ion: int, theta: float, direction: int, phase: float = 0.0) -> FockGateState:
        """Square resonant pulse of area ``theta`` from ``direction`` (+1 / -1).

        ``exp(-i theta/2 (e^{i phase} sigma_+ E + h.c.))`` with ``E = exp(i direction k x)``;
        the generator squares to one, so the exponential is ``cos - i sin (...)``.
        """
        q = self.qubit_of(ion)
        amp = state.amplitudes
        c, s = np.cos(theta / 2), np.sin(theta / 2)
        up = np.take(amp, 0, axis=q)
        dn = np.take(amp, 1, axis=q)
        nq = self.n_qubits - 1
        e_dn = self._apply_kick_operator(dn, ion, direction, nq)
        e_up = self._apply_kick_operator(up, ion, -direction, nq)
        new_up = c * up - 1j * s * np.exp(1j * phase) * e_dn
        new_dn = c * dn - 1j * s * np.exp(-1j * phase) * e_up
        return FockGateState(np.stack([new_up, new_dn], axis=q), state.n_qubits)

    def pulse_pair(self, state, ions, zeta_sign, xi=1.0, relative_phase=np.pi):
        """Counter-propagating pulse pair on all ``ions`` at once; a perfect pair is a unit kick."""
        theta = xi * np.pi
        for ion in ions:
            state = self.pulse(state, ion, theta, zeta_sign, 0.0)
        for ion in ions:
            state = self.pulse(state, ion, theta, -zeta_sign, relative_phase)
        return state

    def local(self, state: FockGateState, qubits, unitary: np.ndarray) -> FockGateState:
        """Apply a unitary on the listed qubit axes (instantaneous, motion untouched)."""
        qubits = list(qubits)
        k = len(qubits)
        u = np.asarray(unitary, dtype=complex).reshape((2,) * (2 * k))
        amp = np.tensordot(u, state.amplitudes, axes=(list(range(k, 2 * k)), qubits))
        amp = np.moveaxis(amp, list(range(k)), qubits)
        return FockGateState(amp, state.n_qubits)

    def run_sequence(self, state, seq: KickSequence, xi=None, relative_phase=np.pi, start_time=None):
        """Kicks interleaved with free evolution; ``xi`` switches to pulse-level kicks.

        The clock starts at the first kick (or ``start_time``) and stops at the last.
        """
        t_prev = seq.times[0] if start_time is None else start_time
        ions = [ion for ion in seq.pair]
        for t, z in zip(seq.times, seq.zetas):
            state = self.free(state, t - t_prev)
            t_prev = t
            if xi is None:
                for ion in ions:
                    state = self.kick(state, ion, z)
            else:
                sgn = 1 if z > 0 else -1
                for _ in range(abs(int(z))):
                    state = self.pulse_pair(state, ions, sgn, xi, relative_phase)
        return state


def check_truncation(state: FockGateState, n_max, tol: float = LEAKAGE_TOL):
    leak = state.leakage()
    if leak > tol:
        dims = [n_max] if np.isscalar(n_max) else list(n_max)
        raise TruncationError(
            f"Fock truncation leaks {leak:.2e} > {tol:.0e}",
            residual=leak,
            suggested_n_max=int(2 * max(dims)),
        )
    return leak


def suggest_n_max(seq: KickSequence, modes: ModeStructure, start_level: int = 0, margin: int = 12) -> int:
    """Fock size covering the largest intermediate displacement of the sequence."""
    if len(seq) == 0:
        return max(start_level + margin, 8)
    w = modes.angular_freqs
    coup = np.abs(modes.couplings(seq.pair[0])) + np.abs(modes.couplings(seq.pair[1]))
    partial = np.cumsum(seq.z[:, None] * np.exp(1j * np.outer(seq.t, w)), axis=0)
    amax = float(np.max(2 * coup * np.abs(partial)))
    r = amax + np.sqrt(start_level + 1)
    return int(np.ceil(r**2 + 6 * r + margin + start_level))


def evolve_sequence(seq: KickSequence, modes: ModeStructure, spin_state=None, levels=None, n_max=None, xi=None,
                    relative_phase=np.pi, check=True) -> FockGateState:
    """Evolve ``spin (x) |levels>`` through ``seq`` on the addressed pair's two qubits."""
    P = len(modes.mode_freqs)
    levels = [0] * P if levels is None else list(levels)
    n_max = n_max or suggest_n_max(seq, modes, max(levels))
    sim = FockSimulator(modes, seq.pair, n_max)
    spin = plus_state(2) if spin_state is None else spin_state
    state = sim.product_state(spin, levels)
    if len(seq):
        state = sim.run_sequence(state, seq, xi=xi, relative_phase=relative_phase)
    if check:
        check_truncation(state, n_max)
    return state


def branch_states(seq: KickSequence, modes: ModeStructure, levels, n_max: int) -> np.ndarray:
    """Final motional state (flattened) for each computational spin input, shape (4, 4, M)."""
    out = []
    for s in range(4):
        spin = np.zeros(4, dtype=complex)
        spin[s] = 1.0
        st = evolve_sequence(seq, modes, spin, levels, n_max)
        out.append(st.spin_vector())
    return np.asarray(out)


def oracle_phase_and_displacements(seq: KickSequence, modes: ModeStructure, n_max=None):
    """Conditional phase and interaction-picture displacements read off the simulated unitary.

    Starting from the motional ground state, ``<0|V_s|0> = exp(i Phi_s - |alpha_s|^2 / 2)``
    gives the branch phases, and ``<a_p>`` gives the lab-frame centroids,
    rotated back by ``exp(i w_p t_last)``.
    """
    P = len(modes.mode_freqs)
    n_max = n_max or suggest_n_max(seq, modes)
    vac = np.zeros([n_max] * P, dtype=complex)
    vac[(0,) * P] = 1.0
    a = annihilation(n_max)
    phis, alphas = [], []
    for s in range(4):
        spin = np.zeros(4, dtype=complex)
        spin[s] = 1.0
        st = evolve_sequence(seq, modes, spin, [0] * P, n_max)
        psi = st.amplitudes.reshape((4,) + (n_max,) * P)[s]
        amp = np.vdot(vac, psi)
        phis.append(np.angle(amp))
        row = []
        for p in range(P):
            apsi = np.moveaxis(np.tensordot(a, psi, axes=([1], [p])), 0, p)
            row.append(np.vdot(psi, apsi) * np.exp(1j * modes.angular_freqs[p] * seq.times[-1]))
        alphas.append(row)
    phis = np.unwrap(np.asarray(phis))
    chi = 0.25 * float((BRANCH_SIGNS[:, 0] * BRANCH_SIGNS[:, 1]) @ phis)
    return chi, np.asarray(alphas)


def thermal_gate_fidelity(seq: KickSequence, modes: ModeStructure, nbar: float, n_max=None,
                          ideal: np.ndarray | None = None) -> float:
    """Average gate fidelity of the simulated channel on a thermal product motional state.

    Builds Kraus operators ``K_{k,m} = sqrt(w_k) <m|U|k>`` of the qubit channel
    and uses the entanglement fidelity ``F_e = sum |Tr(U_id^dag K)|^2 / d^2``
    with ``F_avg = (d F_e + 1) / (d + 1)``.
    """
    P = len(modes.mode_freqs)
    levels, weights = product_thermal_mixture(nbar, P)
    n_max = n_max or suggest_n_max(seq, modes, int(levels.max()))
    uid = ideal_phase_gate() if ideal is None else ideal
    d = 4
    fe = 0.0
    for lv, wk in zip(levels, weights):
        cols = branch_states(seq, modes, lv, n_max)  # (s_in, s_out, M)
        # Tr(U_id^dag K_m) = sum_{s, s'} conj(U_id[s', s]) <s', m|U|s, k>
        tr = np.einsum("os,som->m", np.conj(uid), cols)
        fe += wk * np.sum(np.abs(tr) ** 2) / d**2
    return float((d * fe + 1) / (d + 1))


def representative_fidelity(final, target_spin, motional=None) -> float:
    """Fidelity of a simulated final state against the ideal qubit state.

    ``final`` is a :class:`FockGateState` (or plain qubit vector) holding
    ``U_re |psi0>``; ``target_spin`` is ``U_id |psi0>`` on the qubits. With
    ``motional`` given, returns ``|<target, motional| final>|^2``; otherwise
    the motion is traced out first: ``<target| Tr_m rho |target>``.
    """
    target = np.asarray(target_spin, dtype=complex).ravel()
    if isinstance(final, FockGateState):
        v = final.spin_vector()
    else:
        v = np.asarray(final, dtype=complex).reshape(len(target), -1)
    if motional is None:
        proj = target.conj() @ v
        return float(np.vdot(proj, proj).real)
    mot = np.asarray(motional, dtype=complex).ravel()
    return float(abs(target.conj() @ v @ mot.conj()) ** 2)


def unitary_representative_fidelity(u_re: np.ndarray, u_id: np.ndarray, psi0=None) -> float:
    """``|<psi0| U_re^dag U_id |psi0>|^2`` for qubit-only unitaries."""
    u_re = np.asarray(u_re, dtype=complex)
    nq = int(np.log2(u_re.shape[0]))
    psi0 = plus_state(nq) if psi0 is None else np.asarray(psi0, dtype=complex)
    return float(abs(np.vdot(u_re @ psi0, np.asarray(u_id) @ psi0)) ** 2)


def square_pulse(xi: float, phase: float = 0.0) -> np.ndarray:
    """Qubit propagator of a resonant square pulse of area ``xi * pi``."""
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    sy = np.array([[0, -1j], [1j, 0]], dtype=complex)
    gen = np.cos(phase) * sx - np.sin(phase) * sy
    return expm(-0.5j * xi * np.pi * gen)


def rotational_infidelity(xi: float) -> float:
    """``1 - |<0| U_pi^dag U_xi |0>|^2`` for a square pulse; ``~ (pi^2/4) (1 - xi)^2``.

    Evaluated on a computational basis state, where a pure area error is fully
    visible (an equal superposition is an eigenstate of the pulse generator).
    """
    if xi <= 0:
        raise InvalidArgument("pulse area scale must be positive")
    psi = np.array([1.0, 0.0], dtype=complex)
    f = abs(np.vdot(square_pulse(1.0) @ psi, square_pulse(xi) @ psi)) ** 2
    return float(max(1.0 - f, 0.0))


@dataclass(frozen=True)
class PulseParams:
    xi: float = 1.0
    duration: float = DEFAULT_PULSE_DURATION
    relative_phase: float = np.pi

    def __post_init__(self):
        if not self.xi > 0:
            raise InvalidArgument("xi must be positive")
        if self.duration < 0:
            raise InvalidArgument("pulse duration must be >= 0")

    @property
    def rabi_frequency(self) -> float:
        return self.xi * np.pi / (2 * self.duration) if self.duration > 0 else np.inf


@dataclass
class PulseErrorResult:
    fidelity: float
    rotational_infidelity: float
    method: str
    per_mode: list | None = None

    @property
    def infidelity(self) -> float:
        return 1.0 - self.fidelity


def _mode_matrix_k(seq, modes, p, pulse, level, n_max):
    """4x4 spin transfer matrix of one mode, ``<s', level| U_p |s, level>`` with the free phase removed."""
    sim = FockSimulator(modes, seq.pair, [n_max], mode_subset=[p])
    out = np.zeros((4, 4), dtype=complex)
    leak = 0.0
    for s in range(4):
        spin = np.zeros(4, dtype=complex)
        spin[s] = 1.0
        st = sim.product_state(spin, [level])
        st = sim.run_sequence(st, seq, xi=pulse.xi, relative_phase=pulse.relative_phase)
        leak = max(leak, st.leakage())
        out[:, s] = st.spin_vector()[:, level]
    dur = seq.times[-1] - seq.times[0]
    return out * np.exp(1j * sim.w[0] * level * dur), leak


def separable_transfer(seq: KickSequence, modes: ModeStructure, pulse: PulseParams, level: int = 1, n_max=None):
    """Combine per-mode spin transfer matrices into a two-qubit matrix.

    Uses ``expm(sum_p logm(K_p))``. For perfect pulses every ``K_p`` is
    diagonal and this is the exact product of per-mode branch factors. With
    pulse errors, the spin-flip generators of different modes add coherently
    (the error term of a pulse pair is ``sin(k x)``, additive in the modes to
    leading order), so a shared spin error is not counted once per mode.
    """
    P = len(modes.mode_freqs)
    n_max = n_max or suggest_n_max(seq, modes, level)
    mats, leak = [], 0.0
    for p in range(P):
        k, lk = _mode_matrix_k(seq, modes, p, pulse, level, n_max)
        mats.append(k)
        leak = max(leak, lk)
    if leak > LEAKAGE_TOL:
        raise TruncationError(f"Fock truncation leaks {leak:.2e}", residual=leak, suggested_n_max=2 * n_max)
    mats = np.asarray(mats)
    total = expm(sum(logm(k) for k in mats))
    return total, mats


def separability_check(seq: KickSequence, modes: ModeStructure, xi: float, relative_phase: float = np.pi,
                       level: int = 1, n_max=None) -> float:
    """Relative infidelity mismatch of the separable rule against a joint run on the two lowest modes."""
    sub = ModeStructure(modes.positions, modes.mode_freqs[:2], modes.mode_matrix[:2], modes.mode_lamb_dicke[:2])
    n_max = n_max or suggest_n_max(seq, sub, level)
    psi0 = plus_state(2)
    target = ideal_phase_gate() @ psi0
    total, _ = separable_transfer(seq, sub, PulseParams(xi, relative_phase=relative_phase), level, n_max)
    f_sep = abs(np.vdot(target, total @ psi0)) ** 2
    st = evolve_sequence(seq, sub, psi0, [level] * 2, n_max, xi=xi, relative_phase=relative_phase)
    mot = np.zeros([n_max] * 2, dtype=complex)
    mot[level, level] = 1.0
    f_full = representative_fidelity(st, target, mot)
    return float(abs((1 - f_sep) - (1 - f_full)) / max(1 - f_full, 1e-300))


def pulse_error_gate(seq: KickSequence, modes: ModeStructure, xi: float, relative_phase: float = np.pi,
                     level: int = 1, method: str = "separable", n_max=None,
                     pulse_duration: float = DEFAULT_PULSE_DURATION, check: bool = False) -> PulseErrorResult:
    """Representative fidelity of a gate built from imperfect square pulse pairs.

    Every mode starts in the number state ``level``. ``method="full"``
    simulates all modes jointly (small chains, small ``n``);
    ``"separable"`` evolves each mode with the full qubit dynamics and
    combines them via :func:`separable_transfer`. The pulses are treated as
    instantaneous: at the default 1 ps the motion during a pulse is negligible.
    ``check`` compares the separable rule with a joint two-mode run and warns
    when they disagree by more than ``SEPARABILITY_TOL``.
    """
    pulse = PulseParams(xi, pulse_duration, relative_phase)
    psi0 = plus_state(2)
    target = ideal_phase_gate() @ psi0
    rot = rotational_infidelity(xi)
    P = len(modes.mode_freqs)
    if method not in ("full", "separable"):
        raise InvalidArgument(f"unknown method {method!r}")
    if method == "separable":
        if abs(1 - xi) > SEPARABLE_MAX_AREA_ERROR:
            warnings.warn(f"pulse area error {abs(1 - xi):.3g} is outside the separable regime", RuntimeWarning,
                          stacklevel=2)
        if check:
            mismatch = separability_check(seq, modes, xi, relative_phase, level)
            if mismatch > SEPARABILITY_TOL:
                warnings.warn(f"separable pulse-error estimate off by {mismatch:.0%} on the two-mode check",
                              RuntimeWarning, stacklevel=2)
    n_max = n_max or suggest_n_max(seq, modes, level)
    for _ in range(MAX_GROWTH):
        try:
            if method == "full":
                st = evolve_sequence(seq, modes, psi0, [level] * P, n_max, xi=xi, relative_phase=relative_phase)
                mot = np.zeros([n_max] * P, dtype=complex)
                mot[(level,) * P] = 1.0
                return PulseErrorResult(representative_fidelity(st, target, mot), rot, method)
            total, mats = separable_transfer(seq, modes, pulse, level, n_max)
            break
        except TruncationError:
            # spin-flipped error paths wander further than the ideal trajectory
            n_max = int(np.ceil(1.5 * n_max))
    else:
        raise TruncationError("Fock truncation still leaking after enlargement", suggested_n_max=n_max)
    amp = np.vdot(target, total @ psi0)
    per_mode = [float(abs(np.vdot(target, m @ psi0)) ** 2) for m in mats]
    return PulseErrorResult(float(abs(amp) ** 2), rot, method, per_mode)


def pulse_infidelity(seq: KickSequence, modes: ModeStructure, xi: float, relative_phase: float = np.pi,
                     level: int = 1, n_max=None) -> float:
    """``1 - |<U_1 psi0 | U_xi psi0>|^2`` on the joint qubit-motion state.

    Compares the gate made of imperfect pulses with the same gate made of
    perfect ones, so the kick sequence's own design error drops out.
    """
    P = len(modes.mode_freqs)
    psi0 = plus_state(2)
    n_max = n_max or suggest_n_max(seq, modes, level)
    for _ in range(MAX_GROWTH):
        try:
            ref = evolve_sequence(seq, modes, psi0, [level] * P, n_max, xi=1.0, relative_phase=relative_phase)
            st = evolve_sequence(seq, modes, psi0, [level] * P, n_max, xi=xi, relative_phase=relative_phase)
            break
        except TruncationError:
            n_max = int(np.ceil(1.5 * n_max))
    else:
        raise TruncationError("Fock truncation still leaking after enlargement", suggested_n_max=n_max)
    overlap = np.vdot(ref.amplitudes.ravel(), st.amplitudes.ravel())
    return float(max(1.0 - abs(overlap) ** 2, 0.0))
