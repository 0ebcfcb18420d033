"""Kick sequences and the analytic figures of merit of a fast phase gate.

Kicks are instantaneous, state-dependent momentum transfers. A kick of
``zeta`` pulse pairs at time ``t`` displaces mode ``p`` (interaction picture)
by ``-2i zeta eta_p (b[p,i] s_i + b[p,j] s_j) exp(i w_p t)`` in the spin
branch ``s = (s_i, s_j)``. Composition of displacements gives each branch the
phase ``Phi_s = sum_{c<d} Im(da_d conj(da_c))``; its ``s_i s_j`` coefficient
is the conditional phase, with target ``pi / 4``.

Branches are ordered as the computational basis ``|00>, |01>, |10>, |11>``
with ``sigma_z |0> = +|0>``. Ion indices are zero-based.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from fastgate.errors import InvalidArgument
from fastgate.ion_chain import ModeStructure

TARGET_PHASE = np.pi / 4
BRANCH_SIGNS = np.array([(1, 1), (1, -1), (-1, 1), (-1, -1)], dtype=float)
FRAG_PATTERN = (-1, 2, -2, 2, -2, 1)

# Haar moments of a random two-qubit pure state: E|c_s|^4 = 1/10, E|c_s|^2|c_s'|^2 = 1/20
_HAAR_NORM = 20.0


@dataclass(frozen=True)
class KickSequence:
    times: tuple
    zetas: tuple
    pair: tuple = (0, 1)
    n: int | None = None

    def __post_init__(self):
        if len(self.times) != len(self.zetas):
            raise InvalidArgument("times and zetas must have equal length")
        if any(z == 0 or int(z) != z for z in self.zetas):
            raise InvalidArgument("kick magnitudes must be nonzero integers")
        if np.any(np.diff(self.times) <= 0):
            raise InvalidArgument("kick times must be strictly increasing")
        i, j = self.pair
        if i == j or min(i, j) < 0:
            raise InvalidArgument(f"invalid ion pair {self.pair!r}")

    def __len__(self):
        return len(self.times)

    @property
    def t(self) -> np.ndarray:
        return np.asarray(self.times, dtype=float)

    @property
    def z(self) -> np.ndarray:
        return np.asarray(self.zetas, dtype=float)

    @property
    def net_momentum(self) -> int:
        return int(sum(self.zetas))

    def to_dict(self) -> dict:
        return {
            "times_s": list(map(float, self.times)),
            "zetas": list(map(int, self.zetas)),
            "pair": list(self.pair),
            "n": self.n,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KickSequence":
        return cls(tuple(d["times_s"]), tuple(d["zetas"]), tuple(d["pair"]), d.get("n"))


def frag_sequence(n: int, tau1: float, tau2: float, tau3: float, pair=(0, 1)) -> KickSequence:
    """Six-kick antisymmetric FRAG sequence, with no ordering imposed on the taus.

    Kick ``-n`` at ``-tau1``, ``2n`` at ``-tau2``, ``-2n`` at ``-tau3`` and the
    mirror images with opposite sign; the result is sorted by time.
    """
    if int(n) != n or n < 1:
        raise InvalidArgument(f"n must be a positive integer, got {n!r}")
    taus = (tau1, tau2, tau3)
    if min(taus) <= 0:
        raise InvalidArgument("all taus must be positive")
    if len(set(taus)) < 3:
        raise InvalidArgument("duplicated taus would merge two kicks")
    raw_t = (-tau1, -tau2, -tau3, tau3, tau2, tau1)
    order = np.argsort(raw_t)
    times = tuple(float(raw_t[k]) for k in order)
    zetas = tuple(int(FRAG_PATTERN[k] * n) for k in order)
    return KickSequence(times, zetas, tuple(pair), int(n))


def gate_duration(seq: KickSequence) -> float:
    if len(seq) == 0:
        raise InvalidArgument("empty sequence has no duration")
    return float(seq.times[-1] - seq.times[0])


def branch_couplings(modes: ModeStructure, pair) -> np.ndarray:
    """``eta_p (b[p,i] s_i + b[p,j] s_j)`` for every branch, shape (4, P)."""
    i, j = pair
    L = modes.ion_count
    if not (0 <= i < L and 0 <= j < L) or i == j:
        raise InvalidArgument(f"pair {pair!r} outside a {L}-ion chain")
    return BRANCH_SIGNS[:, :1] * modes.couplings(i) + BRANCH_SIGNS[:, 1:] * modes.couplings(j)


def _pair_phase_sums(t, z, w):
    # S_p = sum_{c<d} 4 z_c z_d sin(w_p (t_d - t_c))
    dt = t[None, :] - t[:, None]
    zz = np.triu(4.0 * z[:, None] * z[None, :], 1)
    return np.einsum("cd,pcd->p", zz, np.sin(w[:, None, None] * dt[None]))


def _displacements(t, z, w, coup):
    phases = np.exp(1j * np.outer(w, t))  # (P, K)
    return -2j * coup * (phases @ z)[None, :]


def conditional_displacement(seq: KickSequence, modes: ModeStructure) -> np.ndarray:
    """Residual displacement of each mode in each branch, shape (4, P)."""
    coup = branch_couplings(modes, seq.pair)
    if len(seq) == 0:
        return np.zeros_like(coup, dtype=complex)
    return _displacements(seq.t, seq.z, modes.angular_freqs, coup)


def branch_phases(seq: KickSequence, modes: ModeStructure) -> np.ndarray:
    """Geometric phase ``Phi_s`` accumulated by each branch, shape (4,)."""
    coup = branch_couplings(modes, seq.pair)
    if len(seq) < 2:
        return np.zeros(4)
    return (coup**2) @ _pair_phase_sums(seq.t, seq.z, modes.angular_freqs)


def conditional_phase(seq: KickSequence, modes: ModeStructure) -> float:
    """Coefficient of ``sigma_z^i sigma_z^j`` in the accumulated phase (rad)."""
    if len(seq) < 2:
        return 0.0
    i, j = seq.pair
    cross = modes.couplings(i) * modes.couplings(j)
    return float(2.0 * cross @ _pair_phase_sums(seq.t, seq.z, modes.angular_freqs))


def _local_phases(delta):
    # delta_s = g + a s_i + b s_j + c s_i s_j; return the a, b parts per branch
    a = 0.25 * (BRANCH_SIGNS[:, 0] @ delta)
    b = 0.25 * (BRANCH_SIGNS[:, 1] @ delta)
    return a * BRANCH_SIGNS[:, 0] + b * BRANCH_SIGNS[:, 1]


def _overlap_matrix(phi, alpha, nbar, compensate_local_z=False):
    delta = phi - TARGET_PHASE * BRANCH_SIGNS[:, 0] * BRANCH_SIGNS[:, 1]
    if compensate_local_z:
        delta = delta - _local_phases(delta)
    # X_{ss'} = e^{i(d_s - d_s')} Tr[D(a_s')^dag D(a_s) rho_thermal]
    diff = alpha[:, None, :] - alpha[None, :, :]
    cross = np.imag(-alpha[None, :, :] * np.conj(alpha[:, None, :])).sum(axis=-1)
    damp = np.exp(-0.5 * (2 * nbar + 1) * np.sum(np.abs(diff) ** 2, axis=-1))
    return np.exp(1j * (delta[:, None] - delta[None, :] + cross)) * damp


def _fidelity_from_parts(phi, alpha, nbar, compensate_local_z=False):
    x = _overlap_matrix(phi, alpha, nbar, compensate_local_z)
    return float((4.0 + x.sum().real) / _HAAR_NORM)


def state_averaged_fidelity(
    seq: KickSequence, modes: ModeStructure, nbar: float, compensate_local_z: bool = False
) -> float:
    """Haar-averaged gate fidelity for a thermal product motional state.

    Compared against the ideal gate up to a global phase; with
    ``compensate_local_z`` single-ion z phases are also factored out.
    """
    if nbar < 0:
        raise InvalidArgument("nbar must be >= 0")
    return _fidelity_from_parts(
        branch_phases(seq, modes), conditional_displacement(seq, modes), nbar, compensate_local_z
    )


def plus_state_fidelity(seq: KickSequence, modes: ModeStructure, nbar: float) -> float:
    """Fidelity for the input ``|++>`` with the motion (thermal, ``nbar``) traced out.

    Every branch carries amplitude 1/2, so this is ``sum_{ss'} X_{ss'} / 16``.
    """
    if nbar < 0:
        raise InvalidArgument("nbar must be >= 0")
    x = _overlap_matrix(branch_phases(seq, modes), conditional_displacement(seq, modes), nbar)
    return float(x.sum().real / 16.0)


class FidelityModel:
    """Vectorised analytic fidelity for one ion pair, reused inside optimisers."""

    def __init__(self, modes: ModeStructure, pair=(0, 1), nbar: float = 0.1):
        self.modes = modes
        self.pair = tuple(pair)
        self.nbar = nbar
        self.coup = branch_couplings(modes, pair)
        self.coup2 = self.coup**2
        self.w = modes.angular_freqs

    def parts(self, t, z):
        t = np.asarray(t, dtype=float)
        z = np.asarray(z, dtype=float)
        phi = self.coup2 @ _pair_phase_sums(t, z, self.w)
        alpha = _displacements(t, z, self.w, self.coup)
        return phi, alpha

    def fidelity(self, t, z) -> float:
        phi, alpha = self.parts(t, z)
        return _fidelity_from_parts(phi, alpha, self.nbar)

    def frag_fidelity(self, n, taus) -> float:
        t, z = frag_arrays(n, taus)
        return self.fidelity(t, z)


def frag_arrays(n, taus):
    """Time-ordered FRAG times and magnitudes as arrays (no validation)."""
    t1, t2, t3 = taus
    t = np.array([-t1, -t2, -t3, t3, t2, t1], dtype=float)
    order = np.argsort(t, kind="stable")
    # the phase sum runs over time-ordered kick pairs, so order matters
    return t[order], n * np.asarray(FRAG_PATTERN, dtype=float)[order]


@dataclass
class GateOutcome:
    sequence: KickSequence
    residual_displacements: np.ndarray
    conditional_phase: float
    fidelity: float
    duration: float
    feasible: bool = True
    diagnostics: dict = field(default_factory=dict, repr=False)

    @classmethod
    def evaluate(cls, seq: KickSequence, modes: ModeStructure, nbar: float, **kw) -> "GateOutcome":
        return cls(
            sequence=seq,
            residual_displacements=conditional_displacement(seq, modes),
            conditional_phase=conditional_phase(seq, modes),
            fidelity=state_averaged_fidelity(seq, modes, nbar),
            duration=gate_duration(seq),
            **kw,
        )

    @property
    def infidelity(self) -> float:
        return 1.0 - self.fidelity

    def to_dict(self) -> dict:
        a = np.asarray(self.residual_displacements)
        return {
            "sequence": self.sequence.to_dict(),
            "residual_displacements": {"re": a.real.tolist(), "im": a.imag.tolist()},
            "conditional_phase_rad": self.conditional_phase,
            "fidelity": self.fidelity,
            "duration_s": self.duration,
            "feasible": self.feasible,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "GateOutcome":
        a = d["residual_displacements"]
        return cls(
            sequence=KickSequence.from_dict(d["sequence"]),
            residual_displacements=np.asarray(a["re"]) + 1j * np.asarray(a["im"]),
            conditional_phase=d["conditional_phase_rad"],
            fidelity=d["fidelity"],
            duration=d["duration_s"],
            feasible=d.get("feasible", True),
        )
