"""Equilibrium geometry and axial normal modes of a linear Coulomb crystal.

Positions are dimensionless, measured in the Coulomb length scale
``(e^2 / 4 pi eps0 m nu^2)^(1/3)`` of the axial trap, so the dimensionless
potential is ``sum u_i^2 / 2 + sum_{i<j} 1 / |u_i - u_j|``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from fastgate.errors import ConfigurationUnstable, InvalidArgument, NumericalFailure

AXIAL_FREQ_COEFF_HZ = 2.1856e6
AXIAL_FREQ_EXPONENT = -0.865
TRANSVERSE_FREQ_HZ = 5.0e6
BASE_LAMB_DICKE = 0.16
THERMAL_OCCUPATION = 0.1


def axial_frequency(L: int) -> float:
    """COM axial frequency (Hz) of an ``L``-ion trap at the no-buckling scaling."""
    if int(L) != L or L < 2:
        raise InvalidArgument(f"ion count must be an integer >= 2, got {L!r}")
    return AXIAL_FREQ_COEFF_HZ * float(L) ** AXIAL_FREQ_EXPONENT


def lamb_dicke(L: int, eta0: float = BASE_LAMB_DICKE) -> float:
    # eta ~ nu^(-1/2) at fixed laser wavenumber, anchored at the two-ion trap
    return eta0 * np.sqrt(axial_frequency(2) / axial_frequency(L))


@dataclass(frozen=True)
class TrapConfig:
    ion_count: int
    axial_freq: float
    transverse_freq: float = TRANSVERSE_FREQ_HZ
    base_lamb_dicke: float = BASE_LAMB_DICKE
    thermal_occupation: float = THERMAL_OCCUPATION

    def __post_init__(self):
        if int(self.ion_count) != self.ion_count or self.ion_count < 2:
            raise InvalidArgument(f"ion_count must be >= 2, got {self.ion_count!r}")
        if not self.axial_freq > 0 or not self.transverse_freq > 0:
            raise InvalidArgument("trap frequencies must be positive")
        if not 0 < self.base_lamb_dicke < 1:
            raise InvalidArgument("base_lamb_dicke must lie in (0, 1)")
        if self.thermal_occupation < 0:
            raise InvalidArgument("thermal_occupation must be >= 0")
        if not self.transverse_freq > self.axial_freq:
            raise InvalidArgument("transverse frequency must exceed the axial one for a linear chain")

    @classmethod
    def for_ions(cls, L: int, **kwargs) -> "TrapConfig":
        """Trap with the standard axial scaling law for ``L`` ions."""
        return cls(ion_count=L, axial_freq=axial_frequency(L), **kwargs)

    @property
    def com_period(self) -> float:
        return 1.0 / self.axial_freq

    @property
    def lamb_dicke(self) -> float:
        # referenced to the actual axial frequency so custom traps scale the same way
        return self.base_lamb_dicke * np.sqrt(axial_frequency(2) / self.axial_freq)


@dataclass(frozen=True)
class ModeStructure:
    """Axial modes: ``mode_matrix[p, i]`` is the participation of ion ``i`` in mode ``p``."""

    positions: np.ndarray
    mode_freqs: np.ndarray
    mode_matrix: np.ndarray
    mode_lamb_dicke: np.ndarray
    config: TrapConfig | None = field(default=None, compare=False)

    @property
    def ion_count(self) -> int:
        return len(self.positions)

    @property
    def angular_freqs(self) -> np.ndarray:
        return 2 * np.pi * self.mode_freqs

    def couplings(self, ion: int) -> np.ndarray:
        """Per-mode Lamb-Dicke coupling ``eta_p * b[p, ion]`` of one ion."""
        return self.mode_lamb_dicke * self.mode_matrix[:, ion]

    def to_dict(self) -> dict:
        out = {
            "positions": self.positions.tolist(),
            "mode_freqs_hz": self.mode_freqs.tolist(),
            "mode_matrix": self.mode_matrix.tolist(),
            "mode_lamb_dicke": self.mode_lamb_dicke.tolist(),
        }
        if self.config is not None:
            c = self.config
            out["config"] = {
                "ion_count": c.ion_count,
                "axial_freq_hz": c.axial_freq,
                "transverse_freq_hz": c.transverse_freq,
                "base_lamb_dicke": c.base_lamb_dicke,
                "thermal_occupation": c.thermal_occupation,
            }
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "ModeStructure":
        cfg = None
        if "config" in d:
            c = d["config"]
            cfg = TrapConfig(
                ion_count=c["ion_count"],
                axial_freq=c["axial_freq_hz"],
                transverse_freq=c["transverse_freq_hz"],
                base_lamb_dicke=c["base_lamb_dicke"],
                thermal_occupation=c["thermal_occupation"],
            )
        return cls(
            positions=np.asarray(d["positions"], dtype=float),
            mode_freqs=np.asarray(d["mode_freqs_hz"], dtype=float),
            mode_matrix=np.asarray(d["mode_matrix"], dtype=float),
            mode_lamb_dicke=np.asarray(d["mode_lamb_dicke"], dtype=float),
            config=cfg,
        )


def _gradient(u):
    diff = u[:, None] - u[None, :]
    np.fill_diagonal(diff, np.inf)
    return u - np.sum(np.sign(diff) / diff**2, axis=1)


def _potential(u):
    i, j = np.triu_indices(len(u), 1)
    return 0.5 * np.sum(u**2) + np.sum(1.0 / np.abs(u[i] - u[j]))


def axial_hessian(u: np.ndarray) -> np.ndarray:
    """Dimensionless axial Hessian of the crystal potential at positions ``u``."""
    u = np.asarray(u, dtype=float)
    diff = np.abs(u[:, None] - u[None, :])
    np.fill_diagonal(diff, np.inf)
    inv3 = 1.0 / diff**3
    hess = -2.0 * inv3
    np.fill_diagonal(hess, 1.0 + 2.0 * inv3.sum(axis=1))
    return hess


def equilibrium_positions(L: int, initial=None, tol: float = 1e-12, max_iter: int = 200) -> np.ndarray:
    """Sorted equilibrium positions of ``L`` ions, by damped Newton iteration.

    Starts from uniform spacing unless ``initial`` is given. Raises
    :class:`NumericalFailure` (with the final gradient norm as ``residual``)
    if the gradient norm does not drop below ``tol``.
    """
    if int(L) != L or L < 2:
        raise InvalidArgument(f"ion count must be an integer >= 2, got {L!r}")
    if initial is None:
        # crude width estimate; the Newton step does the rest
        half = 0.5 * (L - 1) * 2.0 * L ** (-0.56)
        u = np.linspace(-half, half, L)
    else:
        u = np.sort(np.asarray(initial, dtype=float))
        if len(u) != L or np.any(np.diff(u) <= 0):
            raise InvalidArgument("initial positions must be L distinct values")

    g = _gradient(u)
    for _ in range(max_iter):
        gnorm = np.linalg.norm(g)
        if gnorm < tol:
            break
        step = np.linalg.solve(axial_hessian(u), g)
        e0 = _potential(u)
        lam = 1.0
        while lam > 1e-12:
            trial = u - lam * step
            if np.all(np.diff(trial) > 0) and _potential(trial) <= e0 + 1e-14 * abs(e0):
                break
            lam *= 0.5
        u = trial
        g = _gradient(u)
    # the iteration stalls at rounding level; symmetrize before the final check
    u = 0.5 * (u - u[::-1])
    g = _gradient(u)
    gnorm = np.linalg.norm(g)
    if gnorm >= tol:
        raise NumericalFailure(f"equilibrium solve did not converge (|grad| = {gnorm:.3e})", residual=gnorm)
    return u


def _fix_signs(vecs):
    out = vecs.copy()
    for row in out:
        nz = np.flatnonzero(np.abs(row) > 1e-9)
        if nz.size and row[nz[0]] < 0:
            row *= -1
    return out


def normal_modes(cfg: TrapConfig) -> ModeStructure:
    """Axial normal modes, frequencies (Hz, ascending) and per-mode Lamb-Dicke factors."""
    L = cfg.ion_count
    u = equilibrium_positions(L)
    evals, evecs = np.linalg.eigh(axial_hessian(u))
    if np.any(evals <= 0):
        raise ConfigurationUnstable(f"axial Hessian not positive-definite (min eigenvalue {evals.min():.3e})")
    freqs = cfg.axial_freq * np.sqrt(evals)
    # the lowest eigenvalue is exactly 1 (COM); pin it against rounding
    freqs[0] = cfg.axial_freq
    b = _fix_signs(evecs.T)
    eta = cfg.lamb_dicke * np.sqrt(freqs[0] / freqs)
    return ModeStructure(positions=u, mode_freqs=freqs, mode_matrix=b, mode_lamb_dicke=eta, config=cfg)
