"""Quantum-trajectory simulation of a fast gate under heating or dephasing.

Between kicks the no-jump generator is diagonal in the number basis:
heating with jump operators ``sqrt(G) a`` and ``sqrt(G) a^dag`` on every mode
gives ``sum L^dag L = G (2 a^dag a + 1)``, and dephasing with ``sqrt(G) sigma_z``
on each qubit adds the constant ``G`` per qubit. The no-jump norm decay is
therefore a sum of exponentials, and jump times are drawn by inverting it
exactly. Kicks are applied as instantaneous unitaries.

Each trajectory ``i`` draws from ``SeedSequence(seed, spawn_key=(i,))``, so
results do not depend on how trajectories are scheduled across workers.
"""

from __future__ import annotations

import csv
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import brentq

from fastgate.errors import InvalidArgument, TruncationError
from fastgate.gate_design import KickSequence, plus_state_fidelity
from fastgate.ion_chain import ModeStructure
from fastgate.oracle_sim import (
    FockGateState,
    FockSimulator,
    annihilation,
    evolve_sequence,
    ideal_phase_gate,
    plus_state,
    representative_fidelity,
    suggest_n_max,
)

HEATING = "heating"
DEPHASING = "dephasing"
_HEAT_HEADROOM = 10
_LEAK_TOL = 1e-6


@dataclass(frozen=True)
class NoiseParams:
    heating_rate: float = 0.0  # s^-1
    dephasing_rate: float = 0.0  # s^-1
    trajectories: int = 1000
    n_max: int | None = None
    seed: int = 0
    stratified: bool = True
    target_stderr: float | None = None

    def __post_init__(self):
        if self.heating_rate < 0 or self.dephasing_rate < 0:
            raise InvalidArgument("noise rates must be >= 0")
        if self.heating_rate > 0 and self.dephasing_rate > 0:
            raise InvalidArgument("heating and dephasing are simulated separately")
        if self.trajectories < 1:
            raise InvalidArgument("need at least one trajectory")


@dataclass
class TrajectoryResult:
    mean: float
    stderr: float
    trajectories: int
    no_jump_probability: float
    jumps: dict
    needs_more: bool = False
    suggested_trajectories: int | None = None

    @property
    def infidelity(self) -> float:
        return 1.0 - self.mean


class _Engine:
    """Piecewise evolution of one trajectory; ``events`` are ``(time, [(ion, zeta), ...])``."""

    def __init__(self, modes, ions, n_max, heating, dephasing, mode_subset=None):
        self.sim = FockSimulator(modes, ions, n_max, mode_subset)
        self.nq = len(ions)
        self.heating = heating
        self.dephasing = dephasing
        dims = self.sim.dims
        grids = np.meshgrid(*[np.arange(d) for d in dims], indexing="ij") if dims else []
        rate = np.full(tuple(dims), self.nq * dephasing, dtype=float)
        for g in grids:
            rate = rate + heating * (2 * g + 1)
        self.rate = rate  # decay rate of |amp|^2 for each Fock configuration
        self.a = [annihilation(d) for d in dims]
        self.reset_counts()

    def reset_counts(self):
        P = len(self.sim.dims)
        self.counts = {"up": np.zeros(P, int), "down": np.zeros(P, int), "dephase": np.zeros(self.nq, int)}

    def _pops(self, amp):
        p = np.abs(amp) ** 2
        return p.reshape((-1,) + self.rate.shape).sum(axis=0) if self.nq else p

    def _norm_after(self, pops, dt):
        return float(np.sum(pops * np.exp(-self.rate * dt)))

    def _decay(self, amp, dt):
        st = self.sim.free(FockGateState(amp, self.nq), dt).amplitudes
        return st * np.exp(-0.5 * self.rate * dt)

    def _jump(self, amp, rng):
        ops = []
        for k, a in enumerate(self.a):
            if self.heating > 0:
                ops.append(("down", k, a))
                ops.append(("up", k, a.T))
        if self.dephasing > 0:
            for q in range(self.nq):
                ops.append(("dephase", q, None))
        cands, weights = [], []
        for kind, k, mat in ops:
            if kind == "dephase":
                new = np.array(amp)
                sl = [slice(None)] * amp.ndim
                sl[k] = 1
                new[tuple(sl)] *= -1
            else:
                new = self.sim._apply_mode_op(amp, k, mat)
            cands.append((kind, k, new))
            weights.append(float(np.sum(np.abs(new) ** 2)))
        weights = np.asarray(weights)
        pick = rng.choice(len(cands), p=weights / weights.sum())
        kind, k, new = cands[pick]
        self.counts[kind][k] += 1
        return new / np.sqrt(weights[pick])

    def run(self, amp, events, t_end, rng, first_threshold=None):
        """Evolve normalised ``amp`` from ``events[0][0]`` (or 0) to ``t_end``; returns (amp, jumped)."""
        t = events[0][0] if events else 0.0
        r = rng.random() if first_threshold is None else first_threshold
        jumped = False
        self.survival = 1.0  # no-jump weight; meaningful only while no jump occurred
        marks = [(tk, kicks) for tk, kicks in events] + [(t_end, [])]
        for tk, kicks in marks:
            while tk > t:
                dt = tk - t
                pops = self._pops(amp)
                if self._norm_after(pops, dt) > r:
                    amp = self._decay(amp, dt)
                    t = tk
                    break
                s = brentq(lambda x: self._norm_after(pops, x) - r, 0.0, dt, xtol=1e-15 * max(dt, 1e-300), rtol=1e-12)
                amp = self._decay(amp, s)
                t += s
                amp = self._jump(amp, rng)
                jumped = True
                r = rng.random()
            # between jumps the norm is carried in amp; divide it out only in r's frame
            nrm = float(np.sum(np.abs(amp) ** 2))
            self.survival *= nrm
            amp = amp / np.sqrt(nrm)
            r = r / nrm
            state = FockGateState(amp, self.nq)
            for ion, zeta in kicks:
                state = self.sim.kick(state, ion, zeta)
            amp = state.amplitudes
        return amp, jumped


def _events(seq: KickSequence):
    return [(float(t), [(ion, int(z)) for ion in seq.pair]) for t, z in zip(seq.times, seq.zetas)]


def _no_jump(engine, amp, events, t_end):
    """Final state and probability of the branch with no jump at all."""
    amp, jumped = engine.run(amp, events, t_end, np.random.default_rng(0), first_threshold=0.0)
    assert not jumped
    return amp, engine.survival


def _batch(args):
    """Trajectories ``ks`` sharing one engine (and its displacement cache)."""
    modes, seq, noise, n_max, ks, threshold_lo = args
    eng = _Engine(modes, seq.pair, n_max, noise.heating_rate, noise.dephasing_rate)
    start = eng.sim.product_state(plus_state(2), [0] * len(modes.mode_freqs)).amplitudes
    target = ideal_phase_gate() @ plus_state(2)
    events = _events(seq)
    out = []
    for k in ks:
        rng = np.random.default_rng(np.random.SeedSequence(noise.seed, spawn_key=(k,)))
        eng.reset_counts()
        first = None if threshold_lo is None else rng.uniform(threshold_lo, 1.0)
        amp, _ = eng.run(start, events, float(seq.times[-1]), rng, first)
        final = FockGateState(amp, 2)
        out.append((representative_fidelity(final, target), final.leakage(),
                    {c: v.tolist() for c, v in eng.counts.items()}))
    return out


def _noiseless_fidelity(seq, modes, n_max):
    st = evolve_sequence(seq, modes, plus_state(2), None, n_max, check=False)
    return representative_fidelity(st, ideal_phase_gate() @ plus_state(2))


def default_n_max(seq: KickSequence, modes: ModeStructure) -> int:
    return suggest_n_max(seq, modes, 0) + _HEAT_HEADROOM


def trajectory_fidelity(seq: KickSequence, modes: ModeStructure, noise: NoiseParams, workers: int = 1) -> TrajectoryResult:
    """Mean representative fidelity (motion traced out) over quantum trajectories.

    Starts from ``|++>`` and the motional ground state. With ``stratified``
    the no-jump branch, whose weight and outcome are deterministic, is
    evaluated exactly and trajectories are drawn only from the jump branch.
    """
    if modes.ion_count > 3:
        raise InvalidArgument("trajectory runs are limited to chains of at most 3 ions")
    n_max = noise.n_max or default_n_max(seq, modes)
    M = noise.trajectories
    f0 = _noiseless_fidelity(seq, modes, n_max)
    if noise.heating_rate == 0 and noise.dephasing_rate == 0:
        return TrajectoryResult(f0, 0.0, M, 1.0, {})

    eng = _Engine(modes, seq.pair, n_max, noise.heating_rate, noise.dephasing_rate)
    st0 = eng.sim.product_state(plus_state(2), [0] * len(modes.mode_freqs))
    amp0, p0 = _no_jump(eng, st0.amplitudes, _events(seq), float(seq.times[-1]))
    # the no-jump branch is not the unitary one: heating decay depends on the phonon number
    f_nj = representative_fidelity(FockGateState(amp0, 2), ideal_phase_gate() @ plus_state(2))
    lo = p0 if noise.stratified else None
    chunks = np.array_split(np.arange(M), max(1, min(M, 4 * workers)))
    jobs = [(modes, seq, noise, n_max, c.tolist(), lo) for c in chunks]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = [o for part in pool.map(_batch, jobs) for o in part]
    else:
        out = [o for j in jobs for o in _batch(j)]

    fids = np.array([o[0] for o in out])
    leak = max(o[1] for o in out)
    if leak > _LEAK_TOL:
        raise TruncationError(f"heating pushed {leak:.1e} into the top Fock levels", residual=leak,
                              suggested_n_max=2 * n_max)
    counts = {k: np.sum([o[2][k] for o in out], axis=0).tolist() for k in out[0][2]}
    sd = float(fids.std(ddof=1)) if M > 1 else 0.0
    if noise.stratified:
        mean = p0 * f_nj + (1 - p0) * float(fids.mean())
        se = (1 - p0) * sd / np.sqrt(M)
    else:
        mean = float(fids.mean())
        se = sd / np.sqrt(M)
    res = TrajectoryResult(float(mean), float(se), M, float(p0), counts)
    if noise.target_stderr is not None and se > noise.target_stderr:
        res.needs_more = True
        res.suggested_trajectories = int(np.ceil(M * (se / noise.target_stderr) ** 2))
        warnings.warn(f"standard error {se:.2e} above target; about {res.suggested_trajectories} trajectories needed",
                      RuntimeWarning, stacklevel=2)
    return res


@dataclass(frozen=True)
class SweepRow:
    rate_per_s: float
    mean_infidelity: float
    stderr: float
    trajectories: int


def noise_sweep(seq: KickSequence, modes: ModeStructure, rates, channel: str = HEATING, trajectories: int = 1000,
                seed: int = 0, n_max: int | None = None, workers: int = 1) -> list[SweepRow]:
    """Infidelity against rate for one channel. Every rate reuses the same seed (common random numbers)."""
    if channel not in (HEATING, DEPHASING):
        raise InvalidArgument(f"unknown channel {channel!r}")
    rows = []
    for rate in sorted(rates):
        kw = {"heating_rate": rate} if channel == HEATING else {"dephasing_rate": rate}
        res = trajectory_fidelity(seq, modes, NoiseParams(trajectories=trajectories, n_max=n_max, seed=seed, **kw),
                                  workers=workers)
        rows.append(SweepRow(float(rate), res.infidelity, res.stderr, trajectories))
    return rows


def write_sweep_csv(rows: list[SweepRow], path, header_comment: str | None = None):
    with open(path, "w", newline="") as fh:
        if header_comment:
            for line in header_comment.splitlines():
                fh.write(f"# {line}\n")
        w = csv.DictWriter(fh, fieldnames=list(SweepRow.__dataclass_fields__))
        w.writeheader()
        for r in rows:
            w.writerow(asdict(r))


@dataclass(frozen=True)
class DynamicalEffect:
    heating_rate: float
    matched_nbar: float
    dynamical_increase: float
    dynamical_stderr: float
    static_increase: float

    @property
    def holds(self) -> bool:
        return self.dynamical_increase - 2 * self.dynamical_stderr > self.static_increase


def dynamical_effect(seq: KickSequence, modes: ModeStructure, heating_rate: float, trajectories: int = 1000,
                     seed: int = 0) -> DynamicalEffect:
    """Infidelity added by heating during the gate versus the same phonon gain present from the start.

    Both channels of the infinite-temperature bath raise ``nbar`` by
    ``heating_rate`` per second, so the static comparison uses a thermal state
    with ``nbar = heating_rate * T_G``.
    """
    T = float(seq.times[-1] - seq.times[0])
    base = 1.0 - plus_state_fidelity(seq, modes, 0.0)
    res = trajectory_fidelity(seq, modes, NoiseParams(heating_rate=heating_rate, trajectories=trajectories, seed=seed))
    nbar = heating_rate * T
    static = 1.0 - plus_state_fidelity(seq, modes, nbar)
    return DynamicalEffect(heating_rate, nbar, res.infidelity - base, res.stderr, static - base)


# ---------------------------------------------------------------- idle checks


def _idle_engine(heating, dephasing, n_max, qubits):
    from fastgate.ion_chain import TrapConfig, normal_modes

    modes = normal_modes(TrapConfig.for_ions(2))
    return _Engine(modes, list(range(qubits)), n_max, heating, dephasing, mode_subset=[0] if heating > 0 else [])


def idle_jump_probability(heating_rate: float, duration: float, trajectories: int = 2000, seed: int = 0,
                          n_max: int = 12) -> tuple[float, float]:
    """Fraction (and standard error) of idle ground-state trajectories of one mode with at least one jump."""
    hits = 0
    eng = _idle_engine(heating_rate, 0.0, n_max, 0)
    for k in range(trajectories):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(k,)))
        amp = eng.sim.product_state(np.ones(1), [0]).amplitudes
        _, jumped = eng.run(amp, [], duration, rng)
        hits += jumped
    p = hits / trajectories
    return p, float(np.sqrt(p * (1 - p) / trajectories))


def idle_coherence(dephasing_rate: float, duration: float, trajectories: int = 2000, seed: int = 0) -> tuple[float, float]:
    """Trajectory mean (and standard error) of ``<sigma_x>`` for one idle qubit prepared in ``|+>``."""
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    vals = np.empty(trajectories)
    eng = _idle_engine(0.0, dephasing_rate, 1, 1)
    for k in range(trajectories):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(k,)))
        amp = eng.sim.product_state(plus_state(1), []).amplitudes
        amp, _ = eng.run(amp, [], duration, rng)
        v = amp.ravel()
        vals[k] = float(np.vdot(v, sx @ v).real)
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(trajectories))
