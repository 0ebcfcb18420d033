"""Multistart simplex search over FRAG timings (tau1, tau2, tau3).

Each restart runs two Nelder-Mead stages in log-tau space: a coarse stage on
a sum-of-squares surrogate (phase error plus residual displacement), then a
polish on the log infidelity. The min-time objective adds a third stage that
shortens the gate while holding the fidelity floor.
"""

from __future__ import annotations

import json
import threading
from collections.abc import Iterable
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from fastgate.errors import InvalidArgument
from fastgate.gate_design import (
    BRANCH_SIGNS,
    TARGET_PHASE,
    FidelityModel,
    GateOutcome,
    frag_arrays,
    frag_sequence,
)
from fastgate.ion_chain import ModeStructure, TrapConfig

MAX_FIDELITY = "max-fidelity"
MIN_TIME = "min-time"

# infidelities below _TIE, or within 0.01 decades of each other, rank as ties
_TIE = 1e-12
_LOG_FLOOR = 1e-16


@dataclass(frozen=True)
class OptimizationSpec:
    n: int
    pair: tuple = (0, 1)
    objective: str = MAX_FIDELITY
    fidelity_floor: float | None = None
    tau_bounds: tuple | None = None  # seconds; default (1e-3, 2) trap periods
    restarts: int = 64
    xatol: float = 1e-9
    fatol: float = 1e-10
    max_iter: int = 6000
    seed: int = 0
    initial_guesses: tuple = ()  # extra (tau1, tau2, tau3) starts in seconds
    shrink_rounds: int = 8  # min-time only: re-searches below the incumbent duration

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise InvalidArgument("n must be a positive integer")
        if self.objective not in (MAX_FIDELITY, MIN_TIME):
            raise InvalidArgument(f"unknown objective {self.objective!r}")
        if self.restarts < 1:
            raise InvalidArgument("restarts must be >= 1")
        if self.shrink_rounds < 0:
            raise InvalidArgument("shrink_rounds must be >= 0")
        if self.fidelity_floor is not None and not 0 < self.fidelity_floor <= 1:
            raise InvalidArgument("fidelity_floor must lie in (0, 1]")
        if self.objective == MIN_TIME and self.fidelity_floor is None:
            raise InvalidArgument("min-time objective needs a fidelity_floor")
        if self.tau_bounds is not None:
            lo, hi = self.tau_bounds
            if not (0 < lo < hi < np.inf):
                raise InvalidArgument("tau bounds must be positive, finite and ordered")


def _log_infidelity(model, n, taus):
    return np.log10(max(1.0 - model.frag_fidelity(n, taus), _LOG_FLOOR))


def _clip_penalty(x, lo, hi):
    xc = np.clip(x, lo, hi)
    return xc, float(np.sum(np.abs(x - xc)))


def _surrogate(model, n, taus):
    # non-saturating sum of squares; 1 - F flattens out once displacements are large
    t, z = frag_arrays(n, taus)
    phi, alpha = model.parts(t, z)
    chi = 0.25 * (BRANCH_SIGNS[:, 0] * BRANCH_SIGNS[:, 1]) @ phi
    resid = np.sin(chi - TARGET_PHASE) ** 2 + 0.3 * (2 * model.nbar + 1) * np.sum(np.abs(alpha) ** 2)
    return np.log10(resid + 1e-18)


def _coarse(model, n, x0, lo, hi):
    def obj(x):
        xc, pen = _clip_penalty(x, lo, hi)
        return _surrogate(model, n, np.exp(xc)) + 10.0 * pen

    r = minimize(obj, x0, method="Nelder-Mead", options=dict(xatol=1e-6, fatol=1e-8, maxiter=3000, adaptive=True))
    return np.clip(r.x, lo, hi), int(r.nit)


def _polish_fidelity(model, n, x0, lo, hi, spec):
    def obj(x):
        xc, pen = _clip_penalty(x, lo, hi)
        return _log_infidelity(model, n, np.exp(xc)) + 10.0 * pen

    opts = dict(xatol=spec.xatol, fatol=spec.fatol, maxiter=spec.max_iter, maxfev=2 * spec.max_iter, adaptive=True)
    r = minimize(obj, x0, method="Nelder-Mead", options=opts)
    return np.clip(r.x, lo, hi), int(r.nit)


def _polish_time(model, n, x0, lo, hi, floor, period, spec):
    log_floor = np.log10(max(1.0 - floor, _LOG_FLOOR))

    def obj(x):
        xc, pen = _clip_penalty(x, lo, hi)
        taus = np.exp(xc)
        t = 2.0 * taus.max() / period
        excess = _log_infidelity(model, n, taus) - log_floor
        return t + (10.0 + excess if excess > 0 else 0.0) + 10.0 * pen

    opts = dict(xatol=spec.xatol, fatol=1e-12, maxiter=spec.max_iter, maxfev=2 * spec.max_iter, adaptive=True)
    r = minimize(obj, x0, method="Nelder-Mead", options=opts)
    return np.clip(r.x, lo, hi), int(r.nit)


def _run_restart(args):
    modes, pair, nbar, spec, period, k, x0 = args
    model = FidelityModel(modes, pair, nbar)
    lo, hi = _log_bounds(spec, period)
    x0 = np.minimum(x0, hi)
    xc, nit0 = _coarse(model, spec.n, x0, lo, hi)
    x, nit = _polish_fidelity(model, spec.n, xc, lo, hi, spec)
    nit += nit0
    f = model.frag_fidelity(spec.n, np.exp(x))
    rec = {"restart": k, "iteration": nit, "fidelity": f, "taus": np.exp(x).tolist()}
    if spec.objective == MIN_TIME and f >= spec.fidelity_floor:
        xt, nit2 = _polish_time(model, spec.n, x, lo, hi, spec.fidelity_floor, period, spec)
        ft = model.frag_fidelity(spec.n, np.exp(xt))
        if ft >= spec.fidelity_floor and np.exp(xt).max() <= np.exp(x).max():
            rec.update(iteration=nit + nit2, fidelity=ft, taus=np.exp(xt).tolist())
    rec["duration_s"] = 2.0 * max(rec["taus"])
    return rec


def _restart_round(cfg, modes, spec, period, workers, offset):
    lo, hi = _log_bounds(spec, period)
    jobs = [(modes, spec.pair, cfg.thermal_occupation, spec, period, offset + k, x0)
            for k, x0 in enumerate(_starts(spec, lo, hi))]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_restart, jobs))
    return [_run_restart(j) for j in jobs]


def _log_bounds(spec, period):
    if spec.tau_bounds is not None:
        lo, hi = spec.tau_bounds
    else:
        lo, hi = 1e-3 * period, 2.0 * period
    return np.log(lo), np.log(hi)


def _starts(spec, lo, hi):
    u = qmc.LatinHypercube(d=3, seed=spec.seed).random(spec.restarts)
    starts = list(lo + (hi - lo) * u)
    for g in spec.initial_guesses:
        starts.append(np.clip(np.log(np.asarray(g, dtype=float)), lo, hi))
    return starts


def _rank_key(rec, spec):
    f, t = rec["fidelity"], rec["duration_s"]
    if spec.objective == MIN_TIME:
        return (0 if f >= spec.fidelity_floor else 1, t if f >= spec.fidelity_floor else -f)
    # highest fidelity first; near-ties resolved towards the faster gate
    return (round(float(np.log10(max(1.0 - f, _TIE))), 2), t)


def optimize_gate(cfg: TrapConfig, modes: ModeStructure, spec: OptimizationSpec, log=None, workers: int = 1) -> GateOutcome:
    """Best FRAG gate over all restarts of a log-space Nelder-Mead search.

    ``log`` may be a writable text stream; one JSON line is written per
    restart. With ``workers > 1`` restarts run in a process pool; results do
    not depend on scheduling because each restart has a fixed start point.
    """
    period = cfg.com_period
    records = _restart_round(cfg, modes, spec, period, workers, 0)
    best = min(records, key=lambda r: _rank_key(r, spec))
    if spec.objective == MIN_TIME:
        # Nelder-Mead rarely crosses into a faster basin on its own; shrink the
        # box below the incumbent and search again until nothing feasible remains
        lo_t = _log_bounds(spec, period)[0]
        for rnd in range(1, spec.shrink_rounds + 1):
            if best["fidelity"] < spec.fidelity_floor:
                break
            hi_t = 0.999 * max(best["taus"])
            if np.log(hi_t) <= lo_t:
                break
            sub = replace(spec, tau_bounds=(np.exp(lo_t), hi_t), initial_guesses=())
            more = _restart_round(cfg, modes, sub, period, workers, rnd * len(records))
            records += more
            cand = min(more, key=lambda r: _rank_key(r, spec))
            if cand["fidelity"] < spec.fidelity_floor:
                break
            best = cand

    if log is not None:
        for r in records:
            log.write(json.dumps({k: r[k] for k in ("restart", "iteration", "fidelity", "duration_s")}) + "\n")

    seq = frag_sequence(spec.n, *best["taus"], pair=spec.pair)
    outcome = GateOutcome.evaluate(seq, modes, cfg.thermal_occupation, diagnostics={"restarts": records})
    floor = spec.fidelity_floor
    outcome.feasible = floor is None or outcome.fidelity >= floor
    return outcome


_CACHE: dict = {}
_CACHE_LOCK = threading.Lock()


def clear_cache():
    with _CACHE_LOCK:
        _CACHE.clear()


def _cache_key(cfg, pair, spec):
    return (
        cfg.ion_count, cfg.axial_freq, cfg.base_lamb_dicke, cfg.thermal_occupation,
        tuple(pair), spec.n, spec.objective, spec.fidelity_floor, spec.restarts, spec.seed,
        spec.tau_bounds, spec.shrink_rounds,
    )


def sweep_pairs(
    cfg: TrapConfig,
    n: int,
    modes: ModeStructure | None = None,
    spec: OptimizationSpec | None = None,
    pairs: Iterable | None = None,
    log=None,
    workers: int = 1,
) -> list[GateOutcome]:
    """Optimised gate for every adjacent pair ``(i, i+1)``, ordered by ``i``.

    The chain is mirror symmetric, so pair ``(i, i+1)`` and its reflection
    ``(L-2-i, L-1-i)`` share one search: the reflected pair re-evaluates the
    partner's timings. Each pair is warm-started from its inner neighbour's
    solution. Results are cached per ``(L, pair, n)`` for the process.
    """
    from fastgate.ion_chain import normal_modes

    modes = modes if modes is not None else normal_modes(cfg)
    base = spec if spec is not None else OptimizationSpec(n=n)
    if base.n != n:
        base = replace(base, n=n)
    L = cfg.ion_count
    wanted = [(i, i + 1) for i in range(L - 1)] if pairs is None else [tuple(p) for p in pairs]

    solved: dict = {}
    guesses: tuple = tuple(base.initial_guesses)
    for i in range((L - 1 + 1) // 2):
        pair = (i, i + 1)
        mirror = (L - 2 - i, L - 1 - i)
        if pair not in wanted and mirror not in wanted:
            continue
        key = _cache_key(cfg, pair, base)
        with _CACHE_LOCK:
            hit = _CACHE.get(key)
        if hit is None:
            hit = optimize_gate(cfg, modes, replace(base, pair=pair, initial_guesses=guesses), log=log, workers=workers)
            with _CACHE_LOCK:
                _CACHE[key] = hit
        solved[pair] = hit
        taus = _frag_taus(hit)
        guesses = tuple(base.initial_guesses) + (taus,)
        if mirror != pair:
            mkey = _cache_key(cfg, mirror, base)
            with _CACHE_LOCK:
                mhit = _CACHE.get(mkey)
            if mhit is None:
                seq = frag_sequence(n, *taus, pair=mirror)
                mhit = GateOutcome.evaluate(seq, modes, cfg.thermal_occupation, feasible=hit.feasible,
                                            diagnostics={"mirror_of": list(pair)})
                with _CACHE_LOCK:
                    _CACHE[mkey] = mhit
            solved[mirror] = mhit
    return [solved[p] for p in sorted(wanted)]


def _frag_taus(outcome: GateOutcome) -> tuple:
    t = np.asarray(outcome.sequence.times)
    pos = t[t > 0]
    z = np.asarray(outcome.sequence.zetas)[t > 0]
    n = outcome.sequence.n
    # magnitudes at +tau: tau1 -> n, tau2 -> -2n, tau3 -> 2n
    lookup = {n: None, -2 * n: None, 2 * n: None}
    for tk, zk in zip(pos, z):
        lookup[int(zk)] = float(tk)
    return (lookup[n], lookup[-2 * n], lookup[2 * n])
