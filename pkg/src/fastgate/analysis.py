"""Power-law fits of gate time against pulse count, and repetition-rate mapping."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass

import numpy as np

from fastgate.errors import InvalidArgument


@dataclass(frozen=True)
class FitResult:
    """``y = amplitude * x ** exponent``; ``covariance`` is over ``(log amplitude, exponent)``."""

    amplitude: float
    exponent: float
    residual_norm: float
    points: int
    covariance: tuple

    def __post_init__(self):
        if self.points < 3:
            raise InvalidArgument("a power-law fit needs at least 3 points")
        if not np.isfinite(self.residual_norm):
            raise InvalidArgument("non-finite fit residual")

    def predict(self, x):
        return self.amplitude * np.asarray(x, dtype=float) ** self.exponent

    def to_dict(self) -> dict:
        d = asdict(self)
        d["covariance"] = [list(r) for r in self.covariance]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def power_law_fit(points) -> FitResult:
    """Unweighted ordinary least squares on ``(log x, log y)``."""
    pts = np.asarray(list(points), dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise InvalidArgument("points must be (x, y) pairs")
    if len(pts) < 3:
        raise InvalidArgument("a power-law fit needs at least 3 points")
    if np.any(pts <= 0) or not np.all(np.isfinite(pts)):
        raise InvalidArgument("power-law data must be positive and finite")
    lx, ly = np.log(pts[:, 0]), np.log(pts[:, 1])
    design = np.column_stack([np.ones_like(lx), lx])
    coef, _, rank, _ = np.linalg.lstsq(design, ly, rcond=None)
    if rank < 2:
        raise InvalidArgument("x values must not all be equal")
    resid = ly - design @ coef
    dof = len(pts) - 2
    s2 = float(resid @ resid) / dof if dof > 0 else 0.0
    cov = s2 * np.linalg.inv(design.T @ design)
    return FitResult(
        amplitude=float(np.exp(coef[0])),
        exponent=float(coef[1]),
        residual_norm=float(np.linalg.norm(resid)),
        points=len(pts),
        covariance=tuple(tuple(map(float, r)) for r in cov),
    )


def rep_rate_map(n, gate_time):
    """Laser repetition rate ``n / T_G`` (Hz) needed to fit ``n`` pulse pairs into ``T_G``."""
    t = np.asarray(gate_time, dtype=float)
    if np.any(t <= 0):
        raise InvalidArgument("gate time must be positive")
    out = np.asarray(n, dtype=float) / t
    return float(out) if out.ndim == 0 else out


def rep_rate_exponent(p: float) -> float:
    """Exponent ``q`` in ``T_G ~ f_r ** q`` given ``T_G ~ n ** p`` and ``n = T_G f_r``."""
    if p == 1:
        raise InvalidArgument("exponent 1 has no repetition-rate scaling")
    return p / (1.0 - p)


def write_fit_curve_csv(fit: FitResult, x, path, x_name: str = "n", y_name: str = "time_s"):
    x = np.asarray(x, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([x_name, y_name])
        for xi, yi in zip(x, fit.predict(x)):
            w.writerow([repr(float(xi)), repr(float(yi))])
