from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fastgate.analysis import FitResult, power_law_fit, rep_rate_exponent, rep_rate_map, write_fit_curve_csv
from fastgate.errors import InvalidArgument


@settings(max_examples=50)
@given(st.floats(min_value=1e-9, max_value=1e3), st.floats(min_value=-2, max_value=2))
def test_exact_power_law_recovered(a, p):
    x = np.array([1, 2, 5, 10, 20, 50, 100.0])
    fit = power_law_fit(zip(x, a * x**p))
    assert fit.amplitude == pytest.approx(a, rel=1e-9)
    assert fit.exponent == pytest.approx(p, abs=1e-9)
    assert fit.residual_norm < 1e-9


def test_fit_against_polyfit():
    rng = np.random.default_rng(0)
    x = np.array([1, 2, 5, 10, 20, 50, 100.0])
    y = 1.1e-6 * x**-0.67 * np.exp(rng.normal(0, 0.05, x.size))
    fit = power_law_fit(zip(x, y))
    slope, icpt = np.polyfit(np.log(x), np.log(y), 1)
    assert fit.exponent == pytest.approx(slope)
    assert fit.amplitude == pytest.approx(np.exp(icpt))
    # covariance matches the textbook OLS expression
    resid = np.log(y) - (icpt + slope * np.log(x))
    s2 = resid @ resid / (x.size - 2)
    var_slope = s2 / np.sum((np.log(x) - np.log(x).mean()) ** 2)
    assert fit.covariance[1][1] == pytest.approx(var_slope)


@pytest.mark.parametrize("pts", [[(1, 1), (2, 2)], [(1, 1), (2, -1), (3, 1)], [(1, 1), (1, 2), (1, 3)],
                                 [(1, 1), (2, np.inf), (3, 1)]])
def test_fit_rejects_bad_input(pts):
    with pytest.raises(InvalidArgument):
        power_law_fit(pts)


def test_fit_result_json_roundtrip():
    fit = power_law_fit([(1, 2.0), (2, 1.1), (4, 0.52)])
    d = json.loads(fit.to_json())
    assert FitResult(**{**d, "covariance": tuple(map(tuple, d["covariance"]))}) == fit
    with pytest.raises(InvalidArgument):
        FitResult(1.0, -1.0, 0.0, 2, ((0, 0), (0, 0)))


def test_rep_rate_map_and_exponent():
    assert rep_rate_map(10, 1e-6) == pytest.approx(1e7)
    assert rep_rate_map(np.array([1, 2]), np.array([1e-6, 1e-6])) == pytest.approx([1e6, 2e6])
    with pytest.raises(InvalidArgument):
        rep_rate_map(1, 0)
    assert rep_rate_exponent(-0.67) == pytest.approx(-0.67 / 1.67)
    assert rep_rate_exponent(-0.5) == pytest.approx(-1 / 3)
    with pytest.raises(InvalidArgument):
        rep_rate_exponent(1.0)


@settings(max_examples=30)
@given(st.floats(min_value=-0.95, max_value=-0.05), st.floats(min_value=1e-7, max_value=1e-5))
def test_rep_rate_exponent_consistent(p, a):
    # T = a n^p and f = n / T  =>  T ~ f^q
    n = np.array([2.0, 200.0])
    t = a * n**p
    f = rep_rate_map(n, t)
    q = np.diff(np.log(t)) / np.diff(np.log(f))
    assert q[0] == pytest.approx(rep_rate_exponent(p), rel=1e-9)


def test_fit_curve_csv(tmp_path):
    fit = power_law_fit([(1, 2.0), (2, 1.0), (4, 0.5)])
    path = tmp_path / "c.csv"
    write_fit_curve_csv(fit, [1, 8], path)
    lines = path.read_text().splitlines()
    assert lines[0] == "n,time_s"
    assert float(lines[2].split(",")[1]) == pytest.approx(0.25)
