"""Property-based checks of the invariants shared across modules."""

import math

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from scipy.stats import multivariate_normal

from addtfit.arrhenius import ArrheniusLine, fit_line, ti_from_line
from addtfit.dataset import DegradationDataset, parse_csv, remap_time_zero
from addtfit.mlfit import cs_loglik
from addtfit.numopt import fd_hessian, monotone_lsq
from addtfit.semifit import SplineBasis, bspline_basis

finite = dict(allow_nan=False, allow_infinity=False)


@st.composite
def cell(draw):
    m = draw(st.integers(1, 5))
    resid = draw(st.lists(st.floats(-10, 10, **finite), min_size=m, max_size=m))
    sigma = draw(st.floats(0.1, 5, **finite))
    rho = draw(st.floats(0, 0.95, **finite))
    return np.array(resid), sigma, rho


@settings(max_examples=1000, deadline=None)
@given(cell())
def test_cs_loglik_dense_oracle(c):
    r, sigma, rho = c
    m = len(r)
    cov = sigma ** 2 * ((1 - rho) * np.eye(m) + rho * np.ones((m, m)))
    ref = multivariate_normal(np.zeros(m), cov).logpdf(r)
    got = cs_loglik(r, np.zeros(m, dtype=int), np.array([m]), sigma, rho)
    assert abs(got - ref) <= 1e-10 * max(1.0, abs(ref))


@st.composite
def spline_basis(draw):
    q = draw(st.integers(0, 4))
    hi = draw(st.floats(0.5, 5000, **finite))
    inner = draw(st.lists(st.floats(0.01, 0.99, **finite), max_size=8))
    return SplineBasis(tuple(sorted(v * hi for v in inner)), (0.0, hi), q)


@settings(max_examples=200, deadline=None)
@given(spline_basis(), st.lists(st.floats(0, 1, **finite), min_size=1, max_size=30))
def test_bspline_partition_of_unity(basis, u):
    z = np.array(u) * basis.boundary[1]
    B = bspline_basis(z, basis)
    assert np.all(B >= 0)
    assert np.allclose(B.sum(axis=1), 1.0, atol=1e-12, rtol=0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_monotone_lsq_grid_oracle(seed):
    rng = np.random.default_rng(seed)
    B = rng.uniform(0, 1, size=(8, 3))
    y = rng.normal(size=8) * 2
    res = monotone_lsq(B, y)
    c = res.coef
    assert c[0] >= c[1] >= c[2]
    # brute force over a grid of feasible coefficient vectors around the answer
    span = np.linspace(-1.5, 1.5, 13)
    best = math.inf
    for a in span + c[0]:
        for d1 in np.abs(span):
            for d2 in np.abs(span):
                r = y - B @ np.array([a, a - d1, a - d1 - d2])
                best = min(best, float(r @ r))
    assert res.rss <= best + 1e-10


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 5))
def test_fd_hessian_random_quadratic(seed, n):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(n, n))
    A = M @ M.T + n * np.eye(n)
    b = rng.normal(size=n)
    x0 = rng.normal(size=n)
    H = fd_hessian(lambda x: 0.5 * x @ A @ x + b @ x, x0)
    assert np.allclose(H, A, rtol=1e-5, atol=1e-5 * np.abs(A).max())


@settings(max_examples=300, deadline=None)
@given(st.floats(-30, 5, **finite), st.floats(500, 20000, **finite),
       st.floats(10, 1e7, **finite))
def test_ti_round_trip(b0, b1, td):
    line = ArrheniusLine(b0, b1)
    if math.log10(td) - b0 <= 0:
        return
    ti = ti_from_line(line, td)
    if ti.ti_c <= -273.0:
        return
    assert math.isclose(line.failure_time(ti.ti_c), td, rel_tol=1e-9)


@settings(max_examples=200, deadline=None)
@given(st.floats(-30, 5, **finite), st.floats(500, 20000, **finite),
       st.floats(-50, 400, **finite), st.floats(1, 200, **finite))
def test_arrhenius_two_point_recovery(b0, b1, t1, gap):
    line = ArrheniusLine(b0, b1)
    pts = [(t1, line.failure_time(t1)), (t1 + gap, line.failure_time(t1 + gap))]
    got = fit_line(pts)
    assert math.isclose(got.beta1, b1, rel_tol=1e-7)
    assert math.isclose(got.beta0, b0, rel_tol=1e-7, abs_tol=1e-7)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 4), st.integers(0, 5), st.integers(1, 99999)),
                min_size=4, max_size=40))
def test_csv_round_trip_six_digits(rows):
    temps = [40, 50, 60, 70]
    text = "TempC,TimeH,Response\n" + "".join(
        f"{temps[t - 1]},{h * 100},{r / 1000:g}\n" for t, h, r in rows)
    text += "50,100,1\n60,200,1\n"
    ds = parse_csv(text.splitlines())
    again = parse_csv(ds.to_csv().splitlines())
    assert np.array_equal(ds.response, again.response)
    assert np.array_equal(ds.time_h, again.time_h)


@settings(max_examples=100, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.lists(st.tuples(st.sampled_from([100.0, 200.0, 250.0]), st.sampled_from([0.0, 10.0, 20.0]),
                          st.floats(0.1, 100, **finite)), min_size=3, max_size=30))
def test_remap_idempotent_preserves_pairs(rows):
    rows = rows + [(200.0, 10.0, 1.0), (250.0, 20.0, 1.0), (100.0, 0.0, 2.0)]
    T, t, y = (np.array(c) for c in zip(*rows))
    ds = DegradationDataset(T, t, y)
    once = remap_time_zero(ds)
    twice = remap_time_zero(once)
    assert np.array_equal(once.temp_c, twice.temp_c)
    assert len(once) == len(ds)
    assert sorted(zip(once.time_h, once.response)) == sorted(zip(ds.time_h, ds.response))
