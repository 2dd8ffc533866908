"""Acceptance criteria, one test per criterion.

Each test collects its individual checks, prints a single PASS/FAIL line
for the criterion and then asserts.  The lines are repeated in the pytest
terminal summary.  Run this file directly for the summary alone:

    python tests/test_acceptance.py
"""

from __future__ import annotations

import math
import sys
import time
import warnings
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import multivariate_normal

sys.path.insert(0, str(Path(__file__).parent))

from addtfit.arrhenius import ArrheniusLine, fit_line, ti_from_line  # noqa: E402
from addtfit.dataset import load_bundled, remap_time_zero  # noqa: E402
from addtfit.mlfit import MLParams, cs_loglik, fit_ml, param_ci, ti_confint  # noqa: E402
from addtfit.numopt import fd_hessian, monotone_lsq  # noqa: E402
from addtfit.semifit import SplineBasis, bspline_basis, fit_semi  # noqa: E402
from addtfit.tradls import fit_ls  # noqa: E402

from _sim import simulate  # noqa: E402

RESULTS: list[str] = []


class Criterion:
    def __init__(self, number, title):
        self.number, self.title = number, title
        self.checks = []
        self.t0 = time.perf_counter()

    def close(self, label, got, want, tol):
        ok = got is not None and math.isfinite(got) and abs(got - want) <= tol
        self.checks.append((ok, f"{label}={_fmt(got)} (want {_fmt(want)} +/- {tol:g})"))

    def rel(self, label, got, want, rtol):
        ok = abs(got - want) <= rtol * abs(want)
        self.checks.append((ok, f"{label}={_fmt(got)} (want {_fmt(want)} +/- {100 * rtol:g}%)"))

    def true(self, label, ok):
        self.checks.append((bool(ok), label))

    def runtime(self, limit_s):
        dt = time.perf_counter() - self.t0
        self.checks.append((dt < limit_s, f"runtime {dt:.2f}s (< {limit_s:g}s)"))

    def finish(self):
        failed = [msg for ok, msg in self.checks if not ok]
        status = "PASS" if not failed else "FAIL"
        detail = "; ".join(failed) if failed else f"{len(self.checks)} checks"
        line = f"criterion {self.number} [{status}] {self.title}: {detail}"
        RESULTS.append(line)
        print(line)
        assert not failed, line


def _fmt(v):
    if v is None:
        return "None"
    return f"{v:.6g}" if abs(v) >= 1e-3 or v == 0 else f"{v:.3e}"


def _quiet(fn, *args, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return fn(*args, **kw)


@pytest.fixture(scope="module")
def adhesive():
    return load_bundled("adhesive-bond-b")


@pytest.fixture(scope="module")
def seal():
    return remap_time_zero(load_bundled("seal-strength"))


def test_criterion_1_ls_adhesive(adhesive):
    c = Criterion(1, "LS / Adhesive Bond B")
    fit = fit_ls(adhesive, 70, 1e5)
    c.runtime(1.0)
    c.close("beta0", fit.line.beta0, -13.7805, 5e-4)
    c.close("beta1", fit.line.beta1, 5535.0907, 0.05)
    for (temp, m), want in zip(fit.failure_times, (2063.0924, 797.1901, 206.1681)):
        c.close(f"m({temp:g})", m, want, 0.01)
    c.true(f"displayed TI {fit.display_ti} == 22", fit.display_ti == 22)
    c.finish()


def test_criterion_2_ls_seal(seal):
    c = Criterion(2, "LS / Seal Strength")
    fit = fit_ls(seal, 70, 1e5)
    c.runtime(1.0)
    c.close("beta0", fit.line.beta0, 0.1934, 5e-4)
    c.close("beta1", fit.line.beta1, 1565.1731, 0.05)
    for (temp, m), want in zip(fit.failure_times,
                               (2862.3430, 2282.3303, 509.2084, 622.0857)):
        c.close(f"m({temp:g})", m, want, 0.01)
    c.true(f"displayed TI {fit.display_ti} == 52", fit.display_ti == 52)
    c.finish()


def test_criterion_3_ml_adhesive(adhesive):
    c = Criterion(3, "ML / Adhesive Bond B")
    fit = _quiet(fit_ml, adhesive, 70, 1e5, 0.95)
    c.runtime(30.0)
    c.close("loglik", fit.loglik, -288.9057, 0.01)
    names = ("alpha", "nu0", "nu1", "gamma", "sigma")
    for name, got, want in zip(names, fit.params.as_array(),
                               (87.2004, -37.2360, 14913.1628, 0.7274, 8.2017)):
        c.rel(name, got, want, 5e-3)
    c.true(f"rho={fit.params.rho:.2e} <= 0.001", fit.params.rho <= 1e-3)
    c.close("TI", fit.ti.ti_c, 25.6183, 0.05)
    c.close("TI std", fit.ti.std, 3.0980, 0.05)
    c.close("CI lower", fit.ti.ci[0], 19.5465, 0.1)
    c.close("CI upper", fit.ti.ci[1], 31.6902, 0.1)
    c.close("line beta0", fit.line.beta0, -16.6830, 0.01)
    c.close("line beta1", fit.line.beta1, 6478.5641, 2)
    c.finish()


def test_criterion_4_ml_seal(seal):
    c = Criterion(4, "ML / Seal Strength")
    fit = _quiet(fit_ml, seal, 70, 1e5, 0.95)
    c.runtime(60.0)
    c.close("loglik", fit.loglik, -555.0169, 0.02)
    names = ("alpha", "nu0", "nu1", "gamma", "sigma", "rho")
    for name, got, want in zip(names, fit.params.as_array(),
                               (30.5898, 0.2991, 3867.7170, 1.6556, 5.5456, 0.7306)):
        c.rel(name, got, want, 1e-2)
    c.close("TI", fit.ti.ti_c, 56.6920, 0.2)
    c.close("line beta0", fit.line.beta0, -0.0942, 0.01)
    c.close("line beta1", fit.line.beta1, 1680.4055, 2)
    c.finish()


def test_criterion_5_ci_forms(adhesive):
    c = Criterion(5, "CI-form compatibility (Adhesive)")
    est = np.array([87.2004, -37.2360, 14913.1628, 0.7274, 8.2017, 0.0000])
    std = np.array([2.5920, 4.6450, 1561.1425, 0.0870, 0.6405, 0.0003])
    printed = [(82.2653, 92.4315), (-46.3401, -28.1318), (11853.3235, 17973.0022),
               (0.5753, 0.9195), (7.0377, 9.5581), (-0.0006, 0.0006)]
    ci = param_ci(est, std, 0.95)
    for name, (lo, hi), (want_lo, want_hi) in zip(
            ("alpha", "nu0", "nu1", "gamma", "sigma", "rho"), ci, printed):
        c.close(f"{name} lower", lo, want_lo, 0.01)
        c.close(f"{name} upper", hi, want_hi, 0.01)
    fit = _quiet(fit_ml, adhesive, 70)
    ti99 = ti_confint(fit, 0.99)
    c.close("TI 99% lower", ti99.ci[0], 17.638, 0.01)
    c.close("TI 99% upper", ti99.ci[1], 33.598, 0.01)
    c.finish()


def test_criterion_6_semi_adhesive(adhesive):
    c = Criterion(6, "Semi / Adhesive Bond B, knot 180.66")
    fit = fit_semi(adhesive, 70, 1e5, knots=[180.66])
    c.runtime(60.0)
    c.close("betahat", fit.params.beta, 1.329, 0.005)
    c.close("loglik", fit.loglik, -288.135, 0.05)
    c.close("TI", fit.ti.ti_c, 26.313, 0.1)
    c.close("line beta0", fit.line.beta0, -17.363, 0.01)
    c.close("line beta1", fit.line.beta1, 6697.074, 3)
    c.close("AICc (compat, k=5)", fit.aicc_compat, 586.269, 0.05)
    c.finish()


def test_criterion_7_semi_seal(seal):
    c = Criterion(7, "Semi / Seal Strength, pinned knots")
    t0 = time.perf_counter()
    plain = fit_semi(seal, 70, 1e5, knots=[268.60, 527.17, 840.00, 1394.55])
    dt = time.perf_counter() - t0
    c.true(f"no-rho runtime {dt:.2f}s (< 120s)", dt < 120)
    c.close("no-rho betahat", plain.params.beta, 0.282, 0.005)
    c.close("no-rho loglik", plain.loglik, -639.206, 0.1)
    c.close("no-rho TI", plain.ti.ti_c, 32.768, 0.2)
    t0 = time.perf_counter()
    cor = fit_semi(seal, 70, 1e5, with_rho=True, knots=[265.59, 520.02, 840.00, 2483.29])
    dt = time.perf_counter() - t0
    c.true(f"with-rho runtime {dt:.2f}s (< 120s)", dt < 120)
    c.close("rho betahat", cor.params.beta, 0.323, 0.005)
    c.close("rho rhohat", cor.params.rho, 0.714, 0.01)
    c.close("rho loglik", cor.loglik, -552.662, 0.1)
    c.close("rho TI", cor.ti.ti_c, 47.338, 0.3)
    c.finish()


def test_criterion_8_property_suite():
    c = Criterion(8, "property suite")
    rng = np.random.default_rng(20240808)

    worst = 0.0
    for _ in range(1000):
        m = int(rng.integers(1, 6))
        r = rng.normal(scale=3, size=m)
        sigma, rho = float(rng.uniform(0.2, 5)), float(rng.uniform(0, 0.95))
        cov = sigma ** 2 * ((1 - rho) * np.eye(m) + rho * np.ones((m, m)))
        ref = multivariate_normal(np.zeros(m), cov).logpdf(r)
        got = cs_loglik(r, np.zeros(m, dtype=int), np.array([m]), sigma, rho)
        worst = max(worst, abs(got - ref))
    c.true(f"compound symmetry vs dense oracle, 1000 cells, max err {worst:.1e} <= 1e-10",
           worst <= 1e-10)

    worst = 0.0
    for _ in range(200):
        q = int(rng.integers(0, 5))
        hi = float(rng.uniform(1, 5000))
        inner = tuple(np.sort(rng.uniform(0, hi, size=int(rng.integers(0, 8)))))
        basis = SplineBasis(inner, (0.0, hi), q)
        z = np.r_[0.0, hi, rng.uniform(0, hi, size=50), inner]
        worst = max(worst, float(np.max(np.abs(bspline_basis(z, basis).sum(axis=1) - 1))))
    c.true(f"B-spline partition of unity, max err {worst:.1e} <= 1e-12", worst <= 1e-12)

    grid_ok = True
    for _ in range(20):
        B = rng.uniform(0, 1, size=(8, 3))
        y = rng.normal(scale=2, size=8)
        res = monotone_lsq(B, y)
        span = np.linspace(-1.5, 1.5, 13)
        best = min(
            float(np.sum((y - B @ np.array([a, a - d1, a - d1 - d2])) ** 2))
            for a in span + res.coef[0] for d1 in np.abs(span) for d2 in np.abs(span))
        grid_ok &= bool(res.rss <= best + 1e-10 and res.coef[0] >= res.coef[1] >= res.coef[2])
    c.true("monotone_lsq beats a feasible grid on 20 three-coefficient instances", grid_ok)

    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(1, 6))
        M = rng.normal(size=(n, n))
        A = M @ M.T + n * np.eye(n)
        H = fd_hessian(lambda x, A=A: 0.5 * x @ A @ x, rng.normal(size=n))
        worst = max(worst, float(np.max(np.abs(H - A) / np.abs(A).max())))
    c.true(f"fd_hessian on random quadratics, max rel err {worst:.1e} <= 1e-5", worst <= 1e-5)

    worst = 0.0
    for _ in range(500):
        line = ArrheniusLine(float(rng.uniform(-25, 0)), float(rng.uniform(1000, 15000)))
        ti = ti_from_line(line, 1e5)
        worst = max(worst, abs(line.failure_time(ti.ti_c) / 1e5 - 1))
    c.true(f"TI round trip, max rel err {worst:.1e} <= 1e-9", worst <= 1e-9)

    line = ArrheniusLine(-13.7805, 5535.0907)
    got = fit_line([(50, line.failure_time(50)), (70, line.failure_time(70))])
    c.true("Arrhenius line recovered exactly from two collinear points",
           math.isclose(got.beta0, line.beta0, rel_tol=1e-10)
           and math.isclose(got.beta1, line.beta1, rel_tol=1e-10))
    c.runtime(30.0)
    c.finish()


def test_criterion_9_simulation():
    c = Criterion(9, "simulation sanity (20 seeded runs)")
    truth = MLParams(90.0, -35.0, 14000.0, 0.8, 5.0, 0.0)
    names = ("alpha", "nu0", "nu1", "gamma", "sigma", "rho")
    hits = np.zeros(6, dtype=int)
    runs = 20
    for seed in range(runs):
        ds = simulate(truth, reps=20, seed=seed)
        fit = _quiet(fit_ml, ds, 70)
        err = np.abs(fit.params.as_array() - truth.as_array())
        hits += err <= 3 * fit.std
    for name, h in zip(names, hits):
        c.true(f"{name} within 3 SE in {h}/{runs} runs (>= 95%)", h >= 0.95 * runs)
    c.runtime(300.0)
    c.finish()


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
