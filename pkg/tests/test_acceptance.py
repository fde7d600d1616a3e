"""Acceptance suite: one test per criterion, each recording a pass/fail line.

The lines are printed in the terminal summary (see ``conftest.py``).  The
simulation criteria are marked ``slow``; they still run by default.
"""

import math
import time

import numpy as np
import pytest
from scipy import integrate

from conftest import record_acceptance, s1_log_a_quad, s_phi_gof, uniform_sphere, random_rotation
from smallsphere import estimation as est
from smallsphere import inference
from smallsphere.densities import S1, S2, horizontal_angles, log_density, log_norm_const
from smallsphere.saddlepoint import s1_log_a
from smallsphere.samplers import make_rng, sample_model
from smallsphere.simulation import (
    replicate_rng,
    run_power_study,
    run_table2,
    run_table3,
    run_table4,
    table2_params,
    table3_params,
)
from smallsphere.sphere import frame, geodesic_distance

E3 = np.array([0.0, 0.0, 1.0])
REPS = 100

TABLE2_REFERENCE = {
    "S1": {"a": (6.62, 3.44), "b": (1.59, 0.78), "c": (14.89, 13.00), "d": (1.32, 0.56)},
    "S2": {"a": (6.06, 3.21), "b": (1.58, 0.76), "c": (14.57, 11.56), "d": (1.33, 0.56)},
    "BM": {"a": (9.54, 9.80), "b": (1.66, 0.81), "c": (16.59, 13.57), "d": (1.32, 0.56)},
}
TABLE3_REFERENCE = {
    "IMS2": {"b": (1.27, 0.51), "e": (1.58, 0.75), "f": (4.60, 2.69)},
    "MS2": {"b": (1.28, 0.51), "e": (1.57, 0.75), "f": (4.49, 2.79)},
}


def mode(nu):
    return np.array([math.sqrt(1 - nu * nu), 0.0, nu])


def pooled_tolerance(sd_ref, sd_ours, reps):
    """Two pooled standard errors of a difference of means."""
    return 2.0 * math.sqrt((sd_ref**2 + sd_ours**2) / 2.0) / math.sqrt(reps)


def compare_table(report, reference, reps):
    rows, ok = [], True
    for method, cols in reference.items():
        for col, (m_p, sd_p) in cols.items():
            m, sd = report.cell(method, col)
            tol = pooled_tolerance(sd_p, sd, reps)
            good = abs(m - m_p) <= tol
            ok &= good
            rows.append(f"{method}({col}) {m:.2f} vs {m_p:.2f}+-{tol:.2f}{'' if good else ' FAIL'}")
    return ok, "; ".join(rows)


class TestCriterion1Constants:
    def test_saddlepoint_and_closed_form(self):
        t0 = time.perf_counter()
        worst, ok = 0.0, True
        for k0, k1 in [(10.0, 1.0), (100.0, 1.0), (100.0, 10.0)]:
            for nu in (-0.3, 0.0, 0.5):
                ref = s1_log_a_quad(k0, k1, nu)
                rel = abs(s1_log_a(k0, k1, nu) - ref) / abs(ref)
                worst = max(worst, rel)
                ok &= rel <= 0.015
        q, _ = integrate.dblquad(
            lambda phi, s: math.exp(-10 * (s - 0.5) ** 2 + math.cos(phi)), -1, 1, -math.pi, math.pi, epsabs=0, epsrel=1e-12
        )
        b_rel = abs(math.exp(log_norm_const(S2(E3, mode(0.5), 10.0, 1.0))) - q) / q
        elapsed = time.perf_counter() - t0
        ok = ok and b_rel <= 1e-6 and elapsed < 10
        record_acceptance(1, ok, f"worst log-a rel err {worst:.4f} (<=0.015), S2 b rel err {b_rel:.1e}, {elapsed:.1f}s")
        assert ok


@pytest.mark.slow
class TestCriterion2Table2:
    def test_table2(self):
        t0 = time.perf_counter()
        report = run_table2(reps=REPS)
        elapsed = time.perf_counter() - t0
        ok, detail = compare_table(report, TABLE2_REFERENCE, REPS)
        ok = ok and elapsed < 600
        record_acceptance(2, ok, f"{detail}; {elapsed:.0f}s")
        assert ok


@pytest.mark.slow
class TestCriterion3Table3:
    def test_table3(self):
        t0 = time.perf_counter()
        report = run_table3(settings=("b", "e", "f"), estimators=("IMS2", "MS2"), reps=REPS)
        elapsed = time.perf_counter() - t0
        ok, detail = compare_table(report, TABLE3_REFERENCE, REPS)
        ok = ok and elapsed < 900
        record_acceptance(3, ok, f"{detail}; {elapsed:.0f}s")
        assert ok


@pytest.mark.slow
class TestCriterion4Table4:
    def test_table4_case_f(self):
        t0 = time.perf_counter()
        report = run_table4(cases=("f",), ns=(200,), reps=REPS)
        elapsed = time.perf_counter() - t0
        ms2, ims2 = report.cells["n=200 MS2"], report.cells["n=200 IMS2"]
        k11, k12, lam = ms2["f:kappa11"][0], ms2["f:kappa12"][0], ms2["f:lambda12"][0]
        i11, i12 = ims2["f:kappa11"][0], ims2["f:kappa12"][0]
        ok = (
            abs(k11 - 20.38) <= 0.1 * 20.38
            and abs(k12 - 20.54) <= 0.1 * 20.54
            and abs(lam - 15.41) <= 0.1 * 15.41
            and 10 < i11 < 13
            and 10 < i12 < 13
            and elapsed < 300
        )
        record_acceptance(4, ok, f"MS2 kappa1 ({k11:.2f}, {k12:.2f}) lambda {lam:.2f}; iMS2 kappa1 ({i11:.2f}, {i12:.2f}); {elapsed:.0f}s")
        assert ok


@pytest.mark.slow
class TestCriterion5Power:
    def test_power(self):
        rates = run_power_study(reps=200).rates
        ok = (
            abs(rates["(20,10)"] - 0.435) <= 0.10
            and rates["(100,10)"] >= 0.95
            and rates["(100,1)"] >= 0.95
            and 0.02 <= rates["vmf"] <= 0.09
        )
        record_acceptance(5, ok, ", ".join(f"{k}: {v:.3f}" for k, v in rates.items()))
        assert ok


@pytest.mark.slow
class TestCriterion6Samplers:
    def test_gof_and_association(self):
        parts, ok = [], True
        for setting in ("a", "c"):
            k0, k1, nu = *{"a": (10.0, 1.0), "c": (100.0, 10.0)}[setting], 0.5
            r = math.sqrt(1 - nu * nu)
            X2 = sample_model(make_rng(61), S2(E3, mode(nu), k0, k1), 20_000)
            p2 = s_phi_gof(X2, lambda s, phi: -k0 * (s - nu) ** 2 + k1 * np.cos(phi), nu, k0)
            X1 = sample_model(make_rng(62), S1(E3, mode(nu), k0, k1), 20_000)
            p1 = s_phi_gof(X1, lambda s, phi: -k0 * (s - nu) ** 2 + k1 * (nu * s + r * np.sqrt(1 - s * s) * np.cos(phi)), nu, k0)
            ok &= p2 > 0.01 and p1 > 0.01
            parts.append(f"({setting}) S2 p={p2:.3f} S1 p={p1:.3f}")
        P = table3_params("f")
        X = sample_model(make_rng(63), P, 20_000)
        phi, zeta = horizontal_angles(P.mu0, P.mu1, X)
        rho = float(np.corrcoef(np.sin(phi - zeta).T)[0, 1])
        ok &= abs(rho - 0.75) <= 0.05
        parts.append(f"MS2 correlation {rho:.3f} vs 0.75+-0.05")
        record_acceptance(6, ok, "; ".join(parts))
        assert ok


class TestCriterion7Invariance:
    def test_invariance_suite(self):
        rng = make_rng(71)
        prop_err = 0.0
        for cls in (S1, S2):
            mu0, mu1 = uniform_sphere(rng, 2)
            p = cls(mu0, mu1, 10.0, 3.0)
            X = uniform_sphere(rng, 200)
            u = frame(mu0, mu1)[:, 2]
            B = np.eye(3) - 2 * np.outer(u, u)
            prop_err = max(prop_err, np.max(np.abs(log_density(p, X @ B.T) - log_density(p, X))))
            prop_err = max(prop_err, np.max(np.abs(log_density(cls(-mu0, mu1, 10.0, 3.0), X) - log_density(p, X))))

        X = sample_model(make_rng(72), S1(E3, mode(0.5), 10.0, 1.0), 100_000)
        proj = X[:, 1]  # normal of the plane spanned by e3 and the mode
        z = abs(proj.mean()) / (proj.std(ddof=1) / math.sqrt(proj.size))

        Y = sample_model(make_rng(73), table2_params("b"), 50)
        R = random_rotation(make_rng(74))
        eq = 0.0
        for model in ("S2", "S1"):
            a, b = est.fit_model(model, Y), est.fit_model(model, Y @ R.T)
            eq = max(eq, geodesic_distance(R @ a.params.mu0, b.params.mu0), geodesic_distance(R @ a.params.mu1, b.params.mu1))

        ok = prop_err <= 1e-10 and z <= 4 and eq <= 1e-6
        record_acceptance(7, ok, f"symmetry max diff {prop_err:.1e}; mode-plane offset {z:.2f} SE; equivariance {eq:.1e} rad")
        assert ok


@pytest.mark.slow
class TestCriterion8NullCalibration:
    def test_association_and_axis(self):
        P, reps, n = table3_params("c"), 200, 200
        W = {"Association": [], "Axis": []}
        assoc = inference.Hypothesis("Association", "MS2")
        axis = inference.Hypothesis("Axis", "MS2", mu0_star=E3)
        for i in range(reps):
            X = sample_model(replicate_rng(2028, i), P, n)
            alt = est.fit_ms2(X)
            W["Association"].append(inference.lr_test(assoc, X, alt_fit=alt).W)
            W["Axis"].append(inference.lr_test(axis, X, alt_fit=alt).W)
        ok, parts = True, []
        for name, hyp in (("Association", assoc), ("Axis", axis)):
            df = inference.degrees_of_freedom(hyp, 3, 2)
            w = np.array(W[name])
            size = float(np.mean([inference.chi_square_sf(v, df) < 0.05 for v in w]))
            good = abs(w.mean() - df) <= 0.25 * df and 0.02 <= size <= 0.09
            ok &= good
            parts.append(f"{name} mean W {w.mean():.2f} (df {df}) size {size:.3f}")
        record_acceptance(8, ok, "; ".join(parts))
        assert ok
