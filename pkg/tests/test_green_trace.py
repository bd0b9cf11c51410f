"""Green's function, Krein decoupling, trace identity, and SSF tests."""

import dataclasses
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from s2m.errors import PoleProximityError, WindowMismatchError
from s2m.green_trace import (
    StepFunction,
    _build_step,
    _equal_count_window,
    _green_plain,
    _green_scaled,
    green_diag,
    green_offdiag,
    green_residue,
    krein_check,
    krein_resolvent_residual,
    run_verification_suite,
    spectral_shift_function,
    ssf_resolvent_integral,
    trace_identity_residual,
)
from s2m.sl_engine import (
    DirichletProblem,
    PolynomialPotential,
    TrigSumPotential,
    ZeroPotential,
    dirichlet_eigenvalues,
    eigenfunction_squared_at,
    split_eigenvalues,
)

FREE_PI = DirichletProblem(0.0, math.pi, ZeroPotential())
FREE_01 = DirichletProblem(0.0, 1.0, ZeroPotential())
TRIG = DirichletProblem(0.0, 1.0, TrigSumPotential(((5.0, 2.0 * math.pi, 0.0),)))
LINEAR = DirichletProblem(0.0, 1.0, PolynomialPotential((0.0, 1.0)))


def free_green(z, x, xp, a=0.0, b=1.0):
    # G = sinh(kappa (x< - a)) sinh(kappa (b - x>)) / (kappa sinh(kappa (b-a)))
    kappa = math.sqrt(-z)
    lo, hi = min(x, xp), max(x, xp)
    return (
        math.sinh(kappa * (lo - a))
        * math.sinh(kappa * (b - hi))
        / (kappa * math.sinh(kappa * (b - a)))
    )


# ---------------------------------------------------------------------------
# Green's function values.
# ---------------------------------------------------------------------------


def test_offdiag_free_midpoint_closed_form():
    g = green_offdiag(FREE_PI, -1.0, math.pi / 2, math.pi / 2)
    exact = math.sinh(math.pi / 2) ** 2 / math.sinh(math.pi)
    assert g.value == pytest.approx(exact, rel=1e-12)
    assert g.wronskian == pytest.approx(-math.sinh(math.pi), rel=1e-12)
    assert g.pole_distance == pytest.approx(2.0, rel=1e-9)


def test_offdiag_free_generic_points():
    for z, x, xp in ((-2.0, 0.7, 2.2), (-0.5, 1.9, 0.4), (-11.0, 0.1, 3.0)):
        g = green_offdiag(FREE_PI, z, x, xp)
        assert g.value == pytest.approx(free_green(z, x, xp, 0.0, math.pi), rel=1e-10)


def test_offdiag_boundary_zeros():
    assert green_offdiag(FREE_PI, -1.0, 0.0, 1.0).value == 0.0
    assert green_offdiag(FREE_PI, -1.0, 1.0, math.pi).value == 0.0
    assert green_offdiag(TRIG, -3.0, 0.0, 0.5).value == 0.0


def test_offdiag_symmetry_exact():
    for prob in (FREE_PI, TRIG):
        b = prob.b
        v1 = green_offdiag(prob, -2.5, 0.3, 0.7 * b).value
        v2 = green_offdiag(prob, -2.5, 0.7 * b, 0.3).value
        assert v1 == v2


def test_offdiag_input_validation():
    with pytest.raises(ValueError):
        green_offdiag(FREE_01, -1.0, -0.2, 0.5)
    with pytest.raises(ValueError):
        green_offdiag(FREE_01, math.inf, 0.2, 0.5)


def test_diag_free_value_at_zero_energy():
    # (x0 - a)(b - x0)/(b - a) at z = 0
    assert green_diag(FREE_01, 0.0, 0.5).value == pytest.approx(0.25, abs=1e-13)
    assert green_diag(FREE_01, 0.0, 0.3).value == pytest.approx(0.21, rel=1e-11)


def test_diag_deep_z_asymptote():
    # sqrt(|z|) G(z, x0, x0) -> 1/2 as z -> -inf (interior x0)
    for z in (-1e4, -1e6):
        g = green_diag(FREE_01, z, 0.5)
        assert math.sqrt(-z) * g.value == pytest.approx(0.5, rel=1e-2)
    g = green_diag(TRIG, -1e6, 0.37)
    assert math.sqrt(1e6) * g.value == pytest.approx(0.5, rel=1e-2)


def test_deep_wronskian_field():
    g = green_diag(FREE_01, -1e4, 0.5)
    assert g.wronskian == pytest.approx(-math.sinh(100.0) / 100.0, rel=1e-8)
    # beyond the double range the signed overflow is reported, value stays finite
    g = green_diag(FREE_01, -4e6, 0.5)
    assert g.wronskian == -math.inf
    assert math.isfinite(g.value)
    assert math.sqrt(4e6) * g.value == pytest.approx(0.5, rel=1e-2)


def test_scaled_and_plain_paths_agree_at_the_seam():
    # sqrt(880) * 1 = 29.7 sits just under the switch; run both paths directly
    for prob, rel in ((FREE_01, 1e-8), (TRIG, 1e-7)):
        vp, wp = _green_plain(prob, -880.0, 0.3, 0.6, 4096, False)
        vs, ws = _green_scaled(prob, -880.0, 0.3, 0.6, 4096, False)
        assert vs == pytest.approx(vp, rel=rel)
        assert ws == pytest.approx(wp, rel=rel)


def test_pole_proximity_rejected():
    lam1 = float(dirichlet_eigenvalues(TRIG, 1).values[0])
    with pytest.raises(PoleProximityError) as exc:
        green_diag(TRIG, lam1 + 1e-9, 0.4)
    assert exc.value.nearest == pytest.approx(lam1)


def test_residue_free_closed_forms():
    for k, x0 in ((1, 0.5), (1, 0.3), (3, 0.3)):
        r = green_residue(FREE_01, k, x0)
        assert r == pytest.approx(2.0 * math.sin(k * math.pi * x0) ** 2, abs=1e-9)
    # node: lam_2 is also a split eigenvalue at x0 = 1/2, residue vanishes
    assert abs(green_residue(FREE_01, 2, 0.5)) <= 1e-12


def test_residue_matches_direct_eigenfunction():
    for k in (1, 2, 3):
        r = green_residue(TRIG, k, 0.37)
        o = eigenfunction_squared_at(TRIG, k, 0.37)
        assert r == pytest.approx(o, rel=1e-6)


# ---------------------------------------------------------------------------
# Krein decoupling formula.
# ---------------------------------------------------------------------------


def test_krein_straddling_points_cancel():
    for prob, x0 in ((FREE_01, 0.5), (TRIG, 0.37)):
        chk = krein_check(prob, x0, -5.0, 0.5 * x0, x0 + 0.5 * (1.0 - x0))
        assert chk.g_split == 0.0
        assert chk.residual <= 1e-9 * chk.scale


def test_krein_symmetric_closed_form_point():
    chk = krein_check(FREE_01, 0.5, -5.0, 0.25, 0.25)
    # independent half-interval value: free Green's function on (0, 0.5)
    assert chk.g_split == pytest.approx(free_green(-5.0, 0.25, 0.25, 0.0, 0.5), rel=1e-10)
    assert chk.residual <= 1e-9 * chk.scale


def test_krein_collapses_at_decoupling_point():
    for xp in (0.7, 0.2):
        chk = krein_check(FREE_01, 0.5, -3.0, 0.5, xp)
        assert chk.g_split == 0.0
        assert chk.residual <= 1e-12 * chk.scale


def test_krein_grid_of_points():
    xs = np.linspace(0.1, 0.9, 5)
    for prob, x0 in ((LINEAR, 0.4), (TRIG, 0.5)):
        for z in (-2.0, -9.0, -33.0):
            for x in xs:
                for xp in xs:
                    r = krein_resolvent_residual(prob, x0, z, float(x), float(xp))
                    assert r <= 1e-8


def test_krein_requires_interior_x0():
    with pytest.raises(ValueError):
        krein_check(FREE_01, 1.0, -5.0, 0.3, 0.6)


def test_krein_z_near_split_spectrum_rejected():
    # z on the split spectrum must be rejected even for straddling points
    mu1 = float(dirichlet_eigenvalues(FREE_01.restricted(0.5)[0], 1).values[0])
    with pytest.raises(PoleProximityError):
        krein_check(FREE_01, 0.5, mu1, 0.25, 0.75)


# ---------------------------------------------------------------------------
# Trace identity.
# ---------------------------------------------------------------------------


def test_trace_identity_free_within_budget():
    for z in (-5.0, -20.0):
        t = trace_identity_residual(FREE_01, 0.5, z, 2000)
        assert t.residual <= t.tail_estimate + t.fd_budget
        assert t.residual <= 1e-3 * abs(t.lhs)


def test_trace_identity_rhs_against_analytic_derivative():
    # -(d/dz) ln G for the free symmetric diagonal in closed form
    kappa = math.sqrt(5.0)
    dlng_dkappa = (
        math.cosh(kappa / 2) / math.sinh(kappa / 2) - 1.0 / kappa - math.cosh(kappa) / math.sinh(kappa)
    )
    rhs_exact = dlng_dkappa / (2.0 * kappa)
    t = trace_identity_residual(FREE_01, 0.5, -5.0, 500)
    assert t.rhs == pytest.approx(rhs_exact, abs=10.0 * t.fd_budget + 1e-12)


def test_trace_residual_decreases_in_K():
    res = [trace_identity_residual(FREE_01, 0.5, -5.0, K).residual for K in (250, 500, 1000, 2000)]
    assert all(r1 > r2 for r1, r2 in zip(res, res[1:]))


def test_trace_identity_nontrivial_potential():
    t = trace_identity_residual(TRIG, 0.37, -6.0, 800)
    assert t.residual <= t.tail_estimate + t.fd_budget + 1e-9


def test_trace_shift_covariance():
    t1 = trace_identity_residual(TRIG, 0.37, -5.0, 400)
    t2 = trace_identity_residual(dataclasses.replace(TRIG, shift=3.0), 0.37, -2.0, 400)
    assert abs(t1.residual - t2.residual) <= 1e-9


def test_trace_preconditions():
    with pytest.raises(ValueError):
        trace_identity_residual(FREE_01, 0.5, -5.0, 7)
    with pytest.raises(ValueError):
        trace_identity_residual(FREE_01, 0.5, 9.5, 100)  # above lam_1 - 1


# ---------------------------------------------------------------------------
# Spectral shift function.
# ---------------------------------------------------------------------------


def test_step_function_validation():
    with pytest.raises(ValueError):
        StepFunction(np.array([1.0, 0.5]), np.array([1, -1]))
    with pytest.raises(ValueError):
        StepFunction(np.array([0.5, 1.0]), np.array([1, 2]))
    with pytest.raises(ValueError):
        StepFunction(np.array([1.0, 2.0, 3.0]), np.array([1, 1, 1]))


def test_ssf_free_symmetric_structure():
    full = dirichlet_eigenvalues(FREE_01, 60)
    split = split_eigenvalues(FREE_01, 0.5, 60)
    step = spectral_shift_function(full, split)
    assert step.e0 == pytest.approx(math.pi**2, rel=1e-10)
    # zero below the first eigenvalue, values in {0, 1} away from jumps
    assert step.value(5.0) == 0
    assert step.value(-100.0) == 0
    probes = np.linspace(10.0, float(step.locations[-1]) - 5.0, 400)
    vals = step.values(probes)
    assert set(int(v) for v in vals) <= {0, 1}
    # returns to 0 after each pole-zero pair: midpoints between (2j pi)^2 and (2j+1 pi)^2
    for j in (1, 2, 3):
        inside = 0.5 * ((2 * j * math.pi) ** 2 + ((2 * j + 1) * math.pi) ** 2)
        assert step.value(inside) == 0
    ps = step.partial_sums()
    assert ps.min() >= -2 and ps.max() <= 2


def test_ssf_jumps_multiplicity_weighted():
    full = dirichlet_eigenvalues(FREE_01, 20)
    split = split_eigenvalues(FREE_01, 0.5, 20)
    step = spectral_shift_function(full, split)
    minus = step.locations[step.signs == -1]
    # split eigenvalues (2j pi)^2 enter twice each
    assert minus.size >= 4
    assert minus[0] == pytest.approx(minus[1], rel=1e-9)
    assert minus[0] == pytest.approx(4.0 * math.pi**2, rel=1e-9)


def test_ssf_integral_matches_trace_sum_exactly():
    for prob, x0 in ((FREE_01, 0.5), (TRIG, 0.37)):
        full = dirichlet_eigenvalues(prob, 80)
        split = split_eigenvalues(prob, x0, 80)
        split_vals, _ = split.expanded()
        _, i, j = _equal_count_window(full.values, split_vals)
        assert i == j and i >= 40
        step = _build_step(full.values[:i], split_vals[:j])
        z = -4.0
        integral = ssf_resolvent_integral(step, z)
        trace_sum = float(
            np.sum(1.0 / (full.values[:i] - z)) - np.sum(1.0 / (split_vals[:j] - z))
        )
        assert integral == pytest.approx(trace_sum, abs=1e-13 * max(1.0, abs(integral)))
        assert integral >= 0.0


def test_ssf_integral_z_precondition():
    step = StepFunction(np.array([1.0, 2.0]), np.array([1, -1]))
    with pytest.raises(ValueError):
        ssf_resolvent_integral(step, 1.5)
    assert ssf_resolvent_integral(step, 0.0) == pytest.approx(1.0 - 0.5)


def test_ssf_window_mismatch_rejected():
    full = dirichlet_eigenvalues(FREE_01, 40)
    split = split_eigenvalues(FREE_01, 0.5, 40)
    scaled = dataclasses.replace(full, values=full.values * 1e-3)
    with pytest.raises(WindowMismatchError):
        spectral_shift_function(scaled, split)


def test_ssf_asymmetric_split_point():
    full = dirichlet_eigenvalues(FREE_01, 60)
    split = split_eigenvalues(FREE_01, 1.0 / 3.0, 60)
    step = spectral_shift_function(full, split)
    assert step.e0 == pytest.approx(math.pi**2, rel=1e-10)
    ps = step.partial_sums()
    assert ps.min() >= -2 and ps.max() <= 2


# ---------------------------------------------------------------------------
# Verification suite.
# ---------------------------------------------------------------------------


def test_verification_suite_passes_and_serializes():
    for prob, x0 in ((FREE_01, 0.5), (TRIG, 0.37)):
        rows = run_verification_suite(prob, x0, K=200)
        names = [r["check"] for r in rows]
        assert "trace_identity" in names and "ssf_resolvent_integral" in names
        assert "residue_positivity" in names and "herglotz_monotone" in names
        for row in rows:
            assert set(row) == {"check", "params", "lhs", "rhs", "residual", "budget", "pass"}
            assert row["pass"], f"{row['check']} residual {row['residual']} > {row['budget']}"
        json.dumps(rows)  # must be machine-readable as-is


def test_herglotz_monotonicity_direct():
    zs = np.linspace(-40.0, 5.0, 24)
    vals = [green_diag(TRIG, float(z), 0.37).value for z in zs]
    assert all(b > a for a, b in zip(vals, vals[1:]))


@settings(max_examples=12, deadline=None)
@given(
    x=st.floats(0.05, 0.95),
    xp=st.floats(0.05, 0.95),
    z=st.floats(-60.0, -0.5),
)
def test_green_symmetry_and_positivity_property(x, xp, z):
    gv = green_offdiag(FREE_01, z, x, xp)
    assert gv.value == green_offdiag(FREE_01, z, xp, x).value
    assert gv.value > 0.0
    assert gv.value == pytest.approx(free_green(z, x, xp), rel=1e-9)
