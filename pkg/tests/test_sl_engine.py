"""Engine tests: traces, Wronskians, spectra, splits, eigenfunctions."""

import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from s2m.errors import IncompatibleTracesError, OverflowIntegrationError
from s2m import sl_engine as se
from s2m.sl_engine import (
    TOL_EIG,
    ConstantPotential,
    DirichletProblem,
    PiecewiseLinearPotential,
    PolynomialPotential,
    TrigSumPotential,
    ZeroPotential,
    dirichlet_eigenvalues,
    eigenfunction_direct,
    eigenfunction_squared_at,
    free_spectra,
    integrate_solution,
    potential_from_json,
    simpson_integral,
    solution_value_at,
    split_eigenvalues,
    wronskian,
    wronskian_spread,
)

FREE_PI = DirichletProblem(0.0, math.pi, ZeroPotential())
FREE_01 = DirichletProblem(0.0, 1.0, ZeroPotential())
TRIG = DirichletProblem(0.0, 1.0, TrigSumPotential(((5.0, 2.0 * math.pi, 0.0),)))


# ---------------------------------------------------------------------------
# Potentials.
# ---------------------------------------------------------------------------


def test_potential_evaluate_and_exact_cell_averages():
    x = np.linspace(0.0, 1.0, 7)
    assert np.all(ZeroPotential().evaluate(x) == 0.0)
    assert np.all(ConstantPotential(2.5).evaluate(x) == 2.5)
    poly = PolynomialPotential((1.0, -2.0, 3.0))
    assert poly.evaluate(np.array([2.0]))[0] == pytest.approx(1.0 - 4.0 + 12.0)
    trig = TrigSumPotential(((2.0, 3.0, 0.5),))
    assert trig.evaluate(np.array([0.7]))[0] == pytest.approx(2.0 * math.cos(3.0 * 0.7 + 0.5))
    # exact averages: int of x^2 over [0.2, 0.3] is (0.027-0.008)/3 / 0.1
    prob = DirichletProblem(0.0, 1.0, PolynomialPotential((0.0, 0.0, 1.0)))
    avg = prob.cell_averages(10)
    assert avg[2] == pytest.approx((0.3**3 - 0.2**3) / 3.0 / 0.1, rel=1e-14)


def test_piecewise_linear_exact_averages_and_validation():
    pw = PiecewiseLinearPotential((0.0, 0.3, 1.0), (1.0, -2.0, 4.0))
    prob = DirichletProblem(0.0, 1.0, pw)
    avg = prob.cell_averages(10)
    # cell (0.3, 0.4): V(0.3) = -2, slope 6/0.7, mean = -2 + (6/0.7)*0.05 = -11/7
    assert avg[3] == pytest.approx(-11.0 / 7.0, rel=1e-13)
    with pytest.raises(ValueError):
        PiecewiseLinearPotential((0.0, 0.0, 1.0), (1.0, 2.0, 3.0))
    with pytest.raises(ValueError):
        DirichletProblem(0.0, 2.0, pw)  # knots stop at 1


def test_potential_json_roundtrip():
    pots = [
        ZeroPotential(),
        ConstantPotential(-1.5),
        PolynomialPotential((0.5, 1.0)),
        TrigSumPotential(((1.0, 2.0, 0.1), (0.5, 7.0, -0.3))),
        PiecewiseLinearPotential((0.0, 0.5, 1.0), (0.0, 1.0, -1.0)),
    ]
    x = np.linspace(0.0, 1.0, 11)
    for pot in pots:
        back = potential_from_json(pot.to_json())
        assert np.allclose(back.evaluate(x), pot.evaluate(x), atol=0.0)
    with pytest.raises(ValueError):
        potential_from_json({"type": "mystery"})


def test_problem_validation():
    with pytest.raises(ValueError):
        DirichletProblem(1.0, 0.0, ZeroPotential())
    with pytest.raises(ValueError):
        FREE_01.restricted(1.5)
    with pytest.raises(ValueError):
        integrate_solution(FREE_01, 1.0, grid_size=32)
    with pytest.raises(ValueError):
        integrate_solution(FREE_01, math.inf)
    with pytest.raises(ValueError):
        integrate_solution(FREE_01, 1.0, anchor="c")
    with pytest.raises(ValueError):
        dirichlet_eigenvalues(FREE_01, 0)


# ---------------------------------------------------------------------------
# Solution traces.
# ---------------------------------------------------------------------------


def test_trace_free_sine_closed_form():
    tr = integrate_solution(FREE_PI, 1.0, "a")
    assert np.max(np.abs(tr.values - np.sin(tr.grid))) <= 1e-8
    assert np.max(np.abs(tr.derivatives - np.cos(tr.grid))) <= 1e-8


def test_trace_anchor_values_exact():
    ta = integrate_solution(FREE_01, 3.0, "a", 128)
    assert ta.values[0] == 0.0 and ta.derivatives[0] == 1.0
    tb = integrate_solution(FREE_01, 3.0, "b", 128)
    assert tb.values[-1] == 0.0 and tb.derivatives[-1] == 1.0


def test_trace_right_anchor_hyperbolic_closed_form():
    tr = integrate_solution(FREE_01, -1.0, "b", 512)
    exact = -np.sinh(1.0 - tr.grid)
    assert np.max(np.abs(tr.values - exact)) <= 1e-10
    assert np.max(np.abs(tr.derivatives - np.cosh(1.0 - tr.grid))) <= 1e-10


def test_trace_grid_refinement_oracle():
    prob = DirichletProblem(0.0, 1.0, PolynomialPotential((0.0, 1.0)))
    coarse = integrate_solution(prob, 0.0, "a", 256)
    fine = integrate_solution(prob, 0.0, "a", 1024)
    assert np.max(np.abs(coarse.values - fine.values[::4])) <= 1e-7


def test_trace_second_difference_residual():
    prob = TRIG
    z = 7.0
    tr = integrate_solution(prob, z, "a", 1024)
    h = tr.h
    psi = tr.values
    v = prob.v_eval(tr.grid)
    d2 = (psi[:-2] - 2.0 * psi[1:-1] + psi[2:]) / h**2
    resid = d2 - (v[1:-1] - z) * psi[1:-1]
    scale = np.max(np.abs(psi)) * (1.0 + np.max(np.abs(v - z)) ** 2)
    assert np.max(np.abs(resid)) <= h**2 * scale


def test_trace_overflow_raises():
    with pytest.raises(OverflowIntegrationError):
        integrate_solution(FREE_01, -1e7, "a", 512)


def test_wronskian_antisymmetry_and_constancy():
    f = integrate_solution(FREE_PI, 0.5, "a", 256)
    g = integrate_solution(FREE_PI, 0.5, "b", 256)
    assert wronskian(f, f, f.grid[10]) == 0.0
    w_mid = wronskian(g, f, f.grid[128])
    assert wronskian_spread(g, f) <= 1e-8 * abs(w_mid)
    # at an eigenvalue the two solutions are dependent: W vanishes
    fa = integrate_solution(FREE_PI, 1.0, "a", 256)
    fb = integrate_solution(FREE_PI, 1.0, "b", 256)
    assert abs(wronskian(fb, fa, fa.grid[77])) <= 1e-8


def test_wronskian_compatibility_errors():
    f = integrate_solution(FREE_PI, 0.5, "a", 256)
    g = integrate_solution(FREE_PI, 0.7, "b", 256)
    with pytest.raises(IncompatibleTracesError):
        wronskian(f, g, f.grid[3])
    g2 = integrate_solution(FREE_PI, 0.5, "b", 128)
    with pytest.raises(IncompatibleTracesError):
        wronskian_spread(f, g2)
    with pytest.raises(ValueError):
        wronskian(f, integrate_solution(FREE_PI, 0.5, "b", 256), 0.1234567)


# ---------------------------------------------------------------------------
# Spectra.
# ---------------------------------------------------------------------------


def test_free_spectrum_squares():
    spec = dirichlet_eigenvalues(FREE_PI, 5)
    assert spec.values == pytest.approx([1.0, 4.0, 9.0, 16.0, 25.0], rel=1e-11)
    assert np.max(spec.residuals) <= TOL_EIG


def test_constant_potential_shifts_spectrum():
    base = dirichlet_eigenvalues(FREE_PI, 5).values
    shifted = dirichlet_eigenvalues(
        DirichletProblem(0.0, math.pi, ConstantPotential(3.25)), 5
    ).values
    assert shifted == pytest.approx(base + 3.25, abs=1e-9)


def test_shift_field_covariance():
    base = dirichlet_eigenvalues(TRIG, 30).values
    import dataclasses

    shifted_prob = dataclasses.replace(TRIG, shift=2.5)
    shifted = dirichlet_eigenvalues(shifted_prob, 30).values
    assert np.max(np.abs(shifted - base - 2.5)) <= 1e-9


def test_linear_potential_matches_finite_difference_oracle():
    prob = DirichletProblem(0.0, 1.0, PolynomialPotential((0.0, 1.0)))
    spec = dirichlet_eigenvalues(prob, 8)
    n = 20000
    h = 1.0 / (n + 1)
    x = h * np.arange(1, n + 1)
    diag = 2.0 / h**2 + x
    off = np.full(n - 1, -1.0 / h**2)
    oracle = scipy.linalg.eigvalsh_tridiagonal(diag, off, select="i", select_range=(0, 7))
    assert np.max(np.abs(spec.values - oracle) / np.abs(oracle)) <= 1e-6


def test_spectrum_certificates_present():
    spec = dirichlet_eigenvalues(TRIG, 40)
    assert spec.residuals.shape == (40,)
    assert np.max(spec.residuals) <= TOL_EIG
    assert np.all(np.diff(spec.values) > 0.0)


def test_spectrum_cache_slices():
    se.clear_spectrum_cache()
    full = dirichlet_eigenvalues(TRIG, 12)
    part = dirichlet_eigenvalues(TRIG, 7)
    assert np.array_equal(part.values, full.values[:7])


def test_weyl_asymptotics_guard():
    spec = dirichlet_eigenvalues(TRIG, 200)
    k = np.arange(1, 201, dtype=np.float64)
    dev = np.abs(np.sqrt(spec.values) - k * math.pi / TRIG.length)
    fit = np.max((k * dev)[99:])
    c = max(1.0, 3.0 * fit)
    assert np.all(dev <= c / k)


def test_split_symmetric_free_multiplicity_two():
    sp = split_eigenvalues(FREE_01, 0.5, 8)
    assert np.all(sp.multiplicities == 2)
    assert sp.tags == ("both",) * 4
    expect = (2.0 * np.arange(1, 5) * math.pi) ** 2
    assert sp.values == pytest.approx(expect, rel=1e-10)


def test_split_third_point_union():
    sp = split_eigenvalues(FREE_01, 1.0 / 3.0, 12)
    left = (3.0 * np.arange(1, 9) * math.pi) ** 2
    right = (1.5 * np.arange(1, 12) * math.pi) ** 2
    merged = []
    mult = []
    li = ri = 0
    while sum(mult) < 12:
        if li < left.size and abs(left[li] - right[ri]) <= 1e-6 * left[li]:
            merged.append(right[ri])
            mult.append(2)
            li += 1
            ri += 1
        elif li < left.size and left[li] < right[ri]:
            merged.append(left[li])
            mult.append(1)
            li += 1
        else:
            merged.append(right[ri])
            mult.append(1)
            ri += 1
    assert sp.values == pytest.approx(np.asarray(merged), rel=1e-9)
    assert list(sp.multiplicities) == mult


def test_split_never_splits_a_pair():
    sp = split_eigenvalues(FREE_01, 0.5, 3)
    # requested 3 lands inside the second coincident pair: keep it whole
    assert sp.total_multiplicity() == 4
    assert list(sp.multiplicities) == [2, 2]


def test_split_interlaces_full_spectrum():
    for prob in (TRIG, DirichletProblem(0.0, 1.0, PiecewiseLinearPotential((0.0, 0.4, 1.0), (2.0, -1.0, 0.5)))):
        full = dirichlet_eigenvalues(prob, 41).values
        sp = split_eigenvalues(prob, 0.31, 40)
        ev, _ = sp.expanded()
        for i in range(40):
            assert full[i] <= ev[i] + 1e-9
            assert ev[i] <= full[i + 1] + 1e-9


def test_split_domain_error():
    with pytest.raises(ValueError):
        split_eigenvalues(FREE_01, 1.5, 4)


def test_split_side_values_partition():
    sp = split_eigenvalues(TRIG, 0.37, 25)
    ev, sides = sp.expanded()
    assert len(ev) == sp.total_multiplicity() == 25
    left = sp.side_values("left")
    right = sp.side_values("right")
    assert left.size + right.size == 25
    assert np.all(np.diff(left) > 0) and np.all(np.diff(right) > 0)


# ---------------------------------------------------------------------------
# Eigenfunctions and pointwise evaluation.
# ---------------------------------------------------------------------------


def test_eigenfunction_free_closed_form():
    ef = eigenfunction_direct(FREE_01, 3)
    exact = math.sqrt(2.0) * np.sin(3.0 * math.pi * ef.trace.grid)
    assert np.max(np.abs(ef.trace.values - exact)) <= 1e-8
    assert ef.lam == pytest.approx(9.0 * math.pi**2, rel=1e-11)
    assert ef.trace.derivatives[0] > 0.0


def test_eigenfunction_node_at_midpoint():
    ef = eigenfunction_direct(FREE_01, 2)
    mid = ef.trace.grid.size // 2
    assert ef.trace.grid[mid] == 0.5
    assert abs(ef.trace.values[mid]) <= 1e-8


def test_eigenfunction_normalized_and_residual():
    prob = DirichletProblem(0.0, 1.0, TrigSumPotential(((1.0, 2.0 * math.pi, 0.0),)))
    ef = eigenfunction_direct(prob, 1, 2048)
    norm = simpson_integral(ef.trace.values**2, ef.trace.h)
    assert norm == pytest.approx(1.0, abs=1e-8)
    h = ef.trace.h
    psi = ef.trace.values
    v = prob.v_eval(ef.trace.grid)
    d2 = (psi[:-2] - 2.0 * psi[1:-1] + psi[2:]) / h**2
    resid = d2 - (v[1:-1] - ef.lam) * psi[1:-1]
    assert np.max(np.abs(resid)) <= h**2 * np.max(np.abs(psi)) * (1.0 + ef.lam**2)


def test_solution_value_matches_grid_and_closed_form():
    tr = integrate_solution(FREE_PI, 1.0, "a", 512)
    psi, dpsi = solution_value_at(FREE_PI, 1.0, tr.grid[100], "a", 512)
    assert psi == pytest.approx(tr.values[100], abs=1e-12)
    x = 1.2345678
    psi, dpsi = solution_value_at(FREE_PI, 1.0, x, "a", 512)
    assert psi == pytest.approx(math.sin(x), abs=1e-9)
    assert dpsi == pytest.approx(math.cos(x), abs=1e-9)
    # right-anchored fractional evaluation
    psi, dpsi = solution_value_at(FREE_01, -1.0, 0.333, "b", 512)
    assert psi == pytest.approx(-math.sinh(1.0 - 0.333), abs=1e-9)
    assert dpsi == pytest.approx(math.cosh(1.0 - 0.333), abs=1e-9)


def test_eigenfunction_squared_at_off_grid():
    x = 0.3701
    got = eigenfunction_squared_at(FREE_01, 3, x)
    assert got == pytest.approx(2.0 * math.sin(3.0 * math.pi * x) ** 2, abs=1e-8)


# ---------------------------------------------------------------------------
# Closed-form free spectra.
# ---------------------------------------------------------------------------


def test_free_spectra_full_interval():
    full, _ = free_spectra(0.0, math.pi, 1.0, 4)
    assert full.values == pytest.approx([1.0, 4.0, 9.0, 16.0], rel=1e-15)


def test_free_spectra_symmetric_split():
    _, sp = free_spectra(0.0, 1.0, 0.5, 8)
    assert np.all(sp.multiplicities == 2)
    assert sp.values == pytest.approx(((2.0 * np.arange(1, 5) * math.pi) ** 2), rel=1e-15)


def test_free_spectra_halves_match_unit_interval():
    full_unit, _ = free_spectra(0.0, 1.0, 0.5, 6)
    _, sp = free_spectra(0.0, 2.0, 1.0, 12)
    ev, _ = sp.expanded()
    assert ev[::2] == pytest.approx(full_unit.values, rel=1e-15)
    assert ev[1::2] == pytest.approx(full_unit.values, rel=1e-15)


def test_free_spectra_domain_checks():
    with pytest.raises(ValueError):
        free_spectra(0.0, 1.0, 0.0, 3)
    with pytest.raises(ValueError):
        free_spectra(0.0, 1.0, 0.5, 0)


# ---------------------------------------------------------------------------
# Property-based checks across potential variants.
# ---------------------------------------------------------------------------


def _potential_from_draw(kind, params):
    if kind == 0:
        return ZeroPotential()
    if kind == 1:
        return ConstantPotential(params[0])
    if kind == 2:
        return PolynomialPotential(tuple(params[:3]))
    if kind == 3:
        return TrigSumPotential(((params[0], 2.0 + abs(params[1]), params[2]),))
    xs = (0.0, 0.5, 1.0)
    return PiecewiseLinearPotential(xs, tuple(params[:3]))


finite = st.floats(min_value=-4.0, max_value=4.0, allow_nan=False)


@settings(max_examples=12, deadline=None)
@given(
    kind=st.integers(min_value=0, max_value=4),
    params=st.tuples(finite, finite, finite),
    x0=st.floats(min_value=0.2, max_value=0.8),
)
def test_split_interlacing_property(kind, params, x0):
    prob = DirichletProblem(0.0, 1.0, _potential_from_draw(kind, params))
    full = dirichlet_eigenvalues(prob, 7, grid_size=512).values
    sp = split_eigenvalues(prob, x0, 6, grid_size=512)
    ev, _ = sp.expanded()
    for i in range(6):
        assert full[i] <= ev[i] + 1e-9
        assert ev[i] <= full[i + 1] + 1e-9


@settings(max_examples=10, deadline=None)
@given(
    kind=st.integers(min_value=0, max_value=4),
    params=st.tuples(finite, finite, finite),
    c=st.floats(min_value=-3.0, max_value=3.0),
)
def test_shift_covariance_property(kind, params, c):
    import dataclasses

    prob = DirichletProblem(0.0, 1.0, _potential_from_draw(kind, params))
    base = dirichlet_eigenvalues(prob, 5, grid_size=512).values
    shifted = dirichlet_eigenvalues(dataclasses.replace(prob, shift=c), 5, grid_size=512).values
    assert np.max(np.abs(shifted - base - c)) <= 1e-9


def test_backends_agree():
    se.clear_spectrum_cache()
    a = dirichlet_eigenvalues(TRIG, 25, force_numpy=False).values
    b = dirichlet_eigenvalues(TRIG, 25, force_numpy=True).values
    assert np.max(np.abs(a - b)) <= 1e-9 * np.maximum(1.0, np.abs(a)).max()
    ta = integrate_solution(TRIG, 5.0, "a", 256, force_numpy=False)
    tb = integrate_solution(TRIG, 5.0, "a", 256, force_numpy=True)
    assert np.array_equal(ta.values, tb.values)
