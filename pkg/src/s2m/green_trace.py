"""Green's function engine and operator-identity verifiers.

The Dirichlet Green's function on (a, b) is assembled from the two
boundary-anchored solutions,

    G(z, x, x') = psi_a(z, min) psi_b(z, max) / W(psi_b, psi_a),

and feeds four independent cross-checks:

* the decoupling resolvent formula relating G to the split-interval
  Green's function through the rank-one correction at x0,
* the trace identity  sum_k [(lam_k^split - z)^-1 - (lam_k - z)^-1]
  = -(d/dz) ln G(z, x0, x0),
* the spectral shift step function built from the two spectra, whose
  resolvent-weighted integral reproduces the trace sum exactly, and
* pole-residue extraction (lam_k - z) G -> e_k(x0)^2.

The split Green's functions come from independent half-interval solves,
never from the decoupling formula itself, so the residual checks compare
two genuinely different computations.

For strongly negative z (sqrt(|z|) (b-a) > 30) evaluation switches to
log-scaled cell-exact propagation; diagonal values stay finite because the
carried exponents cancel exactly in the product/Wronskian ratio.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import GuardError, WindowMismatchError, PoleProximityError
from .logutil import signed_exp
from .sl_engine import (
    DEFAULT_GRID,
    DirichletProblem,
    Spectrum,
    SplitSpectrum,
    dirichlet_eigenvalues,
    eigenfunction_squared_at,
    solution_value_at,
    split_eigenvalues,
)

TOL_POLE_FACTOR = 1e-6     # z must be farther than this times the local gap
SCALED_Z_CUT = 30.0        # sqrt(|z|)*(b-a) beyond which the log form is used
FD_STEP_FACTOR = 1e-4      # central-difference step: this times max(1, |z|)
MIN_TRACE_K = 8


@dataclass(frozen=True)
class GreenEvaluation:
    z: float
    x: float
    x_prime: float
    value: float
    wronskian: float
    pole_distance: float


@dataclass(frozen=True)
class KreinCheck:
    z: float
    x: float
    x_prime: float
    g_split: float
    rhs: float
    residual: float
    scale: float


@dataclass(frozen=True)
class TraceIdentityResult:
    z: float
    K: int
    lhs: float
    rhs: float
    residual: float
    tail_estimate: float
    fd_budget: float


def _pole_guard(problem, z, grid_size, force_numpy):
    """Distance from z to the Dirichlet spectrum, rejecting near-pole z.

    Enumerates eigenvalues past z (count seeded by the leading-order
    eigenvalue growth law) and raises PoleProximityError when the distance
    falls below TOL_POLE_FACTOR times the local eigenvalue gap.
    """
    length = problem.length
    vbar = float(np.mean(problem.cell_averages(64)))
    k_est = max(3, int(math.sqrt(max(z - vbar, 0.0)) * length / math.pi) + 2)
    for _ in range(16):
        spec = dirichlet_eigenvalues(problem, k_est, grid_size, force_numpy)
        if spec.values[-1] > z:
            break
        k_est = math.ceil(k_est * 1.5) + 2
    lam = spec.values
    i = int(np.argmin(np.abs(lam - z)))
    dist = float(abs(lam[i] - z))
    gaps = []
    if i > 0:
        gaps.append(lam[i] - lam[i - 1])
    if i + 1 < lam.size:
        gaps.append(lam[i + 1] - lam[i])
    gap = float(min(gaps))
    if dist <= TOL_POLE_FACTOR * gap:
        raise PoleProximityError(z, float(lam[i]))
    return dist


def _green_plain(problem, z, xlo, xhi, grid_size, force_numpy):
    pa, da = solution_value_at(problem, z, xlo, "a", grid_size, force_numpy)
    qb, db = solution_value_at(problem, z, xlo, "b", grid_size, force_numpy)
    w = qb * da - db * pa
    pb, _ = solution_value_at(problem, z, xhi, "b", grid_size, force_numpy)
    return pa * pb / w, w


def _green_scaled(problem, z, xlo, xhi, grid_size, force_numpy):
    """Log-scaled evaluation for strongly negative z.

    Each propagated solution returns a mantissa pair and a log scale.  With
    u the reversed-coordinate solution (psi_b(x) = -u(b - x)), the ratio

        G = pa * pv / (pu * da + du * pa) * exp(s_v - s_u)

    carries the exponent s_v - s_u <= 0 (xhi is closer to b), so the value
    never overflows; all mantissa terms in the denominator share one sign.
    """
    n = int(grid_size)
    h = problem.length / n
    vavg = problem.cell_averages(n)
    vrev = vavg[::-1].copy()

    def part(point, start_anchor):
        if start_anchor == "a":
            span = point - problem.a
            seg = vavg
        else:
            span = problem.b - point
            seg = vrev
        nfull = min(int(math.floor(span / h + 1e-12)), n)
        hlast = span - nfull * h
        if hlast < 1e-13 * max(1.0, abs(span)):
            hlast = 0.0
            vlast = 0.0
        else:
            if start_anchor == "a":
                lo_x = problem.a + nfull * h
                hi_x = lo_x + hlast
            else:
                hi_x = problem.b - nfull * h
                lo_x = hi_x - hlast
            anti = problem.potential.antiderivative(np.array([lo_x, hi_x]))
            vlast = float((anti[1] - anti[0]) / (hi_x - lo_x)) + problem.shift
        return kernels.propagate_value(seg, h, z, nfull, vlast, hlast, force_numpy=force_numpy)

    pa, da, sa = part(xlo, "a")
    pu, du, su = part(xlo, "b")
    pv, _, sv = part(xhi, "b")
    denom = pu * da + du * pa
    value = pa * pv / denom * math.exp(min(sv - su, 0.0))
    if denom == 0.0:
        w = 0.0
    else:
        w = signed_exp(-math.copysign(1.0, denom), math.log(abs(denom)) + sa + su)
    return value, w


def green_offdiag(
    problem: DirichletProblem,
    z: float,
    x: float,
    x_prime: float,
    grid_size: int = DEFAULT_GRID,
    force_numpy: bool = False,
) -> GreenEvaluation:
    """G(z, x, x') for z off the spectrum; symmetric in (x, x')."""
    if not (problem.a <= x <= problem.b and problem.a <= x_prime <= problem.b):
        raise ValueError("x and x_prime must lie in [a, b]")
    if not math.isfinite(z):
        raise ValueError("z must be finite")
    dist = _pole_guard(problem, z, grid_size, force_numpy)
    xlo, xhi = sorted((x, x_prime))
    if math.sqrt(max(-z, 0.0)) * problem.length > SCALED_Z_CUT:
        value, w = _green_scaled(problem, z, xlo, xhi, grid_size, force_numpy)
    else:
        value, w = _green_plain(problem, z, xlo, xhi, grid_size, force_numpy)
    return GreenEvaluation(
        z=float(z), x=float(x), x_prime=float(x_prime),
        value=float(value), wronskian=float(w), pole_distance=dist,
    )


def green_diag(
    problem: DirichletProblem,
    z: float,
    x0: float,
    grid_size: int = DEFAULT_GRID,
    force_numpy: bool = False,
) -> GreenEvaluation:
    """Diagonal Green's value G(z, x0, x0)."""
    return green_offdiag(problem, z, x0, x0, grid_size, force_numpy)


def _wronskian_pole(problem, center, radius, x0, grid_size, force_numpy):
    """Zero of the boundary-solution Wronskian nearest center.

    This is where the evaluated Green's function actually diverges; it can
    sit a grid-discretization offset away from the certified eigenvalue, and
    that offset would otherwise be amplified by the 1/d residue approach.
    """

    def wf(z):
        pa, da = solution_value_at(problem, z, x0, "a", grid_size, force_numpy)
        qb, db = solution_value_at(problem, z, x0, "b", grid_size, force_numpy)
        return qb * da - db * pa

    z0, z1 = center - radius, center - 0.5 * radius
    f0, f1 = wf(z0), wf(z1)
    lo, hi = center - 0.4 * radius / 1e-3, center + 0.4 * radius / 1e-3
    for _ in range(60):
        if f1 == f0:
            break
        z2 = z1 - f1 * (z1 - z0) / (f1 - f0)
        z2 = min(max(z2, lo), hi)
        if abs(z2 - z1) <= 1e-14 * max(1.0, abs(z1)):
            return z2
        z0, f0, z1 = z1, f1, z2
        f1 = wf(z1)
    return z1


def green_residue(
    problem: DirichletProblem,
    k: int,
    x0: float,
    grid_size: int = DEFAULT_GRID,
    force_numpy: bool = False,
) -> float:
    """Limit of (lam_k - z) G(z, x0, x0) as z -> lam_k from below.

    Centered on the Wronskian zero (the evaluator's own pole), sampled on a
    geometric approach d, d/4, d/16, d/64 with d one thousandth of the
    local gap; three Richardson stages remove the O(d), O(d^2), O(d^3)
    contributions of the regular part, leaving the residue e_k(x0)^2 up
    to O(d^4).
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    lam = dirichlet_eigenvalues(problem, k + 1, grid_size, force_numpy).values
    gap = lam[k] - lam[k - 1]
    if k >= 2:
        gap = min(gap, lam[k - 1] - lam[k - 2])
    d0 = 1e-3 * float(gap)
    pole = _wronskian_pole(problem, float(lam[k - 1]), d0, x0, grid_size, force_numpy)
    vals = []
    for i in range(4):
        d = d0 * 4.0**-i
        g = green_diag(problem, float(pole - d), x0, grid_size, force_numpy)
        vals.append(d * g.value)
    for j in range(1, 4):
        f = 4.0**j
        vals = [(f * vals[i + 1] - vals[i]) / (f - 1.0) for i in range(len(vals) - 1)]
    return float(vals[0])


def krein_check(
    problem: DirichletProblem,
    x0: float,
    z: float,
    x: float,
    x_prime: float,
    grid_size: int = DEFAULT_GRID,
    force_numpy: bool = False,
) -> KreinCheck:
    """Decoupling formula residual with both sides computed independently.

    g_split comes from half-interval solves (zero when x, x' straddle x0
    or touch it); the right-hand side is G - G(.,x0) G(x0,.) / G(x0,x0)
    on the full interval.
    """
    if not problem.a < x0 < problem.b:
        raise ValueError(f"x0 must lie inside (a, b), got {x0}")
    left_problem, right_problem = problem.restricted(x0)
    # z must clear the split spectrum too, even when g_split is trivially 0
    _pole_guard(left_problem, z, grid_size, force_numpy)
    _pole_guard(right_problem, z, grid_size, force_numpy)
    if x == x0 or x_prime == x0 or (x - x0) * (x_prime - x0) < 0.0:
        g_split = 0.0
    elif x < x0:
        g_split = green_offdiag(left_problem, z, x, x_prime, grid_size, force_numpy).value
    else:
        g_split = green_offdiag(right_problem, z, x, x_prime, grid_size, force_numpy).value
    g_xx = green_offdiag(problem, z, x, x_prime, grid_size, force_numpy).value
    g_x0 = green_offdiag(problem, z, x, x0, grid_size, force_numpy).value
    g_0x = green_offdiag(problem, z, x0, x_prime, grid_size, force_numpy).value
    g_00 = green_diag(problem, z, x0, grid_size, force_numpy).value
    if abs(g_00) <= 1e-12 * max(1.0, abs(g_x0), abs(g_0x)):
        raise GuardError(
            f"diagonal Green's value {g_00!r} too close to zero at z={z!r}, x0={x0!r}"
        )
    rhs = g_xx - g_x0 * g_0x / g_00
    residual = abs(g_split - rhs)
    scale = max(1.0, abs(g_split), abs(rhs))
    return KreinCheck(
        z=float(z), x=float(x), x_prime=float(x_prime),
        g_split=float(g_split), rhs=float(rhs),
        residual=float(residual), scale=float(scale),
    )


def krein_resolvent_residual(
    problem: DirichletProblem,
    x0: float,
    z: float,
    x: float,
    x_prime: float,
    grid_size: int = DEFAULT_GRID,
    force_numpy: bool = False,
) -> float:
    return krein_check(problem, x0, z, x, x_prime, grid_size, force_numpy).residual


def trace_identity_residual(
    problem: DirichletProblem,
    x0: float,
    z: float,
    K: int,
    grid_size: int = DEFAULT_GRID,
    force_numpy: bool = False,
) -> TraceIdentityResult:
    """Truncated resolvent-trace difference against -(d/dz) ln G(z, x0, x0).

    lhs pairs the two spectra by sorted index (multiplicity expanded); rhs
    is a central difference with step FD_STEP_FACTOR * max(1, |z|).  The
    tail estimate K * max(last few |terms|) budgets the O(1/K) truncation
    error (the max survives alternating near-zero terms at coincidences);
    fd_budget bounds the difference error from a sampled third derivative
    plus the rounding floor.
    """
    if K < MIN_TRACE_K:
        raise ValueError(f"truncation K must be >= {MIN_TRACE_K}, got {K}")
    full = dirichlet_eigenvalues(problem, K, grid_size, force_numpy).values
    split = split_eigenvalues(problem, x0, K, grid_size, force_numpy)
    split_vals, _ = split.expanded()
    split_vals = split_vals[:K]
    if not z <= full[0] - 1.0:
        raise ValueError(f"z must sit below the spectra minus 1, got z={z}, lam_1={full[0]}")
    terms = 1.0 / (split_vals - z) - 1.0 / (full - z)
    lhs = float(np.sum(terms))
    tail = float(K * np.max(np.abs(terms[-4:])))
    h_z = FD_STEP_FACTOR * max(1.0, abs(z))
    zs = z + h_z * np.array([-2.0, -1.0, 1.0, 2.0])
    logs = np.array(
        [math.log(green_diag(problem, float(zz), x0, grid_size, force_numpy).value) for zz in zs]
    )
    rhs = -float((logs[2] - logs[1]) / (2.0 * h_z))
    d3 = float((-0.5 * logs[0] + logs[1] - logs[2] + 0.5 * logs[3]) / h_z**3)
    fd_budget = h_z**2 * abs(d3) / 3.0 + 8.0 * float(np.max(np.abs(logs))) * 2.2e-16 / h_z
    return TraceIdentityResult(
        z=float(z), K=int(K), lhs=lhs, rhs=rhs,
        residual=abs(lhs - rhs), tail_estimate=tail, fd_budget=float(fd_budget),
    )


# ---------------------------------------------------------------------------
# Spectral shift function.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StepFunction:
    """Piecewise-constant function: 0 below the first location, then unit
    jumps of the recorded signs (same-location jumps listed +1 first)."""

    locations: np.ndarray
    signs: np.ndarray

    def __post_init__(self):
        if self.locations.size != self.signs.size:
            raise ValueError("locations and signs must align")
        if np.any(np.diff(self.locations) < 0.0):
            raise ValueError("locations must be sorted")
        if not np.all(np.isin(self.signs, (-1, 1))):
            raise ValueError("signs must be +1 or -1")
        sums = np.cumsum(self.signs)
        if sums.size and (sums.min() < -2 or sums.max() > 2):
            raise ValueError("partial sums escaped the interlacing range")

    @property
    def e0(self) -> float:
        return float(self.locations[0]) if self.locations.size else math.inf

    def value(self, lam: float) -> int:
        return int(np.sum(self.signs[self.locations <= lam]))

    def values(self, lams) -> np.ndarray:
        idx = np.searchsorted(self.locations, np.asarray(lams), side="right")
        sums = np.concatenate(([0], np.cumsum(self.signs)))
        return sums[idx]

    def partial_sums(self) -> np.ndarray:
        return np.cumsum(self.signs)


def _build_step(full_in: np.ndarray, split_in: np.ndarray) -> StepFunction:
    locations = np.concatenate([full_in, split_in])
    signs = np.concatenate(
        [np.ones(full_in.size, dtype=np.int64), -np.ones(split_in.size, dtype=np.int64)]
    )
    order = np.lexsort((-signs, locations))
    return StepFunction(locations=locations[order], signs=signs[order])


def spectral_shift_function(spec: Spectrum, split: SplitSpectrum) -> StepFunction:
    """Step function with +1 jumps at full-interval eigenvalues and -1 jumps
    at split eigenvalues (multiplicity expanded), over the common window.

    The usable window ends at the smaller of the two truncation energies;
    by interlacing the jump counts inside it can differ by at most one,
    anything else means the inputs belong to different problems.
    """
    split_vals, _ = split.expanded()
    if spec.values.size == 0 or split_vals.size == 0:
        raise WindowMismatchError("cannot build a step function from empty spectra")
    cutoff = min(float(spec.values[-1]), float(split_vals[-1]))
    tol = 1e-12 * max(1.0, abs(cutoff))
    full_in = spec.values[spec.values <= cutoff + tol]
    split_in = split_vals[split_vals <= cutoff + tol]
    if abs(full_in.size - split_in.size) > 1:
        raise WindowMismatchError(
            f"jump counts {full_in.size} vs {split_in.size} in the common window; "
            "spectra do not share a truncation"
        )
    return _build_step(full_in, split_in)


def _equal_count_window(full_vals: np.ndarray, split_vals: np.ndarray):
    """Largest cutoff at which both lists contribute equally many jumps."""
    cutoff = min(float(full_vals[-1]), float(split_vals[-1]))
    cutoff += 1e-12 * max(1.0, abs(cutoff))
    i = int(np.searchsorted(full_vals, cutoff, side="right"))
    j = int(np.searchsorted(split_vals, cutoff, side="right"))
    while i != j:
        top_full = full_vals[i - 1] if i else -math.inf
        top_split = split_vals[j - 1] if j else -math.inf
        top = max(top_full, top_split)
        cutoff = top - max(1e-12, 1e-12 * abs(top))
        i = int(np.searchsorted(full_vals, cutoff, side="right"))
        j = int(np.searchsorted(split_vals, cutoff, side="right"))
    return cutoff, i, j


def ssf_resolvent_integral(step: StepFunction, z: float) -> float:
    """Integral of step(lam) / (lam - z)^2 over the step's window, exactly.

    The integrand has a closed-form primitive on each constancy interval,
    so the result is a finite rational sum with no quadrature error.
    """
    if step.locations.size == 0:
        return 0.0
    if not z < step.e0:
        raise ValueError(f"z must lie below the window start {step.e0}, got {z}")
    xi = np.cumsum(step.signs)[:-1]
    inv = 1.0 / (step.locations - z)
    return float(np.sum(xi * (inv[:-1] - inv[1:])))


# ---------------------------------------------------------------------------
# Verification suite.
# ---------------------------------------------------------------------------


def _entry(check, params, lhs, rhs, budget):
    residual = abs(lhs - rhs)
    return {
        "check": check,
        "params": params,
        "lhs": float(lhs),
        "rhs": float(rhs),
        "residual": float(residual),
        "budget": float(budget),
        "pass": bool(residual <= budget),
    }


def run_verification_suite(
    problem: DirichletProblem,
    x0: float,
    K: int = 400,
    grid_size: int = DEFAULT_GRID,
    force_numpy: bool = False,
    z_ref=None,
) -> list:
    """Run the operator-identity checks and report machine-readable rows.

    Each row carries {check, params, lhs, rhs, residual, budget, pass};
    budgets combine analytic tail estimates with difference-scheme error.
    z_ref overrides the spectral sample point; pole proximity then surfaces
    as an error instead of being designed around.
    """
    a, b = problem.a, problem.b
    K = max(K, MIN_TRACE_K)
    lam = dirichlet_eigenvalues(problem, K, grid_size, force_numpy).values
    if z_ref is None:
        zref = float(lam[0] - max(1.0, 0.5 * (lam[1] - lam[0])))
    else:
        zref = float(z_ref)
    rows = []

    pts = {
        "krein_straddle": (a + 0.5 * (x0 - a), x0 + 0.5 * (b - x0)),
        "krein_same_side": (a + 0.3 * (x0 - a), a + 0.8 * (x0 - a)),
        "krein_decoupling_point": (x0, x0 + 0.4 * (b - x0)),
    }
    for name, (x, xp) in pts.items():
        chk = krein_check(problem, x0, zref, x, xp, grid_size, force_numpy)
        budget = (1e-12 if name == "krein_decoupling_point" else 1e-8) * chk.scale
        rows.append(
            _entry(name, {"z": zref, "x": x, "x_prime": xp, "x0": x0}, chk.g_split, chk.rhs, budget)
        )

    tr = trace_identity_residual(problem, x0, zref, K, grid_size, force_numpy)
    rows.append(
        _entry(
            "trace_identity",
            {"z": zref, "K": tr.K, "x0": x0},
            tr.lhs,
            tr.rhs,
            tr.tail_estimate + tr.fd_budget + 1e-8 * max(1.0, abs(tr.lhs)),
        )
    )

    full = dirichlet_eigenvalues(problem, K, grid_size, force_numpy)
    split = split_eigenvalues(problem, x0, K, grid_size, force_numpy)
    split_vals, _ = split.expanded()
    _, i, j = _equal_count_window(full.values, split_vals)
    if i >= 2:
        step = _build_step(full.values[:i], split_vals[:j])
        integral = ssf_resolvent_integral(step, zref)
        lhs_window = float(
            np.sum(1.0 / (split_vals[:j] - zref)) - np.sum(1.0 / (full.values[:i] - zref))
        )
        rows.append(
            _entry(
                "ssf_resolvent_integral",
                {"z": zref, "window_jumps": int(i + j), "x0": x0},
                integral,
                -lhs_window,
                1e-10 * max(1.0, abs(integral)),
            )
        )

    zs = lam[0] - np.geomspace(8.0, 0.5, 8) * max(1.0, 0.25 * (lam[1] - lam[0]))
    gvals = np.array(
        [green_diag(problem, float(zz), x0, grid_size, force_numpy).value for zz in zs]
    )
    min_diff = float(np.min(np.diff(gvals)))
    rows.append(
        _entry(
            "herglotz_monotone",
            {"z_min": float(zs[0]), "z_max": float(zs[-1]), "n": len(zs), "x0": x0},
            min_diff,
            abs(min_diff),
            0.0,
        )
    )

    ksum = min(40, K)
    esq = np.array(
        [eigenfunction_squared_at(problem, k, x0, grid_size, force_numpy) for k in range(1, ksum + 1)]
    )
    lam_sum = lam[:ksum]
    sum_terms = esq / (lam_sum - zref)
    series = float(np.sum(sum_terms))
    gval = green_diag(problem, zref, x0, grid_size, force_numpy).value
    tail = 1.5 * ksum * float(np.max(sum_terms[-4:]))
    rows.append(
        _entry(
            "eigenfunction_sum",
            {"z": zref, "K": ksum, "x0": x0},
            gval,
            series,
            tail + 1e-8 * max(1.0, abs(gval)),
        )
    )

    residues = [green_residue(problem, k, x0, grid_size, force_numpy) for k in (1, 2, 3)]
    worst = float(min(residues))
    rows.append(
        _entry(
            "residue_positivity",
            {"ks": [1, 2, 3], "x0": x0},
            worst,
            max(0.0, worst),
            1e-10,
        )
    )
    return rows
