"""Sturm-Liouville core: potentials, shooting solutions, Dirichlet spectra.

Solutions of -psi'' + V psi = z psi on [a, b] are produced two ways:

* Solution traces (values and derivatives on a uniform grid) come from
  classical fixed-step RK4 on the (psi, psi') system with staggered
  potential samples.  Traces feed Wronskians, normalization integrals and
  pointwise oracle values.

* Eigenvalue location uses a rotation-counting phase function: the
  potential is replaced by its exact per-cell average and each cell is
  crossed with the exact constant-coefficient transfer matrix.  The angle
  Theta(b; z) is strictly increasing in z and equals k*pi exactly at the
  k-th Dirichlet eigenvalue, so brackets are certified by integer counts
  and can never miss or double-count.  The cell-average scheme is O(h^2)
  uniformly in z (exact for constant potentials), which RK4 shooting is
  not at high energy.

Every reported eigenvalue carries a residual certificate
|psi_a(lam, b)| / ||psi_a||_inf <= tol_eig.
"""

from __future__ import annotations

import dataclasses
import math
import threading
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import (
    BracketingError,
    IncompatibleTracesError,
    OverflowIntegrationError,
)

TOL_EIG = 1e-10            # eigenvalue relative tolerance and certificate bound
TOL_MERGE = 1e-8           # coincidence detection: this times max(1, |lam|)
DEFAULT_GRID = 4096
MIN_GRID = 64
# The endpoint residual |psi(b)|/||psi||_inf of a root with phase error eps
# grows like eps * sqrt(lam) (the derivative channel carries a factor omega),
# so the phase target must shrink with energy to keep certificates under
# TOL_EIG.  0.2 leaves margin for amplitude variation across the interval.
_PHASE_TOL_FACTOR = 0.2 * TOL_EIG
_WIDTH_RTOL = 5e-15        # bracket-width floor relative to max(1, |z|)
_ITER_BUDGET = 200


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------
# Potentials.  Each variant evaluates vectorized and carries a closed-form
# antiderivative so cell averages are exact integrals, not samples.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ZeroPotential:
    def evaluate(self, x):
        return np.zeros_like(np.asarray(x, dtype=np.float64))

    def antiderivative(self, x):
        return np.zeros_like(np.asarray(x, dtype=np.float64))

    def fingerprint(self) -> str:
        return "zero"

    def to_json(self) -> dict:
        return {"type": "zero"}


@dataclass(frozen=True)
class ConstantPotential:
    c: float

    def __post_init__(self):
        if not math.isfinite(self.c):
            raise ValueError("constant potential must be finite")

    def evaluate(self, x):
        return np.full_like(np.asarray(x, dtype=np.float64), self.c)

    def antiderivative(self, x):
        return self.c * np.asarray(x, dtype=np.float64)

    def fingerprint(self) -> str:
        return f"const({_fmt(self.c)})"

    def to_json(self) -> dict:
        return {"type": "constant", "c": self.c}


@dataclass(frozen=True)
class PolynomialPotential:
    """V(x) = sum coeffs[i] * x**i (ascending powers)."""

    coeffs: tuple

    def __post_init__(self):
        c = tuple(float(v) for v in self.coeffs)
        if len(c) == 0:
            raise ValueError("polynomial needs at least one coefficient")
        if not all(math.isfinite(v) for v in c):
            raise ValueError("polynomial coefficients must be finite")
        object.__setattr__(self, "coeffs", c)

    def evaluate(self, x):
        return np.polynomial.polynomial.polyval(np.asarray(x, dtype=np.float64), self.coeffs)

    def antiderivative(self, x):
        anti = np.concatenate(([0.0], np.asarray(self.coeffs) / np.arange(1, len(self.coeffs) + 1)))
        return np.polynomial.polynomial.polyval(np.asarray(x, dtype=np.float64), anti)

    def fingerprint(self) -> str:
        return "poly(" + ",".join(_fmt(c) for c in self.coeffs) + ")"

    def to_json(self) -> dict:
        return {"type": "polynomial", "coeffs": list(self.coeffs)}


@dataclass(frozen=True)
class TrigSumPotential:
    """V(x) = sum amp * cos(freq * x + phase) over the given terms."""

    terms: tuple

    def __post_init__(self):
        t = tuple((float(a), float(f), float(p)) for a, f, p in self.terms)
        if len(t) == 0:
            raise ValueError("trig sum needs at least one term")
        if not all(all(map(math.isfinite, term)) for term in t):
            raise ValueError("trig sum parameters must be finite")
        object.__setattr__(self, "terms", t)

    def evaluate(self, x):
        x = np.asarray(x, dtype=np.float64)
        out = np.zeros_like(x)
        for amp, freq, phase in self.terms:
            out = out + amp * np.cos(freq * x + phase)
        return out

    def antiderivative(self, x):
        x = np.asarray(x, dtype=np.float64)
        out = np.zeros_like(x)
        for amp, freq, phase in self.terms:
            if freq == 0.0:
                out = out + amp * math.cos(phase) * x
            else:
                out = out + amp * np.sin(freq * x + phase) / freq
        return out

    def fingerprint(self) -> str:
        body = ";".join(f"{_fmt(a)},{_fmt(f)},{_fmt(p)}" for a, f, p in self.terms)
        return f"trig({body})"

    def to_json(self) -> dict:
        return {"type": "trigsum", "terms": [list(t) for t in self.terms]}


@dataclass(frozen=True)
class PiecewiseLinearPotential:
    """Linear interpolation through strictly increasing knots."""

    xs: tuple
    ys: tuple

    def __post_init__(self):
        xs = tuple(float(v) for v in self.xs)
        ys = tuple(float(v) for v in self.ys)
        if len(xs) < 2 or len(xs) != len(ys):
            raise ValueError("piecewise potential needs matching xs/ys, at least two knots")
        if not all(map(math.isfinite, xs + ys)):
            raise ValueError("knots must be finite")
        if not all(x1 > x0 for x0, x1 in zip(xs, xs[1:])):
            raise ValueError("knot abscissae must be strictly increasing")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)

    def evaluate(self, x):
        return np.interp(np.asarray(x, dtype=np.float64), self.xs, self.ys)

    def antiderivative(self, x):
        xs = np.asarray(self.xs)
        ys = np.asarray(self.ys)
        slopes = np.diff(ys) / np.diff(xs)
        # exact prefix integral at the knots (trapezoid is exact per segment)
        prefix = np.concatenate(([0.0], np.cumsum(0.5 * (ys[:-1] + ys[1:]) * np.diff(xs))))
        x = np.asarray(x, dtype=np.float64)
        idx = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, len(xs) - 2)
        dx = x - xs[idx]
        return prefix[idx] + ys[idx] * dx + 0.5 * slopes[idx] * dx * dx

    def fingerprint(self) -> str:
        body = ";".join(f"{_fmt(x)},{_fmt(y)}" for x, y in zip(self.xs, self.ys))
        return f"pwl({body})"

    def to_json(self) -> dict:
        return {"type": "piecewise", "knots": [[x, y] for x, y in zip(self.xs, self.ys)]}


def potential_from_json(obj: dict):
    kind = obj.get("type")
    if kind == "zero":
        return ZeroPotential()
    if kind == "constant":
        return ConstantPotential(float(obj["c"]))
    if kind == "polynomial":
        return PolynomialPotential(tuple(obj["coeffs"]))
    if kind == "trigsum":
        return TrigSumPotential(tuple(tuple(t) for t in obj["terms"]))
    if kind == "piecewise":
        knots = obj["knots"]
        return PiecewiseLinearPotential(
            tuple(k[0] for k in knots), tuple(k[1] for k in knots)
        )
    raise ValueError(f"unknown potential type: {kind!r}")


# ---------------------------------------------------------------------------
# Problems and solution traces.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DirichletProblem:
    """-psi'' + (V + shift) psi = z psi on (a, b) with psi(a) = psi(b) = 0.

    The additive shift is recorded separately so callers can reason about
    spectrum translation without rebuilding the potential.
    """

    a: float
    b: float
    potential: object
    shift: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.a) and math.isfinite(self.b) and math.isfinite(self.shift)):
            raise ValueError("endpoints and shift must be finite")
        if not self.a < self.b:
            raise ValueError(f"need a < b, got a={self.a}, b={self.b}")
        if isinstance(self.potential, PiecewiseLinearPotential):
            if self.potential.xs[0] > self.a or self.potential.xs[-1] < self.b:
                raise ValueError("piecewise knots must cover [a, b]")

    @property
    def length(self) -> float:
        return self.b - self.a

    def v_eval(self, x):
        return self.potential.evaluate(x) + self.shift

    def cell_averages(self, n: int) -> np.ndarray:
        """Exact per-cell averages of V + shift on a uniform n-cell grid."""
        edges = np.linspace(self.a, self.b, n + 1)
        anti = self.potential.antiderivative(edges)
        h = self.length / n
        return np.ascontiguousarray(np.diff(anti) / h + self.shift)

    def staggered_samples(self, n: int) -> np.ndarray:
        """V + shift at the 2n+1 half-step points RK4 stages touch."""
        pts = self.a + (self.length / (2 * n)) * np.arange(2 * n + 1)
        return np.ascontiguousarray(self.v_eval(pts))

    def restricted(self, x0: float):
        """Left and right subproblems sharing potential and shift."""
        if not self.a < x0 < self.b:
            raise ValueError(f"split point must satisfy a < x0 < b, got {x0}")
        return (
            dataclasses.replace(self, b=x0),
            dataclasses.replace(self, a=x0),
        )

    def fingerprint(self) -> str:
        return (
            f"dp[{_fmt(self.a)},{_fmt(self.b)},s={_fmt(self.shift)},"
            f"{self.potential.fingerprint()}]"
        )


def problem_from_json(obj: dict):
    """Problem plus optional split point from the JSON input format."""
    problem = DirichletProblem(
        a=float(obj["a"]),
        b=float(obj["b"]),
        potential=potential_from_json(obj["potential"]),
        shift=float(obj.get("shift", 0.0)),
    )
    x0 = obj.get("x0")
    return problem, (None if x0 is None else float(x0))


@dataclass(frozen=True)
class SolutionTrace:
    """Initial-value solution sampled on a uniform grid.

    The anchor endpoint carries psi = 0 and psi' = 1 exactly; right-anchored
    traces were integrated leftward and re-reversed, so grids always run a
    to b.
    """

    z: float
    grid: np.ndarray
    values: np.ndarray
    derivatives: np.ndarray
    anchor: str

    @property
    def h(self) -> float:
        return float(self.grid[1] - self.grid[0])


def integrate_solution(
    problem: DirichletProblem,
    z: float,
    anchor: str = "a",
    grid_size: int = DEFAULT_GRID,
    force_numpy: bool = False,
) -> SolutionTrace:
    """Shoot from the anchor endpoint: psi(anchor) = 0, psi'(anchor) = 1.

    anchor='b' integrates leftward via the reflected problem u(t) = -psi(b-t),
    which keeps the returned derivative convention d psi/dx (b) = 1.
    """
    if grid_size < MIN_GRID:
        raise ValueError(f"grid_size must be >= {MIN_GRID}, got {grid_size}")
    if not math.isfinite(z):
        raise ValueError("z must be finite")
    if anchor not in ("a", "b"):
        raise ValueError(f"anchor must be 'a' or 'b', got {anchor!r}")
    n = int(grid_size)
    h = problem.length / n
    grid = np.linspace(problem.a, problem.b, n + 1)
    v2 = problem.staggered_samples(n)
    psi = np.empty(n + 1)
    dpsi = np.empty(n + 1)
    psi[0] = 0.0
    dpsi[0] = 1.0
    if anchor == "a":
        status = kernels.rk4_trace(v2, h, float(z), 0.0, 1.0, psi, dpsi, force_numpy=force_numpy)
        if status:
            raise OverflowIntegrationError(
                f"solution overflow at z={z!r}: sqrt(|z|)*(b-a) too large for a plain "
                "trace; use the scaled log-form propagation instead"
            )
        values, derivatives = psi, dpsi
    else:
        status = kernels.rk4_trace(v2[::-1].copy(), h, float(z), 0.0, 1.0, psi, dpsi, force_numpy=force_numpy)
        if status:
            raise OverflowIntegrationError(
                f"solution overflow at z={z!r}: sqrt(|z|)*(b-a) too large for a plain "
                "trace; use the scaled log-form propagation instead"
            )
        values = -psi[::-1].copy()
        derivatives = dpsi[::-1].copy()
        values[-1] = 0.0
        derivatives[-1] = 1.0
    return SolutionTrace(z=float(z), grid=grid, values=values, derivatives=derivatives, anchor=anchor)


def _check_compatible(f: SolutionTrace, g: SolutionTrace) -> None:
    if f.z != g.z:
        raise IncompatibleTracesError(f"traces have different z: {f.z!r} vs {g.z!r}")
    if f.grid.shape != g.grid.shape or not np.array_equal(f.grid, g.grid):
        raise IncompatibleTracesError("traces sampled on different grids")


def wronskian(f: SolutionTrace, g: SolutionTrace, x: float) -> float:
    """W(f, g)(x) = f(x) g'(x) - f'(x) g(x) at a grid point."""
    _check_compatible(f, g)
    h = f.h
    i = int(round((x - f.grid[0]) / h))
    if not 0 <= i < f.grid.size or abs(f.grid[i] - x) > 1e-9 * max(1.0, abs(x)):
        raise ValueError(f"x={x!r} is not a grid point of the trace")
    return float(f.values[i] * g.derivatives[i] - f.derivatives[i] * g.values[i])


def wronskian_spread(f: SolutionTrace, g: SolutionTrace) -> float:
    """max - min of W(f, g) over the whole grid; 0 for exact constancy."""
    _check_compatible(f, g)
    w = f.values * g.derivatives - f.derivatives * g.values
    return float(np.max(w) - np.min(w))


# ---------------------------------------------------------------------------
# Spectra.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Spectrum:
    """First K Dirichlet eigenvalues, strictly increasing, with certificates."""

    values: np.ndarray
    fingerprint: str
    grid_size: int
    iterations: int
    residuals: np.ndarray

    def __post_init__(self):
        v = self.values
        if v.size > 1 and not np.all(np.diff(v) > 0.0):
            raise ValueError("spectrum must be strictly increasing")

    def __len__(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class SplitSpectrum:
    """Merged spectrum of the two subintervals around x0.

    Entries are nondecreasing; a left/right coincidence within
    TOL_MERGE * max(1, |lam|) is stored once with multiplicity 2 and tag
    'both'.  Truncation never splits such a pair: when the requested count
    lands inside one, the whole pair is kept, so the total multiplicity can
    exceed the request by one.
    """

    values: np.ndarray
    multiplicities: np.ndarray
    tags: tuple
    x0: float
    fingerprint: str

    def __post_init__(self):
        if np.any(np.diff(self.values) < 0.0):
            raise ValueError("split spectrum must be nondecreasing")
        if not np.all(np.isin(self.multiplicities, (1, 2))):
            raise ValueError("multiplicities must be 1 or 2")
        for tag, m in zip(self.tags, self.multiplicities):
            if (tag == "both") != (m == 2):
                raise ValueError("tag 'both' must pair with multiplicity 2")

    def total_multiplicity(self) -> int:
        return int(np.sum(self.multiplicities))

    def side_values(self, side: str) -> np.ndarray:
        """Eigenvalues contributed by one half ('left' or 'right'), sorted."""
        keep = [v for v, t in zip(self.values, self.tags) if t in (side, "both")]
        return np.asarray(keep, dtype=np.float64)

    def expanded(self):
        """(values, sides) with multiplicity written out entry by entry."""
        vals, sides = [], []
        for v, m, t in zip(self.values, self.multiplicities, self.tags):
            if t == "both":
                vals.extend((v, v))
                sides.extend(("left", "right"))
            else:
                vals.append(v)
                sides.append(t)
        return np.asarray(vals), tuple(sides)


_SPECTRUM_CACHE: dict = {}
_CACHE_LOCK = threading.Lock()


def _phase_offset(vavg, h, zs, ks, force_numpy):
    """Theta(b; z) - k*pi without cancellation.

    Theta = m*pi + delta with integer m, so the offset is (m - k)*pi + delta;
    forming it from the integer difference keeps resolution ~ulp(pi) even
    when m*pi itself is thousands, where a float Theta would quantize at
    ulp(m*pi) and stall the refinement.
    """
    counts, deltas = kernels.phase_sweep(vavg, h, zs, force_numpy=force_numpy)
    return (counts - ks).astype(np.float64) * math.pi + deltas


def _initial_probes(problem, vavg, K, force_numpy):
    """Strictly increasing z probes whose Theta values straddle all k*pi."""
    length = problem.length
    vbar = float(np.mean(vavg))
    z_lo = float(np.min(vavg)) - 1.0  # Theta < pi: no oscillation below min V
    probes = [z_lo] + [((j + 0.5) * math.pi / length) ** 2 + vbar for j in range(K + 1)]
    probes = np.array(probes)
    h = length / vavg.size
    counts, deltas = kernels.phase_sweep(vavg, h, probes, force_numpy=force_numpy)
    target = K * math.pi + 0.1
    grow = 0
    while counts[-1] * math.pi + deltas[-1] < target:
        grow += 1
        if grow > 64:
            raise BracketingError(K, float(probes[-1]), math.inf, "probe extension exhausted")
        s = math.sqrt(max(probes[-1] - vbar, 1.0)) * 1.25
        z_new = np.array([vbar + s * s])
        c_new, d_new = kernels.phase_sweep(vavg, h, z_new, force_numpy=force_numpy)
        probes = np.concatenate([probes, z_new])
        counts = np.concatenate([counts, c_new])
        deltas = np.concatenate([deltas, d_new])
    return probes, counts, deltas


def _refine_roots(vavg, h, lo, hi, flo, fhi, force_numpy):
    """Batched Illinois iteration driving Theta - k*pi to zero per bracket."""
    K = lo.size
    lam = 0.5 * (lo + hi)
    converged = np.zeros(K, dtype=bool)
    # probe grid can hit a root exactly
    exact_hi = fhi == 0.0
    lam[exact_hi] = hi[exact_hi]
    converged |= exact_hi
    side = np.zeros(K, dtype=np.int8)  # +1: last update replaced hi, -1: lo
    ftol = _PHASE_TOL_FACTOR / np.sqrt(np.maximum(1.0, np.abs(hi)))
    iterations = 0
    while not np.all(converged):
        if iterations >= _ITER_BUDGET:
            k_bad = int(np.argmin(converged))
            raise BracketingError(k_bad + 1, float(lo[k_bad]), float(hi[k_bad]))
        iterations += 1
        act = np.nonzero(~converged)[0]
        zm = hi[act] - fhi[act] * (hi[act] - lo[act]) / (fhi[act] - flo[act])
        inside = (zm > lo[act]) & (zm < hi[act])
        zm = np.where(inside, zm, 0.5 * (lo[act] + hi[act]))
        fm = _phase_offset(vavg, h, zm, act + 1, force_numpy)
        up = fm > 0.0
        down = fm < 0.0
        hit = fm == 0.0
        ia = act[up]
        hi[ia] = zm[up]
        fhi[ia] = fm[up]
        rep = ia[side[ia] == 1]
        flo[rep] *= 0.5  # Illinois: same side twice, damp the kept ordinate
        side[ia] = 1
        ia = act[down]
        lo[ia] = zm[down]
        flo[ia] = fm[down]
        rep = ia[side[ia] == -1]
        fhi[rep] *= 0.5
        side[ia] = -1
        lam[act] = zm
        done = (
            hit
            | (np.abs(fm) <= ftol[act])
            | ((hi[act] - lo[act]) <= _WIDTH_RTOL * np.maximum(1.0, np.abs(zm)))
        )
        converged[act[done]] = True
    return lam, iterations


def dirichlet_eigenvalues(
    problem: DirichletProblem,
    K: int,
    grid_size: int = DEFAULT_GRID,
    force_numpy: bool = False,
) -> Spectrum:
    """First K Dirichlet eigenvalues by certified phase-function bracketing.

    Theta(b; z) passes k*pi exactly at lam_k, so searchsorted on a probe
    sweep yields guaranteed brackets which Illinois iterations then refine.
    Results are cached per (problem, grid, backend); a shorter prefix of a
    cached spectrum is served by slicing.
    """
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    if grid_size < MIN_GRID:
        raise ValueError(f"grid_size must be >= {MIN_GRID}, got {grid_size}")
    key = (problem.fingerprint(), int(grid_size), bool(force_numpy))
    with _CACHE_LOCK:
        hit = _SPECTRUM_CACHE.get(key)
    if hit is not None and len(hit) >= K:
        if len(hit) == K:
            return hit
        return Spectrum(
            values=hit.values[:K],
            fingerprint=hit.fingerprint,
            grid_size=hit.grid_size,
            iterations=hit.iterations,
            residuals=hit.residuals[:K],
        )
    n = int(grid_size)
    vavg = problem.cell_averages(n)
    h = problem.length / n
    probes, counts, deltas = _initial_probes(problem, vavg, K, force_numpy)
    thetas = counts.astype(np.float64) * math.pi + deltas
    kpi = np.arange(1, K + 1) * math.pi
    ks = np.arange(1, K + 1)
    idx = np.searchsorted(thetas, kpi)
    lo = probes[idx - 1].copy()
    hi = probes[idx].copy()
    flo = (counts[idx - 1] - ks).astype(np.float64) * math.pi + deltas[idx - 1]
    fhi = (counts[idx] - ks).astype(np.float64) * math.pi + deltas[idx]
    lam, iterations = _refine_roots(vavg, h, lo, hi, flo, fhi, force_numpy)
    residuals = kernels.certificate_sweep(vavg, h, lam, force_numpy=force_numpy)
    worst = int(np.argmax(residuals))
    if residuals[worst] > TOL_EIG:
        raise BracketingError(
            worst + 1,
            float(lam[worst]),
            float(lam[worst]),
            f"endpoint residual {residuals[worst]:.3e} exceeds certificate {TOL_EIG:.0e}",
        )
    spectrum = Spectrum(
        values=lam,
        fingerprint=key[0],
        grid_size=n,
        iterations=iterations,
        residuals=residuals,
    )
    with _CACHE_LOCK:
        prior = _SPECTRUM_CACHE.get(key)
        if prior is None or len(prior) < len(spectrum):
            _SPECTRUM_CACHE[key] = spectrum
    return spectrum


def clear_spectrum_cache() -> None:
    with _CACHE_LOCK:
        _SPECTRUM_CACHE.clear()


def _merge_sides(left: np.ndarray, right: np.ndarray, K: int):
    """Two-pointer merge with coincidence pairing; never splits a pair."""
    vals, mults, tags = [], [], []
    i = j = 0
    total = 0
    while total < K and (i < left.size or j < right.size):
        both = i < left.size and j < right.size
        if both and abs(left[i] - right[j]) <= TOL_MERGE * max(1.0, abs(left[i]), abs(right[j])):
            vals.append(0.5 * (left[i] + right[j]))
            mults.append(2)
            tags.append("both")
            i += 1
            j += 1
            total += 2
        elif j >= right.size or (i < left.size and left[i] < right[j]):
            vals.append(left[i])
            mults.append(1)
            tags.append("left")
            i += 1
            total += 1
        else:
            vals.append(right[j])
            mults.append(1)
            tags.append("right")
            j += 1
            total += 1
    return vals, mults, tags, total


def split_eigenvalues(
    problem: DirichletProblem,
    x0: float,
    K: int,
    grid_size: int = DEFAULT_GRID,
    force_numpy: bool = False,
) -> SplitSpectrum:
    """Merged Dirichlet spectrum of (a, x0) and (x0, b), K entries with
    multiplicity.

    Per-side counts start from the length-proportional estimate and grow
    until both sides are enumerated past the merged cutoff, so no entry
    below the cutoff can be missing.
    """
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    left_problem, right_problem = problem.restricted(x0)
    frac = (x0 - problem.a) / problem.length
    kl = max(1, math.ceil(K * frac) + 4 + K // 32)
    kr = max(1, math.ceil(K * (1.0 - frac)) + 4 + K // 32)
    for _ in range(8):
        spec_l = dirichlet_eigenvalues(left_problem, kl, grid_size, force_numpy)
        spec_r = dirichlet_eigenvalues(right_problem, kr, grid_size, force_numpy)
        vals, mults, tags, total = _merge_sides(spec_l.values, spec_r.values, K)
        if total >= K:
            cutoff = vals[-1]
            ok_l = spec_l.values[-1] >= cutoff
            ok_r = spec_r.values[-1] >= cutoff
            if ok_l and ok_r:
                return SplitSpectrum(
                    values=np.asarray(vals),
                    multiplicities=np.asarray(mults, dtype=np.int64),
                    tags=tuple(tags),
                    x0=float(x0),
                    fingerprint=f"{problem.fingerprint()}|x0={_fmt(x0)}",
                )
            if not ok_l:
                kl = math.ceil(kl * 1.3) + 4
            if not ok_r:
                kr = math.ceil(kr * 1.3) + 4
        else:
            kl = math.ceil(kl * 1.3) + 4
            kr = math.ceil(kr * 1.3) + 4
    raise BracketingError(K, float("nan"), float("nan"), "split enumeration did not stabilize")


# ---------------------------------------------------------------------------
# Eigenfunctions and pointwise values.
# ---------------------------------------------------------------------------


def simpson_integral(y: np.ndarray, h: float) -> float:
    """Composite Simpson on an even number of uniform cells."""
    n = y.size - 1
    if n % 2:
        raise ValueError("Simpson quadrature needs an even cell count")
    return float((h / 3.0) * (y[0] + y[-1] + 4.0 * np.sum(y[1:-1:2]) + 2.0 * np.sum(y[2:-1:2])))


@dataclass(frozen=True)
class Eigenfunction:
    """L2-normalized eigenfunction with positive derivative at a."""

    k: int
    lam: float
    trace: SolutionTrace
    norm_factor: float


def eigenfunction_direct(
    problem: DirichletProblem,
    k: int,
    grid_size: int = DEFAULT_GRID,
    force_numpy: bool = False,
) -> Eigenfunction:
    """Direct (shooting) eigenfunction: the oracle for reconstructed values."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if grid_size % 2:
        raise ValueError("grid_size must be even for Simpson normalization")
    lam = float(dirichlet_eigenvalues(problem, k, grid_size, force_numpy).values[k - 1])
    raw = integrate_solution(problem, lam, "a", grid_size, force_numpy)
    norm2 = simpson_integral(raw.values**2, raw.h)
    nf = 1.0 / math.sqrt(norm2)
    trace = SolutionTrace(
        z=raw.z,
        grid=raw.grid,
        values=raw.values * nf,
        derivatives=raw.derivatives * nf,
        anchor=raw.anchor,
    )
    return Eigenfunction(k=k, lam=lam, trace=trace, norm_factor=nf)


def solution_value_at(
    problem: DirichletProblem,
    z: float,
    x: float,
    anchor: str = "a",
    grid_size: int = DEFAULT_GRID,
    force_numpy: bool = False,
):
    """(psi(x), psi'(x)) by whole RK4 steps plus one exact fractional step.

    Matches integrate_solution at grid points and evaluates between them
    without interpolation.
    """
    if not problem.a <= x <= problem.b:
        raise ValueError(f"x={x!r} outside [{problem.a}, {problem.b}]")
    if anchor not in ("a", "b"):
        raise ValueError(f"anchor must be 'a' or 'b', got {anchor!r}")
    n = int(grid_size)
    h = problem.length / n
    span = (x - problem.a) if anchor == "a" else (problem.b - x)
    nfull = int(math.floor(span / h + 1e-12))
    nfull = min(nfull, n)
    hlast = span - nfull * h
    if hlast < 1e-13 * max(1.0, span):
        hlast = 0.0
    if anchor == "a":
        start = problem.a
        pts = start + h * 0.5 * np.arange(2 * nfull + 1)
        xn = start + nfull * h
        pts3 = np.array([xn, xn + 0.5 * hlast, xn + hlast])
        v2 = np.ascontiguousarray(problem.v_eval(pts))
        v3 = np.ascontiguousarray(problem.v_eval(pts3))
        psi, dpsi, status = kernels.rk4_value(v2, h, float(z), nfull, v3, hlast, force_numpy=force_numpy)
        if status:
            raise OverflowIntegrationError(
                f"solution overflow at z={z!r}; use the scaled log-form propagation"
            )
        return float(psi), float(dpsi)
    start = problem.b
    pts = start - h * 0.5 * np.arange(2 * nfull + 1)
    xn = start - nfull * h
    pts3 = np.array([xn, xn - 0.5 * hlast, xn - hlast])
    v2 = np.ascontiguousarray(problem.v_eval(pts))
    v3 = np.ascontiguousarray(problem.v_eval(pts3))
    u, du, status = kernels.rk4_value(v2, h, float(z), nfull, v3, hlast, force_numpy=force_numpy)
    if status:
        raise OverflowIntegrationError(
            f"solution overflow at z={z!r}; use the scaled log-form propagation"
        )
    return float(-u), float(du)


def eigenfunction_squared_at(
    problem: DirichletProblem,
    k: int,
    x: float,
    grid_size: int = DEFAULT_GRID,
    force_numpy: bool = False,
) -> float:
    """e_k(x)^2 at an arbitrary point, L2-normalized on the trace grid."""
    lam = float(dirichlet_eigenvalues(problem, k, grid_size, force_numpy).values[k - 1])
    raw = integrate_solution(problem, lam, "a", grid_size, force_numpy)
    norm2 = simpson_integral(raw.values**2, raw.h)
    psi, _ = solution_value_at(problem, lam, x, "a", grid_size, force_numpy)
    return float(psi * psi / norm2)


# ---------------------------------------------------------------------------
# Closed-form free spectra (no ODE solves).
# ---------------------------------------------------------------------------


def free_spectra(a: float, b: float, x0: float, K: int):
    """Exact spectra of the free operator and its split counterpart.

    Full interval: lam_k = (k pi / (b-a))^2.  Split: merged union of
    (j pi / (x0-a))^2 and (l pi / (b-x0))^2 with coincidences paired.
    """
    if not (a < x0 < b):
        raise ValueError(f"need a < x0 < b, got a={a}, x0={x0}, b={b}")
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    length = b - a
    ks = np.arange(1, K + 1, dtype=np.float64)
    full = Spectrum(
        values=(ks * math.pi / length) ** 2,
        fingerprint=f"free[{_fmt(a)},{_fmt(b)}]",
        grid_size=0,
        iterations=0,
        residuals=np.zeros(K),
    )
    l1 = x0 - a
    l2 = b - x0
    nl = max(1, math.ceil(K * l1 / length) + 2)
    nr = max(1, math.ceil(K * l2 / length) + 2)
    while True:
        left = (np.arange(1, nl + 1) * math.pi / l1) ** 2
        right = (np.arange(1, nr + 1) * math.pi / l2) ** 2
        vals, mults, tags, total = _merge_sides(left, right, K)
        if total >= K:
            cutoff = vals[-1]
            if left[-1] >= cutoff and right[-1] >= cutoff:
                break
        nl += max(2, nl // 4)
        nr += max(2, nr // 4)
    split = SplitSpectrum(
        values=np.asarray(vals),
        multiplicities=np.asarray(mults, dtype=np.int64),
        tags=tuple(tags),
        x0=float(x0),
        fingerprint=f"free[{_fmt(a)},{_fmt(b)}]|x0={_fmt(x0)}",
    )
    return full, split
