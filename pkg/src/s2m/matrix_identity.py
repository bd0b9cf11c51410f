"""Finite-dimensional baseline: squared eigenvector components from spectra.

For an n x n Hermitian matrix A with eigenvalues lam_1 <= ... <= lam_n and
orthonormal eigenvectors v_k, and M_j the principal minor obtained by deleting
row and column j,

    |v_{k,j}|^2 * prod_{m != k} (lam_k(A) - lam_m(A))
        = prod_{i=1}^{n-1} (lam_k(A) - lam_i(M_j)).

The identity only pins |v_{k,j}|^2 when lam_k is simple; degenerate k are
reported with ``generic=False`` and no value.  A second, independent route to
the same data goes through the resolvent diagonal,

    det(M_j - z I) / det(A - z I) = sum_k |v_{k,j}|^2 / (lam_k - z),

which this module exposes as a residual check.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional, TextIO

import numpy as np

from .errors import JacobiConvergenceError, NonHermitianError, PoleProximityError
from .logutil import signed_log_product as _signed_log_product

HERMITICITY_RTOL = 1e-12
GAP_RTOL = 1e-12          # genericity: gaps below this times spectral diameter
IDENTITY_RTOL = 1e-8      # |lhs - rhs| <= this times max(|lhs|, |rhs|, 1)
POLE_ATOL = 1e-8          # resolvent check keeps z this far from sigma(A)
JACOBI_SWEEP_BUDGET = 60
JACOBI_OFF_RTOL = 1e-14   # off-diagonal Frobenius target relative to ||A||_F


@dataclass(frozen=True)
class SymmetricMatrix:
    """Hermitian matrix wrapper; Hermiticity is enforced at construction."""

    data: np.ndarray

    def __post_init__(self):
        a = self.data
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"matrix must be square, got shape {a.shape}")
        if a.shape[0] < 1:
            raise ValueError("matrix must be at least 1 x 1")
        if not np.all(np.isfinite(a)):
            raise ValueError("matrix entries must be finite")
        scale = np.max(np.abs(a)) if a.size else 0.0
        dev = np.max(np.abs(a - a.conj().T))
        if dev > HERMITICITY_RTOL * max(scale, 1e-300):
            raise NonHermitianError(
                f"Hermiticity deviation {dev:.3e} exceeds {HERMITICITY_RTOL:.0e} * {scale:.3e}"
            )

    @classmethod
    def from_array(cls, arr) -> "SymmetricMatrix":
        a = np.asarray(arr)
        if np.iscomplexobj(a):
            a = a.astype(np.complex128)
        else:
            a = a.astype(np.float64).astype(np.complex128)
        return cls(np.ascontiguousarray(a))

    @classmethod
    def from_json(cls, obj: dict) -> "SymmetricMatrix":
        n = obj["n"]
        real = np.asarray(obj["real"], dtype=np.float64)
        if real.shape != (n, n):
            raise ValueError(f"'real' must be {n} x {n}, got {real.shape}")
        if "imag" in obj and obj["imag"] is not None:
            imag = np.asarray(obj["imag"], dtype=np.float64)
            if imag.shape != (n, n):
                raise ValueError(f"'imag' must be {n} x {n}, got {imag.shape}")
        else:
            imag = np.zeros((n, n))
        return cls.from_array(real + 1j * imag)

    @classmethod
    def load(cls, path: str) -> "SymmetricMatrix":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))

    @property
    def n(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class SpectralDecomposition:
    """Ascending eigenvalues with matching orthonormal eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    sweeps: int
    offdiag: float


@dataclass(frozen=True)
class IdentityCell:
    k: int
    ell: int
    lhs: float
    rhs: float
    direct: float
    abs_err: float
    generic: bool


@dataclass(frozen=True)
class IdentityReport:
    cells: tuple
    n: int

    def failures(self, rtol: float = IDENTITY_RTOL):
        return [
            c
            for c in self.cells
            if c.generic and c.abs_err > rtol * max(abs(c.lhs), abs(c.rhs), 1.0)
        ]


@dataclass(frozen=True)
class ResolventCheck:
    z: complex
    j: int
    lhs: complex
    rhs: complex
    residual: float
    scale: float


def _jacobi_rotate(a: np.ndarray, v: np.ndarray, p: int, q: int) -> None:
    """Zero the (p, q) entry in place with a unitary plane rotation."""
    apq = a[p, q]
    alpha = abs(apq)
    if alpha == 0.0:
        return
    phase = apq / alpha
    # zeroing (p, q) needs t^2 - 2*tau*t - 1 = 0; take the small root
    tau = (a[q, q].real - a[p, p].real) / (2.0 * alpha)
    if tau >= 0.0:
        t = -1.0 / (tau + math.sqrt(1.0 + tau * tau))
    else:
        t = 1.0 / (-tau + math.sqrt(1.0 + tau * tau))
    c = 1.0 / math.sqrt(1.0 + t * t)
    s = t * c
    # U acts on columns p, q:  col_p <- c*col_p + s*conj(phase)*col_q
    #                          col_q <- -s*phase*col_p + c*col_q
    sp = s * np.conj(phase)
    col_p = a[:, p].copy()
    col_q = a[:, q].copy()
    a[:, p] = c * col_p + sp * col_q
    a[:, q] = -np.conj(sp) * col_p + c * col_q
    row_p = a[p, :].copy()
    row_q = a[q, :].copy()
    a[p, :] = c * row_p + np.conj(sp) * row_q
    a[q, :] = -sp * row_p + c * row_q
    # exact by construction; clamp the pair to kill rounding residue
    a[p, q] = 0.0
    a[q, p] = 0.0
    a[p, p] = a[p, p].real
    a[q, q] = a[q, q].real
    col_p = v[:, p].copy()
    col_q = v[:, q].copy()
    v[:, p] = c * col_p + sp * col_q
    v[:, q] = -np.conj(sp) * col_p + c * col_q


def _offdiag_norm(a: np.ndarray) -> float:
    off = a - np.diag(np.diag(a))
    return float(np.linalg.norm(off))


def hermitian_eigensolve(
    matrix: SymmetricMatrix, sweep_budget: int = JACOBI_SWEEP_BUDGET
) -> SpectralDecomposition:
    """Cyclic Jacobi with threshold skipping; deterministic sweep order.

    Raises JacobiConvergenceError (carrying the remaining off-diagonal norm)
    if the sweep budget is exhausted, which for sane inputs it never is:
    n <= a few hundred converges in well under ten sweeps.
    """
    a = matrix.data.astype(np.complex128).copy()
    n = a.shape[0]
    v = np.eye(n, dtype=np.complex128)
    fro = max(float(np.linalg.norm(a)), 1e-300)
    target = JACOBI_OFF_RTOL * fro
    sweeps = 0
    off = _offdiag_norm(a)
    while off > target:
        if sweeps >= sweep_budget:
            raise JacobiConvergenceError(off, sweeps)
        thresh = off / (n * n) if n > 1 else 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(a[p, q]) > thresh:
                    _jacobi_rotate(a, v, p, q)
        sweeps += 1
        off = _offdiag_norm(a)
    lam = np.diag(a).real.copy()
    order = np.argsort(lam, kind="stable")
    return SpectralDecomposition(
        eigenvalues=lam[order],
        eigenvectors=v[:, order],
        sweeps=sweeps,
        offdiag=off,
    )


def principal_minor(matrix: SymmetricMatrix, j: int) -> SymmetricMatrix:
    """Delete row and column j (1-based) from the matrix."""
    n = matrix.n
    if n <= 1:
        raise ValueError("principal minor undefined for a 1 x 1 matrix")
    if not 1 <= j <= n:
        raise IndexError(f"j must be in [1, {n}], got {j}")
    keep = [i for i in range(n) if i != j - 1]
    sub = matrix.data[np.ix_(keep, keep)]
    return SymmetricMatrix(np.ascontiguousarray(sub))


def component_squared_from_spectra(eigs_a, eigs_m, k: int):
    """|v_{k,j}|^2 from the two spectra; (None, False) when k is degenerate.

    eigs_a: n eigenvalues of the full matrix (ascending); eigs_m: the n-1
    eigenvalues of the deleted-row/column minor; k is 1-based.
    Products accumulate as log-magnitude plus sign so large-n gap products
    cannot overflow.
    """
    lam = np.asarray(eigs_a, dtype=np.float64)
    mu = np.asarray(eigs_m, dtype=np.float64)
    n = lam.size
    if mu.size != n - 1:
        raise ValueError(f"minor spectrum must have {n - 1} entries, got {mu.size}")
    if not 1 <= k <= n:
        raise IndexError(f"k must be in [1, {n}], got {k}")
    lam_k = lam[k - 1]
    gaps = np.delete(lam, k - 1) - lam_k
    diameter = float(lam.max() - lam.min()) if n > 1 else 0.0
    if gaps.size and np.min(np.abs(gaps)) <= GAP_RTOL * diameter:
        return None, False
    s_num, l_num = _signed_log_product(lam_k - mu)
    s_den, l_den = _signed_log_product(-gaps)
    value = s_num * s_den * math.exp(l_num - l_den)
    return value, True


def identity_report(matrix: SymmetricMatrix) -> IdentityReport:
    """Check the squared-component identity for every (k, j) cell.

    lhs = |v_{k,j}|^2 * prod_{m != k}(lam_k - lam_m)    (needs eigenvectors)
    rhs = prod_i (lam_k - lam_i(M_j))                   (eigenvalues only)
    """
    n = matrix.n
    dec = hermitian_eigensolve(matrix)
    lam = dec.eigenvalues
    diameter = float(lam.max() - lam.min()) if n > 1 else 0.0
    minor_eigs = []
    for j in range(1, n + 1):
        if n == 1:
            minor_eigs.append(np.empty(0))
        else:
            minor_eigs.append(hermitian_eigensolve(principal_minor(matrix, j)).eigenvalues)
    cells = []
    for k in range(1, n + 1):
        lam_k = lam[k - 1]
        gaps = lam_k - np.delete(lam, k - 1)
        generic = not (gaps.size and np.min(np.abs(gaps)) <= GAP_RTOL * diameter)
        s_g, l_g = _signed_log_product(gaps)
        for j in range(1, n + 1):
            direct = float(abs(dec.eigenvectors[j - 1, k - 1]) ** 2)
            s_m, l_m = _signed_log_product(lam_k - minor_eigs[j - 1])
            rhs = s_m * math.exp(l_m) if s_m != 0.0 else 0.0
            lhs = direct * s_g * math.exp(l_g) if s_g != 0.0 else 0.0
            cells.append(
                IdentityCell(
                    k=k,
                    ell=j,
                    lhs=lhs,
                    rhs=rhs,
                    direct=direct,
                    abs_err=abs(lhs - rhs),
                    generic=generic,
                )
            )
    return IdentityReport(cells=tuple(cells), n=n)


def resolvent_diag_ratio_check(matrix: SymmetricMatrix, j: int, z) -> ResolventCheck:
    """Compare det(M_j - z)/det(A - z) with sum_k |v_{k,j}|^2/(lam_k - z).

    z must stay at least POLE_ATOL away from sigma(A); violations raise
    PoleProximityError naming the offending eigenvalue.  Determinants go
    through LU with partial pivoting (slogdet) in log form.
    """
    z = complex(z)
    dec = hermitian_eigensolve(matrix)
    lam = dec.eigenvalues
    dist = np.abs(lam - z)
    nearest = int(np.argmin(dist))
    if dist[nearest] < POLE_ATOL:
        raise PoleProximityError(z, float(lam[nearest]))
    n = matrix.n
    minor = principal_minor(matrix, j)
    eye_m = np.eye(n - 1, dtype=np.complex128)
    eye_a = np.eye(n, dtype=np.complex128)
    sign_m, logdet_m = np.linalg.slogdet(minor.data - z * eye_m)
    sign_a, logdet_a = np.linalg.slogdet(matrix.data - z * eye_a)
    lhs = complex(sign_m / sign_a * np.exp(logdet_m - logdet_a))
    weights = np.abs(dec.eigenvectors[j - 1, :]) ** 2
    rhs = complex(np.sum(weights / (lam - z)))
    residual = abs(lhs - rhs)
    scale = max(1.0, abs(lhs), abs(rhs))
    return ResolventCheck(z=z, j=j, lhs=lhs, rhs=rhs, residual=residual, scale=scale)


def write_identity_csv(report: IdentityReport, fh: TextIO) -> None:
    fh.write("k,ell,lhs,rhs,direct,abs_err,generic\n")
    for c in report.cells:
        fh.write(
            f"{c.k},{c.ell},{c.lhs:.17g},{c.rhs:.17g},{c.direct:.17g},"
            f"{c.abs_err:.17g},{str(c.generic).lower()}\n"
        )


def random_hermitian(n: int, rng: np.random.Generator, complex_entries: bool = True) -> SymmetricMatrix:
    """Gaussian Hermitian sample, used by the CLI random suite and tests."""
    x = rng.standard_normal((n, n))
    if complex_entries:
        y = rng.standard_normal((n, n))
        a = x + 1j * y
    else:
        a = x.astype(np.complex128)
    return SymmetricMatrix.from_array((a + a.conj().T) / 2.0)
