"""Exception types shared across the package.

Every error that a caller is expected to branch on gets its own class; anything
else is a plain ValueError at the raise site.
"""


class S2MError(Exception):
    """Base class for package-specific failures."""


class NonHermitianError(S2MError):
    """Input matrix violates the Hermiticity tolerance."""


class JacobiConvergenceError(S2MError):
    """Eigensolver exhausted its sweep budget.

    Carries the remaining off-diagonal Frobenius norm so callers can report
    how far from convergence the sweep stopped.
    """

    def __init__(self, offdiag: float, sweeps: int):
        self.offdiag = offdiag
        self.sweeps = sweeps
        super().__init__(
            f"Jacobi sweep budget exhausted after {sweeps} sweeps; "
            f"off-diagonal norm {offdiag:.3e}"
        )


class PoleProximityError(S2MError):
    """Requested z sits too close to a spectral point."""

    def __init__(self, z, nearest, message=None):
        self.z = z
        self.nearest = nearest
        super().__init__(
            message or f"z={z!r} is within tolerance of eigenvalue {nearest!r}"
        )


class OverflowIntegrationError(S2MError):
    """Solution state left the representable range during integration.

    For strongly negative z, use the scaled (log-carried) evaluation path
    instead of a raw trace.
    """


class IncompatibleTracesError(S2MError):
    """Two solution traces do not share spectral parameter and grid."""


class BracketingError(S2MError):
    """Eigenvalue search could not establish, refine or certify a bracket.

    Carries the 1-based index and the bracket state at failure.
    """

    def __init__(self, index: int, lo: float, hi: float, message=None):
        self.index = index
        self.lo = lo
        self.hi = hi
        detail = f": {message}" if message else ""
        super().__init__(f"eigenvalue {index} bracket [{lo!r}, {hi!r}]{detail}")


class GuardError(S2MError):
    """A guarded quantity could not be made safe.

    Raised when the spectral shift guard cannot produce a zero-free
    configuration, or when a division pivot (diagonal Green's value)
    vanishes.
    """


class WindowMismatchError(S2MError):
    """Two spectra do not share a usable truncation window."""


class ConfigError(S2MError):
    """CLI configuration failed schema validation or semantic checks."""
