"""Exception hierarchy.

Configuration problems (bad ids, invalid parameters, points outside the model
domain) derive from :class:`ConfigError`; numerical failures (solver
non-convergence, degenerate geometry, grids that miss mass, sampler envelopes)
derive from :class:`NumericalError`. The CLI maps the two families to exit
codes 1 and 2.
"""


class LcbvmError(Exception):
    """Base class for all package errors."""


class ConfigError(LcbvmError):
    pass


class CatalogError(ConfigError):
    """Unknown model or constraint shape id."""


class DomainError(ConfigError):
    """A parameter lies outside the model's open domain."""


class NumericalError(LcbvmError):
    pass


class SolverError(NumericalError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


class GeometryError(NumericalError):
    pass


class DegenerateGeometryError(GeometryError):
    """Strict complementarity fails (some multiplier on the face is zero)."""


class RegimeError(NumericalError):
    """First-order optimality or regime/frame consistency is violated."""


class GridError(NumericalError):
    """Quadrature grid does not capture enough of the probability mass."""


class EnvelopeError(NumericalError):
    """Rejection envelope is too loose or exponential envelope is invalid."""


class CertificateUnavailable(NumericalError):
    """Properness margin is not positive at the probed radii."""
