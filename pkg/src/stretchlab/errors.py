"""Exception hierarchy shared by all stretchlab modules."""


class StretchlabError(Exception):
    """Base class for every error raised by this package."""


class AxisPointError(StretchlabError, ValueError):
    """A vector basis change was requested on the symmetry axis (r = 0)."""


class NearAxisError(StretchlabError, ValueError):
    """A velocity gradient was requested closer to the axis than ``r_floor``."""


class UnknownPresetError(StretchlabError, KeyError):
    pass


class OutOfDomainError(StretchlabError, ValueError):
    """The closed-form solution is only valid for 0 < r < 1."""


class NonFiniteError(StretchlabError, FloatingPointError):
    """An integration step produced NaN or Inf (dt too large, or a field bug)."""


class InverseVerificationFailed(StretchlabError):
    def __init__(self, residual, tol):
        self.residual = float(residual)
        self.tol = float(tol)
        super().__init__(f"inverse-flow round trip residual {self.residual:.3e} exceeds {self.tol:.3e}")


class MissingJacobianError(StretchlabError, ValueError):
    pass


class VertexBudgetExceeded(StretchlabError):
    """Ideal-line refinement wanted more vertices than the budget allows."""

    def __init__(self, budget, requested, snapshot_t=None):
        self.budget = int(budget)
        self.requested = int(requested)
        self.snapshot_t = snapshot_t
        super().__init__(f"line refinement needs {self.requested} vertices, budget is {self.budget}")


class InsufficientSpanError(StretchlabError, ValueError):
    pass


class QuadratureUnderResolved(StretchlabError):
    def __init__(self, coarse, fine):
        self.coarse = float(coarse)
        self.fine = float(fine)
        super().__init__(f"weak-form residual moved from {self.coarse:.3e} to {self.fine:.3e} under grid refinement")


class EnsembleFailure(StretchlabError):
    pass


class ConfigError(StretchlabError):
    pass


class ParseError(ConfigError):
    def __init__(self, message, line=None, key=None):
        self.line = line
        self.key = key
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key {key!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class ValidationError(ConfigError):
    def __init__(self, message, key=None):
        self.key = key
        super().__init__(message)
