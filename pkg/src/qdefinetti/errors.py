"""Exception hierarchy shared by all modules."""


class QDFError(Exception):
    """Base class for library errors."""


class DimensionError(QDFError, ValueError):
    """Operand shapes do not agree."""


class NotHermitianError(QDFError, ValueError):
    """A routine requiring a Hermitian operand received something else."""


class SingularMatrixError(QDFError, ValueError):
    def __init__(self, eigenvalue: float, message: str | None = None):
        self.eigenvalue = float(eigenvalue)
        super().__init__(message or f"matrix is not positive definite (eigenvalue {eigenvalue:.3e})")


class UnsupportedShapeError(QDFError, ValueError):
    """Operation is defined only for identical tensor factors."""


class InvalidStateError(QDFError, ValueError):
    """Input is not a valid density operator / Bloch vector / distribution."""


class InvalidDimensionError(QDFError, ValueError):
    pass


class OvercompleteError(QDFError, ValueError):
    """Reconstruction requested from a POVM that is not minimal informationally complete."""


class ResourceLimitError(QDFError, RuntimeError):
    """Requested object would exceed the configured size limit."""


class ContractError(QDFError, ValueError):
    """A documented precondition was violated."""


class NoWitnessError(QDFError, ValueError):
    """Operator has no eigenvalue below the physicality threshold."""


class DegeneratePosteriorError(QDFError, RuntimeError):
    """Every particle assigns zero probability to the observed data."""


class PriorSupportError(QDFError, ValueError):
    """Prior puts no weight near the state generating the data."""


class NotCPError(QDFError, ValueError):
    """Choi matrix has a significantly negative eigenvalue."""


class IsometryError(QDFError, ValueError):
    """Kraus operators do not define an isometry (channel is not trace preserving)."""
