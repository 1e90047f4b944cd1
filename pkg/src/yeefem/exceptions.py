"""Exception hierarchy shared by all modules."""


class YeeFemError(Exception):
    """Base class for all errors raised by this package."""


class MeshParseError(YeeFemError):
    """Malformed mesh file content."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MeshValidationError(YeeFemError):
    """Mesh topology or geometry violates conformity requirements."""


class ConfigurationError(YeeFemError):
    """Invalid scenario or geometry configuration."""


class GeometryError(YeeFemError):
    """Degenerate element geometry."""


class DomainError(YeeFemError):
    """Evaluation point outside the admissible domain."""


class ContractError(YeeFemError):
    """Operands of incompatible shape or space."""


class ParameterError(YeeFemError):
    """Material weight or coefficient out of range."""


class SingularBlockError(YeeFemError):
    """A vertex block of a block-diagonal matrix is not positive definite."""

    def __init__(self, vertex, min_eigenvalue):
        self.vertex = vertex
        self.min_eigenvalue = min_eigenvalue
        super().__init__(
            f"block at vertex {vertex} is not positive definite "
            f"(smallest eigenvalue {min_eigenvalue:.3e})"
        )


class DivergenceError(YeeFemError):
    """Time stepping produced non-finite values or runaway energy."""

    def __init__(self, step, energy_trace=None, reason="non-finite solution"):
        self.step = step
        self.energy_trace = energy_trace
        super().__init__(f"{reason} at step {step}")


class CFLEstimationError(YeeFemError):
    """Eigenvalue iteration for the time-step bound did not converge."""

    def __init__(self, message, residual=None):
        self.residual = residual
        if residual is not None:
            message = f"{message} (residual {residual:.3e})"
        super().__init__(message)
