"""Exception hierarchy shared by all koopnnm modules."""


class KoopNNMError(Exception):
    """Base class for every error raised by koopnnm."""


class ContractError(KoopNNMError, ValueError):
    """An argument violates an operation's precondition."""


class DefectiveJacobianError(KoopNNMError):
    """The Jacobian is not (numerically) diagonalizable."""


class UnstableEquilibriumError(KoopNNMError):
    """The origin is not asymptotically stable: some Re(lambda) >= 0."""


class ResonanceError(KoopNNMError):
    """A combination k . lambda coincides with an eigenvalue.

    Attributes
    ----------
    index : tuple
        The offending exponent pair ``(k1, k2)``.
    eigenvalue_index : int
        Index ``j`` of the eigenvalue hit by the combination.
    gap : float
        ``|k . lambda - lambda_j|``.
    """

    def __init__(self, message, index=None, eigenvalue_index=None, gap=None):
        super().__init__(message)
        self.index = index
        self.eigenvalue_index = eigenvalue_index
        self.gap = gap


class InternalConsistencyError(KoopNNMError):
    """A mode table produced a non-real state on the real slice."""


class NotOnManifoldError(KoopNNMError):
    """A target point could not be matched by the manifold parametrization."""

    def __init__(self, message, uv=None, residual=None):
        super().__init__(message)
        self.uv = uv
        self.residual = residual


class DivergentExpansionError(KoopNNMError):
    """The truncated expansion fails validation even at tiny amplitude."""


class StiffnessError(KoopNNMError):
    """The adaptive integrator's step size underflowed."""


class DegenerateReferenceError(KoopNNMError, ValueError):
    """A reference trajectory has zero variance."""
