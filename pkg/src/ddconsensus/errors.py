"""Exception types raised across the toolkit."""


class ConsensusToolkitError(Exception):
    """Base class for all toolkit errors."""


class GraphShapeError(ConsensusToolkitError):
    """Adjacency matrix is not square or has a nonzero diagonal."""


class NegativeWeightError(ConsensusToolkitError):
    """Adjacency matrix contains a negative edge weight."""


class LeaderInEdgeError(ConsensusToolkitError):
    """Leader has incoming edges but a leader-rooted graph was requested."""


class EigenFailureError(ConsensusToolkitError):
    """Eigendecomposition of a graph matrix did not converge."""


class HorizonTooShortError(ConsensusToolkitError):
    """Requested data horizon cannot satisfy the rank requirement."""


class DimensionMismatchError(ConsensusToolkitError):
    """Operands have inconsistent shapes."""


class RankDeficientError(ConsensusToolkitError):
    """Stacked input/state data matrix does not have full row rank."""


class InfeasibleError(ConsensusToolkitError):
    """A synthesis program has no solution for the given data."""


class NumericalFailureError(ConsensusToolkitError):
    """The solver broke down without a feasibility verdict."""


class NoConvergenceError(ConsensusToolkitError):
    """A fixed-point iteration hit its iteration cap."""


class SubdominantModulusError(ConsensusToolkitError):
    """Averaging matrix has sub-dominant modulus >= 1; gains cannot synchronize."""


class NonPositiveSpectrumError(ConsensusToolkitError):
    """Follower Laplacian block has a non-positive eigenvalue."""


class RegionNotDefiniteError(ConsensusToolkitError):
    """Consensus-region scaling matrix is not positive definite."""


class ConfigError(ConsensusToolkitError):
    """Experiment configuration is invalid."""
