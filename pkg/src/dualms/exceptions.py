"""Exception hierarchy shared by every stage."""


class DualMSError(Exception):
    """Base class for all pipeline errors."""


class DomainEmpty(DualMSError):
    """The design domain has no measurable interior."""


class InvalidDomain(DualMSError, ValueError):
    """A domain description violates a structural invariant."""


class DegenerateInput(DualMSError, ValueError):
    """Point set is rank deficient even after the jitter retry."""


class ZeroFlow(DualMSError):
    """The averaged flow vector on an edge has zero norm."""


class PortConflict(DualMSError):
    """Ports of different fluids bind to the same graph vertex."""


class GraphDisconnected(DualMSError):
    """The constructed graph is not connected."""


class InfeasibleStart(DualMSError):
    """No feasible initial partition could be constructed."""


class NotFeasible(DualMSError, ValueError):
    """A partition handed to the optimizer violates the constraints."""


class TooLarge(DualMSError, ValueError):
    """Exhaustive enumeration requested on too many vertices."""


class EmptySkeleton(DualMSError, ValueError):
    """One of the two skeleton sample sets is empty."""


class NonFiniteLoss(DualMSError):
    """Training produced a NaN or infinite loss."""

    def __init__(self, iteration, message=None):
        self.iteration = iteration
        super().__init__(message or f"non-finite loss at iteration {iteration}")


class EmptySurface(DualMSError):
    """The requested level is never crossed inside the grid."""


class InvalidThickness(DualMSError, ValueError):
    """Half-thickness is below the resolvable minimum of the grid."""


class ThicknessTooLarge(DualMSError):
    """The wall disconnects one of the two channels."""


class MissingArtifact(DualMSError):
    """A stage prerequisite file is absent."""


class ConfigInvalid(DualMSError, ValueError):
    """The pipeline configuration failed validation."""
