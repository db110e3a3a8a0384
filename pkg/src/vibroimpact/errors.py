"""Exception hierarchy shared by all modules."""


class VibroImpactError(Exception):
    """Base class for every error raised by this package."""


class ModelError(VibroImpactError):
    """User-supplied model evaluated to something unusable (non-finite, bad r)."""


class IntegratorError(VibroImpactError):
    """Failure inside the event-driven integrator.

    ``trajectory`` carries whatever was computed before the failure, when
    available.
    """

    def __init__(self, message, *, t=None, z=None, trajectory=None):
        super().__init__(message)
        self.t = t
        self.z = z
        self.trajectory = trajectory


class StepSizeUnderflow(IntegratorError):
    pass


class BracketError(IntegratorError):
    pass


class DegenerateGrazing(IntegratorError):
    """Tangential contact with vanishing normal acceleration."""


class TransversalityError(VibroImpactError):
    """A Jacobian was requested across a contact whose approach speed is too small."""


class ConvergenceError(VibroImpactError):
    def __init__(self, message, *, iterate=None, residual=None):
        super().__init__(message)
        self.iterate = iterate
        self.residual = residual


class StructuralChangeError(ConvergenceError):
    """Impact count changed between Newton iterates."""


class ContinuationStall(VibroImpactError):
    def __init__(self, message, *, family=None):
        super().__init__(message)
        self.family = family


class OtherBifurcation(ContinuationStall):
    """Impact count jumped while the grazing velocity stayed bounded away from 0."""


class GrazingError(VibroImpactError):
    pass


class ConfigError(VibroImpactError):
    pass


class ExtrapolationError(GrazingError):
    """theta -> 0 extrapolation of the limit matrix did not settle."""

    def __init__(self, message, *, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics
