"""Exception types.

Every error carries a short ``code`` string so that the command line layer
can report failures without inspecting class names.
"""


class TomoMotionError(Exception):
    """Base class for all package errors."""

    code = "error"

    def __str__(self):
        msg = super().__str__()
        return f"{self.code}: {msg}" if msg else self.code


class InvalidArgumentError(TomoMotionError, ValueError):
    code = "invalid-argument"


class InconsistentDerivativeError(TomoMotionError, ValueError):
    code = "inconsistent-derivative"


class StepTooLargeError(TomoMotionError, RuntimeError):
    code = "step-too-large"


class InsufficientDataError(TomoMotionError, ValueError):
    code = "insufficient-data"


class TooFewPointsError(TomoMotionError, ValueError):
    code = "too-few-points"


class GenerationFailedError(TomoMotionError, RuntimeError):
    code = "generation-failed"


class DegenerateSetError(TomoMotionError, ValueError):
    code = "degenerate-set"


class SupportViolationError(TomoMotionError, ValueError):
    code = "support-violation"


class OutOfBandError(TomoMotionError, ValueError):
    code = "out-of-band"


class OutOfGridError(TomoMotionError, IndexError):
    code = "out-of-grid"


class DegeneratePairError(TomoMotionError, ValueError):
    code = "degenerate-pair"


class ParseError(TomoMotionError, ValueError):
    code = "parse-error"


class NoSolutionError(TomoMotionError, RuntimeError):
    code = "no-solution"


class InsufficientStencilError(TomoMotionError, ValueError):
    code = "insufficient-stencil"


class ModelViolationError(TomoMotionError, ValueError):
    code = "model-violation"


class DegenerateDataError(TomoMotionError, ValueError):
    code = "degenerate-data"


class ContinuityViolationError(TomoMotionError, RuntimeError):
    code = "continuity-violation"


class InadmissiblePhantomError(TomoMotionError, ValueError):
    code = "not-admissible"


class ConfigError(TomoMotionError, ValueError):
    code = "invalid-config"
