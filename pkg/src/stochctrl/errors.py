"""Exception taxonomy shared across the package.

Every error raised deliberately by this package derives from
:class:`StochctrlError`, so callers can catch one base class. The CLI maps
subclasses to stable exit codes.
"""


class StochctrlError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(StochctrlError):
    """A matrix or vector has a shape inconsistent with the declared sizes."""


class NoiseMomentViolation(StochctrlError):
    """Noise law fails the zero-mean / unit-variance / probability checks."""


class SchemaError(StochctrlError):
    """Instance document or controller table violates the file schema."""


class UnsupportedReducedStructure(StochctrlError):
    """Rank-deficient noise input matrix outside the supported block form."""


class StructureUnsupported(StochctrlError):
    """Combination of optional system features that no criterion covers."""


class RankDeficient(StochctrlError):
    """A matrix required to have full rank does not."""


class BadUserM(StochctrlError):
    """User-supplied input transform fails its defining identity."""


class SingularPencil(StochctrlError):
    """The drift pencil that must be inverted for the backward form is singular."""


class EnumerationTooLarge(StochctrlError):
    """Exact path enumeration would exceed the configured node cap."""


class StageMismatch(StochctrlError):
    """A stage-indexed object is missing, or indexed outside its range."""


class AdaptednessViolation(StochctrlError):
    """A process value depends on noise not yet observable at its stage."""


class CriteriaDisagreement(StochctrlError):
    """Gramian and word-span criteria disagree; numerically inconsistent run."""


class SingularGramian(StochctrlError):
    """Steering Gramian is singular at the requested horizon."""


class TargetNotInS(StochctrlError):
    """Terminal value is not attainable by the homogeneous backward equation."""


class NoIntertwiner(StochctrlError):
    """No matrix X1 with H X = X1 H exists within tolerance."""


class SingularBlock(StochctrlError):
    """Block drift matrix of the reduced form is singular."""


class SingularPBracket(StochctrlError):
    """Bracket matrix of the delay compensator sequence is singular.

    Carries the stage index ``k`` at which the inversion failed, or ``None``
    when the failure cannot be attributed to a single stage.
    """

    def __init__(self, k, message=None):
        self.k = k
        if message is None:
            where = f"stage {k}" if k is not None else "the coupled stage system"
            message = f"delay compensator bracket singular at {where}"
        super().__init__(message)
