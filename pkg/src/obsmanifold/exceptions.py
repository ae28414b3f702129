"""Exception hierarchy.

Input problems derive from ``InputError`` (CLI exit code 2); numerical
breakdowns derive from ``NumericError`` (exit code 3).  Axiom failures are
never raised, they are reported.
"""


class ObsManifoldError(Exception):
    """Base class for all library errors."""


class InputError(ObsManifoldError, ValueError):
    pass


class NumericError(ObsManifoldError, ArithmeticError):
    pass


# numeric kernel
class DomainViolation(InputError):
    pass


class NonFinite(NumericError):
    pass


class NonDifferentiable(NumericError):
    pass


class NoConvergence(NumericError):
    pass


class ExpressionSyntaxError(InputError):
    pass


# observers and topologies
class DimensionMismatch(InputError):
    pass


class CarrierMismatch(InputError):
    pass


class NotDominated(InputError):
    pass


class BoundsNotOrdered(InputError):
    pass


class EmptyK1(InputError):
    pass


# charts and structures
class PreconditionFailed(InputError):
    pass


class WitnessIncomplete(InputError):
    pass


class FactorInvalid(InputError):
    pass


class FactorWitnessInvalid(InputError):
    pass


# maps
class NoTransitionRegistered(InputError):
    pass


class MissingMiddleChart(InputError):
    pass


class NotBijective(InputError):
    pass


class MissingInverseTransition(InputError):
    pass


class ProvenanceMissing(InputError):
    pass


class PreimageMismatch(NumericError):
    """Constructed preimage chart domain disagrees with enumeration."""


class NotDifferentiable(InputError):
    pass


class MissingTransition(InputError):
    pass


# tangent spaces
class ChartNotInFamily(InputError):
    pass


class FamilyMismatch(InputError):
    pass


class OutOfInterval(InputError):
    pass


class MissingRepresentative(InputError):
    pass


class BaseMismatch(InputError):
    pass


# dynamics
class NotFixedPoint(InputError):
    pass


class NotHyperbolic(InputError):
    pass


# instance files
class ParseError(InputError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "") + ": "
        super().__init__(where + message)


class UnresolvedReference(ParseError):
    pass


class NonTotalTable(ParseError):
    pass
