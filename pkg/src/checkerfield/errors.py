"""Exception types raised across the package."""


class CheckerFieldError(Exception):
    """Base class for all checkerfield errors."""


class PointOutsideDomain(CheckerFieldError):
    """Evaluation point lies outside the field's domain box."""


class NotInImage(CheckerFieldError):
    """Point-mass data is not the corner transform of any box field."""


class NotAdmissible(CheckerFieldError):
    """Probe plane is (numerically) orthogonal to a coordinate axis."""


class NoAdmissiblePsi(CheckerFieldError):
    """No admissible companion direction found for the given direction."""


class Overflow(CheckerFieldError):
    """Probe exponent exceeds the floating-point range; rescale alpha."""


class MalformedTrace(CheckerFieldError):
    """Boundary trace is missing weights, normals or data columns."""


class OnSingularEdge(CheckerFieldError):
    """Gradient requested on a term-box edge where it is not defined."""


class BoxTouchesBoundary(CheckerFieldError):
    """A charged box violates the clearance to the trace boundary."""


class AllUnderflow(CheckerFieldError):
    """Every moment sample fell below the underflow guard."""


class DegenerateHull(CheckerFieldError):
    """Half-space intersection is empty within the domain box."""


class NoSeparation(CheckerFieldError):
    """No direction separates the vertex from the rest of the polytope."""


class SingularSystem(CheckerFieldError):
    """Linear system for vertex values or layer weights is singular."""


class ConditionViolated(CheckerFieldError):
    """Curl-pairing determinant condition failed for the probe pair."""


class InconsistentF3(CheckerFieldError):
    """Shared component recovered from the two curl systems disagrees."""


class PeelStalled(CheckerFieldError):
    """A peeling round recovered nothing while moments remained live."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class BadRadii(CheckerFieldError):
    """Layer radii are not strictly increasing positive numbers."""
