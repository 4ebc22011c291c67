"""Exception types raised by the geometry and groupoid machinery."""


class GeometryError(Exception):
    """Base class for all numerical-geometry failures."""


# -- manifold / chart level ---------------------------------------------------

class CaptureRadiusExceeded(GeometryError):
    """No member point found within the capture radius of the input."""


class ChartEscape(GeometryError):
    """Geodesic integration left the reach of every available chart."""


class StepCountInvalid(GeometryError):
    """Integrator asked to run with a non-positive number of steps."""


class RankDeficient(GeometryError):
    """A differential has lower rank than the construction requires."""


class SamplingFailure(GeometryError):
    """Could not draw the requested number of valid samples."""


# -- groupoid level -----------------------------------------------------------

class InvalidParams(GeometryError):
    """Builder parameters are inconsistent or incomplete."""


class RankDeficientSubmersion(RankDeficient):
    """The map supplied as a submersion has a rank-deficient Jacobian."""


class NotComposable(GeometryError):
    """Arrow sources/targets do not match within the composability tolerance."""


class NotSaturated(GeometryError):
    """A sampled orbit escapes the submanifold claimed to be saturated."""


# -- nerve level --------------------------------------------------------------

class IndexOutOfRange(GeometryError, IndexError):
    """Face or degeneracy index outside the simplicial range."""


class UnsupportedLevel(GeometryError):
    """No symmetric-action construction available at this nerve level."""


class NotCommonSource(GeometryError):
    """Tuple entries do not share a source point."""


# -- metric level -------------------------------------------------------------

class NotRiemannianSubmersion(GeometryError):
    """The submersion fails the equidistant-fibers check at tolerance."""


class QuadratureInvalid(GeometryError):
    """Quadrature weights or nodes violate their invariants."""


class NotCompactGroup(GeometryError):
    """Averaging requested over a group with no finite quadrature."""


class PushforwardInconsistent(GeometryError):
    """The averaged metric does not descend along the gauge projection."""


class FaceNotSubmersive(GeometryError):
    """Requested face map is not a Riemannian submersion for the candidate."""


# -- linearization level ------------------------------------------------------

class LiftFailure(RankDeficient):
    """Source differential too degenerate to lift a normal vector."""


class RadiusTooLarge(GeometryError):
    """Requested tube radius exceeds the probed injectivity estimate."""


class NotSProper(GeometryError):
    """Operation requires the s-proper flag, which this groupoid lacks."""


# -- foliation level ----------------------------------------------------------

class NotLeafwise(GeometryError):
    """Path velocity has transverse components beyond tolerance."""


# -- cli level ----------------------------------------------------------------

class ConfigParseError(GeometryError):
    """Scenario configuration file could not be parsed."""


class UnknownBuilder(GeometryError):
    """Scenario names a builder kind that is not registered."""
