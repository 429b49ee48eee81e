"""Exception types shared across the package."""


class CurvCodecError(Exception):
    """Base class for all errors raised by curvcodec."""


class ZeroQuaternion(CurvCodecError):
    """Operation undefined for the zero quaternion."""


class ParseError(CurvCodecError):
    """Mesh file could not be parsed; message carries the line number."""


class NonManifold(CurvCodecError):
    """Mesh violates the oriented-manifold invariant; message names the edge."""


class TopologyError(CurvCodecError):
    """Mesh topology does not match what the operation requires."""


class DegenerateFace(CurvCodecError):
    """A face has (numerically) zero area."""


class BoundaryEdge(CurvCodecError):
    """Quantity is only defined on interior edges."""


class FoldedEdge(CurvCodecError):
    """Bending angle at an edge is too close to pi for tan(theta/2)."""


class ConnectivityMismatch(CurvCodecError):
    """Two meshes were expected to share an identical face list."""


class EmptyPointSet(CurvCodecError):
    """Point-set operation received an empty set."""


class FlipError(CurvCodecError):
    """Parameterization produced flipped triangles."""

    def __init__(self, message, count=0):
        super().__init__(message)
        self.count = count


class ConvergenceError(CurvCodecError):
    """Iterative solver did not converge; carries the last residual."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class CbrError(CurvCodecError):
    """Malformed ``.cbr`` tensor file."""


class BadMagic(CbrError):
    """File does not start with the CBR1 magic or has an unknown version."""


class Truncated(CbrError):
    """Payload shorter than the header dimensions promise."""


class DimOverflow(CbrError):
    """Header dimensions exceed the supported range."""


class DimensionMismatch(CurvCodecError):
    """Tensors have incompatible dimensions or domain kinds."""


class ConfigError(CurvCodecError):
    """Invalid pipeline configuration file or value."""
