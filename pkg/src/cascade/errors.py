"""Exception hierarchy for the toolkit.

Three branches map onto distinct failure classes (and CLI exit codes):

* :class:`InputError` -- malformed files, bad indices, inconsistent
  arguments.  The caller handed us something unusable.
* :class:`NumericalError` -- a computation could not proceed (singular
  systems, degenerate neighborhoods).
* :class:`TopologyError` -- a mesh violates the manifold contract or two
  meshes are structurally incompatible.
"""


class CascadeError(Exception):
    """Base class for all toolkit errors."""


# ---------------------------------------------------------------------------
# input / argument errors


class InputError(CascadeError):
    """Bad input data or arguments (files, indices, parameter values)."""


class ParseError(InputError):
    """A text file could not be parsed.

    Carries the offending path and 1-based line number so command line
    users get a positioned message like ``mesh.obj:17: bad vertex line``.
    """

    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = int(line)
        self.message = message
        super().__init__(f"{self.path}:{self.line}: {message}")


class NonTriangulatableFace(ParseError):
    """A face record has fewer than three distinct vertex indices."""


class InvalidParams(InputError):
    """A parameter is outside its documented range."""


class IndexOutOfRange(InputError):
    """A vertex or triangle index does not exist in the mesh."""


class SizeMismatch(InputError):
    """An array argument has the wrong length for the mesh it pairs with."""


class DuplicateHandle(InputError):
    """The same vertex appears twice in a constraint set."""


class NoHandles(InputError):
    """A deformation was requested with an empty constraint set."""


class EdgeNotFound(InputError):
    """The queried vertex pair is not an edge of the mesh."""


class EmptyCoarse(InputError):
    """A coarse mesh with no triangles cannot anchor a correspondence."""


class CacheMismatch(InputError):
    """A correspondence cache does not match the meshes it is loaded for."""


class InsufficientLandmarks(InputError):
    """Alignment needs at least four non-coplanar landmarks."""


class SparseMapTooSmall(InputError):
    """A pose transfer map covers too little of the coarse mesh."""


class IncompatibleSourcePair(InputError):
    """Source rest and posed meshes do not share connectivity."""


# ---------------------------------------------------------------------------
# numerical errors


class NumericalError(CascadeError):
    """A computation failed for numerical reasons."""


class SingularSystem(NumericalError):
    """A linear system factorization failed even after weight clamping."""


class DegenerateNeighborhood(NumericalError):
    """A triangle and its entire edge neighborhood are degenerate."""


class ZeroLengthRestEdge(NumericalError):
    """A rest edge has zero length, so relative error is undefined."""


# ---------------------------------------------------------------------------
# topology errors


class TopologyError(CascadeError):
    """A mesh violates the manifold contract."""


class NonManifoldEdge(TopologyError):
    """An edge is shared by three or more triangles."""


class NonManifoldVertex(TopologyError):
    """A vertex joins two or more unconnected triangle fans."""


class InconsistentOrientation(TopologyError):
    """Two adjacent triangles disagree on winding direction."""


class Disconnected(TopologyError):
    """The mesh has more than one connected component."""


class DegenerateTriangle(TopologyError):
    """A triangle has repeated vertices or (numerically) zero area."""


class OpenMesh(TopologyError):
    """An operation that needs a closed surface got one with boundary."""


class IncompatibleCoarse(TopologyError):
    """A deformed coarse mesh does not match the one a binding refers to."""


class IncompatibleConnectivity(TopologyError):
    """Two meshes expected to share connectivity do not."""


# exit codes for the command line tool; 1 stays reserved for crashes
EXIT_INPUT = 2
EXIT_NUMERICAL = 3
EXIT_TOPOLOGY = 4


def exit_code_for(exc):
    """Map an exception to the command line exit code for its class."""
    if isinstance(exc, InputError):
        return EXIT_INPUT
    if isinstance(exc, NumericalError):
        return EXIT_NUMERICAL
    if isinstance(exc, TopologyError):
        return EXIT_TOPOLOGY
    return 1
