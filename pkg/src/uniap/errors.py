"""Error types raised by the library. Names match the documented error cases."""


class UniapError(Exception):
    """Base class for all library errors."""


class DegenerateFeature(UniapError):
    """A feature row has (near-)zero norm and cannot be normalized."""


class InvalidTemperature(UniapError):
    """Softmax temperature must be strictly positive."""


class EmptyMask(UniapError):
    """A token mask selects no tokens where at least one is required."""


class DimensionMismatch(UniapError):
    """Vector/matrix dimensions do not agree."""


class LengthMismatch(UniapError):
    """Two masks do not share the same grid length."""


class IndexOutOfRange(UniapError):
    """An edge references a node index outside [0, num_nodes)."""


class InvalidAssignment(UniapError):
    """A node-to-supernode map is not surjective onto its supernode range."""


class BoxOutOfRange(UniapError):
    """A crop box does not fit inside the token grid."""


class MalformedRle(UniapError):
    """Run-length counts are inconsistent with the declared grid."""


class MalformedJson(UniapError):
    """A JSON document does not match the expected mask schema."""


class BadMagic(UniapError):
    """A feature-map file does not start with the FMAP magic."""


class UnsupportedVersion(UniapError):
    """A feature-map file declares an unknown format version."""


class TruncatedPayload(UniapError):
    """A feature-map payload length disagrees with its header."""


class IoFailure(UniapError):
    """An underlying file operation failed."""


class InvalidConfig(UniapError):
    """A configuration value violates its invariant."""


class InvalidParams(UniapError):
    """Synthetic-data parameters are out of range."""


class GridMismatch(UniapError):
    """Predicted and ground-truth masks live on different grids."""
