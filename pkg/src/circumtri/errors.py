"""Exception types shared across the package."""


class CircumtriError(Exception):
    """Base class for all package errors."""


class DuplicatePoints(CircumtriError):
    """Point cloud contains coincident points.

    Carries the offending index pairs in ``.pairs``.
    """

    def __init__(self, pairs):
        self.pairs = list(pairs)
        shown = ", ".join(f"{i}=={j}" for i, j in self.pairs[:8])
        more = "" if len(self.pairs) <= 8 else f" (+{len(self.pairs) - 8} more)"
        super().__init__(f"duplicate points: {shown}{more}")


class DegeneratePatch(CircumtriError):
    """Nearest-neighbor distance is zero; the patch cannot be normalized."""


class DegenerateTriangle(CircumtriError):
    """Triangle is too close to collinear for a stable circumcenter."""


class NoPositives(CircumtriError):
    """A training batch contains no positive anchor cells; resample."""


class NonFiniteLoss(CircumtriError):
    """Loss or gradient became NaN/Inf during training."""


class EmptyMesh(CircumtriError):
    """Mesh has no face with positive area."""


class ParseError(CircumtriError):
    """Malformed mesh or point-cloud file."""

    def __init__(self, path, line, message):
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


class IndexOutOfRange(ParseError):
    """Face references a vertex index outside the vertex table."""


class CheckpointError(CircumtriError):
    """Checkpoint file is malformed or inconsistent with the expected config."""
