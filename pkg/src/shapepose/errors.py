"""Exception hierarchy shared by all shapepose modules."""

from __future__ import annotations


class ShapePoseError(Exception):
    """Base class for all errors raised by this package."""


# ---------------------------------------------------------------------------
# pose
# ---------------------------------------------------------------------------

class DegenerateInput(ShapePoseError):
    """Rotation recovery input is rank deficient or otherwise unusable."""


class LayoutMismatch(ShapePoseError):
    """Pose-parameter vector length disagrees with the statistics layout."""


class DegenerateStats(ShapePoseError):
    """A pose component is constant across samples, so sigma would be zero."""


# ---------------------------------------------------------------------------
# pointmap
# ---------------------------------------------------------------------------

class DimensionMismatch(ShapePoseError):
    """Paired grids (depth/mask/pointmap) have inconsistent shapes."""


class TooFewPoints(ShapePoseError):
    """Not enough valid points for the requested statistic."""


class ZeroScale(ShapePoseError):
    """Object scale collapsed to zero (all points coincide)."""


class EmptyMask(ShapePoseError):
    """Mask has no true pixels."""


# ---------------------------------------------------------------------------
# voxel
# ---------------------------------------------------------------------------

class OutOfBounds(ShapePoseError):
    """Voxel coordinate falls outside the grid resolution."""


class MalformedLayout(ShapePoseError):
    """Packed feature channel layout does not decode."""


# ---------------------------------------------------------------------------
# flow
# ---------------------------------------------------------------------------

class ShapeMismatch(ShapePoseError):
    """Flow states (or velocities) have different shapes."""


class NonFiniteState(ShapePoseError):
    """An Euler step produced NaN or infinity."""


# ---------------------------------------------------------------------------
# mesh / metrics
# ---------------------------------------------------------------------------

class DegenerateMesh(ShapePoseError):
    """Mesh has zero surface area (or no triangles)."""


class EmptyCloud(ShapePoseError):
    """Point cloud is empty where points are required."""


class NonPositiveDiameter(ShapePoseError):
    """A reference diameter must be strictly positive."""


class DegenerateGeometry(ShapePoseError):
    """Point set is collinear (or too small) for rigid alignment."""


class EmptyAmodal(ShapePoseError):
    """Amodal mask has no pixels, occlusion fraction undefined."""


class MaskInconsistency(ShapePoseError):
    """Visible mask contains pixels outside the amodal mask."""


# ---------------------------------------------------------------------------
# selection
# ---------------------------------------------------------------------------

class MissingCameraPose(ShapePoseError):
    """Cross-view selection requested but a view has no camera pose."""


# ---------------------------------------------------------------------------
# ingest / harness
# ---------------------------------------------------------------------------

class MissingFile(ShapePoseError):
    """A required dataset file does not exist; message names the path."""


class MalformedRecord(ShapePoseError):
    """A dataset or prediction record failed to parse; message carries context."""


class UnitMismatch(ShapePoseError):
    """Depth scale missing, raw depth units cannot be converted to meters."""


class UnsupportedMeshFormat(ShapePoseError):
    """Mesh file extension or encoding is not supported."""


class IoError(ShapePoseError):
    """Report emission failed to write."""


class AggregateMismatch(ShapePoseError):
    """Report aggregates do not match recomputation from instance rows."""
