"""Exception hierarchy.

Every error names the offending element (vertex, face, edge, config key)
so failures on large meshes stay debuggable.
"""


class MeshNetError(Exception):
    """Base class for all library errors."""


class MeshParseError(MeshNetError):
    """Mesh file could not be parsed under the declared format."""


class MeshValidationError(MeshNetError):
    """Mesh violates a structural invariant."""


class IndexRangeError(MeshValidationError):
    def __init__(self, face, index, n_vertices):
        self.face = face
        self.index = index
        super().__init__(
            f"face {face} references vertex {index}, but mesh has {n_vertices} vertices"
        )


class DegenerateFaceError(MeshValidationError):
    def __init__(self, face, reason="repeated vertex indices"):
        self.face = face
        super().__init__(f"face {face} is degenerate: {reason}")


class NonManifoldError(MeshValidationError):
    def __init__(self, edge, count):
        self.edge = tuple(edge)
        super().__init__(f"edge {self.edge} is shared by {count} faces (at most 2 allowed)")


class OrientationError(MeshValidationError):
    def __init__(self, edge):
        self.edge = tuple(edge)
        super().__init__(
            f"directed edge {self.edge} appears in more than one face: inconsistent orientation"
        )


class NonManifoldVertexError(MeshValidationError):
    def __init__(self, vertex):
        self.vertex = vertex
        super().__init__(f"vertex {vertex}: incident faces do not form a single fan")


class DegreeError(MeshValidationError):
    def __init__(self, vertex, degree):
        self.vertex = vertex
        super().__init__(f"vertex {vertex} has degree {degree} (minimum is 2)")


class DegenerateNormalError(MeshNetError):
    def __init__(self, vertex):
        self.vertex = vertex
        super().__init__(f"vertex {vertex}: area-weighted normal sum is zero")


class UndefinedLogMapError(MeshNetError):
    def __init__(self, p, q=None):
        self.p, self.q = p, q
        where = f"{p} -> {q}" if q is not None else str(p)
        super().__init__(f"log map undefined for {where}: offset is parallel to the normal")


class FrameConstructionError(MeshNetError):
    def __init__(self, vertex):
        self.vertex = vertex
        super().__init__(f"vertex {vertex}: no neighbor with a defined log map")


class AmbiguousTransportError(MeshNetError):
    def __init__(self, p, q):
        self.p, self.q = p, q
        super().__init__(f"edge {q} -> {p}: normals are antipodal, transport rotation is ambiguous")


class ZeroDistanceError(MeshNetError):
    def __init__(self, p, q):
        self.p, self.q = p, q
        super().__init__(f"vertices {p} and {q} are coincident")


class FeatureTypeError(MeshNetError):
    """Feature type mismatch between a layer and its input."""


class FrameBindingError(MeshNetError):
    """Feature field and edge geometry were built from different frame fields."""


class EmptyNeighborhoodError(MeshNetError):
    def __init__(self, vertex):
        self.vertex = vertex
        super().__init__(f"vertex {vertex} has no neighbors")


class AutodiffError(MeshNetError):
    """Misuse of the reverse-mode engine (non-scalar root, repeated backward)."""


class ConfigError(MeshNetError):
    """Run configuration failed schema validation."""


class CheckpointError(MeshNetError):
    """Checkpoint file is malformed or does not match the config."""


class TrainingDivergedError(MeshNetError):
    def __init__(self, epoch, loss):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"loss became non-finite ({loss}) at epoch {epoch}")
