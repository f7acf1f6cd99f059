"""The five transformation families and their pushforwards.

Ambient similarity transforms (rotation, translation, positive scaling) act
on vertex positions; gauges rotate per-vertex frames in place; permutations
relabel vertices.  Pushforwards carry frames and feature coordinate vectors
along so that equivariance statements become executable equalities:

* rotations rotate frames, translations and scalings leave them unchanged
  (frames stay unit length);
* feature coordinate vectors are copied verbatim under ambient transforms
  (the frames carry the geometry) and row-permuted under permutations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .features import GeometricFeatureField
from .mesh import Mesh
from .tangent import FrameField

__all__ = [
    "AmbientTransform",
    "Permutation",
    "TransformSuite",
    "apply_ambient",
    "pushforward_frames",
    "pushforward_features",
    "apply_permutation",
    "permute_field",
    "random_rotation",
    "random_transform_suite",
]


@dataclass(frozen=True)
class AmbientTransform:
    """p -> scale * rotation @ p + translation."""

    rotation: np.ndarray = None
    translation: np.ndarray = None
    scale: float = 1.0

    def __post_init__(self):
        R = np.eye(3) if self.rotation is None else np.asarray(self.rotation, float)
        x = np.zeros(3) if self.translation is None else np.asarray(self.translation, float)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", x)
        if R.shape != (3, 3) or np.abs(R.T @ R - np.eye(3)).max() > 1e-10:
            raise ValueError("rotation must be 3x3 orthogonal")
        if np.linalg.det(R) < 0:
            raise ValueError("rotation must have determinant +1")
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    def apply(self, points: np.ndarray) -> np.ndarray:
        return self.scale * points @ self.rotation.T + self.translation

    def compose(self, first: "AmbientTransform") -> "AmbientTransform":
        """Transform equal to applying ``first``, then ``self``."""
        return AmbientTransform(
            rotation=self.rotation @ first.rotation,
            translation=self.scale * self.rotation @ first.translation + self.translation,
            scale=self.scale * first.scale,
        )


@dataclass(frozen=True)
class Permutation:
    """Bijection on vertex indices; ``forward[old] = new``."""

    forward: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.forward, dtype=np.int64)
        object.__setattr__(self, "forward", f)
        inv = np.argsort(f)
        if not np.array_equal(f[inv], np.arange(f.size)):
            raise ValueError("not a permutation")
        object.__setattr__(self, "inverse", inv)

    def permute_rows(self, arr: np.ndarray) -> np.ndarray:
        """out[forward[i]] = arr[i]"""
        return np.asarray(arr)[self.inverse]

    def unpermute_rows(self, arr: np.ndarray) -> np.ndarray:
        """out[i] = arr[forward[i]]"""
        return np.asarray(arr)[self.forward]


def apply_ambient(mesh: Mesh, t: AmbientTransform) -> Mesh:
    """Transformed mesh; combinatorics (faces, stored rings) unchanged."""
    return mesh.with_vertices(t.apply(mesh.vertices))


def pushforward_frames(frames: FrameField, t: AmbientTransform,
                       mesh_t: Mesh) -> FrameField:
    """Frames on the transformed mesh: rotated axes, unit length kept."""
    R = t.rotation
    return FrameField(mesh_t, frames.normals @ R.T, frames.e1 @ R.T,
                      frames.e2 @ R.T)


def pushforward_features(features: GeometricFeatureField,
                         new_frames: FrameField) -> GeometricFeatureField:
    """Same coordinate vectors, rebound to the pushed frames."""
    return GeometricFeatureField(features.ftype, features.values.copy(),
                                 new_frames.token)


def apply_permutation(mesh: Mesh, perm: Permutation) -> Mesh:
    """Relabel vertices, preserving stored neighbor-ring order exactly."""
    new_vertices = perm.permute_rows(mesh.vertices)
    new_faces = perm.forward[mesh.faces]
    new_neighbors = [None] * mesh.n_vertices
    for p in range(mesh.n_vertices):
        new_neighbors[perm.forward[p]] = perm.forward[mesh.neighbors[p]]
    return Mesh(new_vertices, new_faces, neighbors=new_neighbors)


def permute_field(features: GeometricFeatureField, perm: Permutation,
                  frame_token) -> GeometricFeatureField:
    return GeometricFeatureField(
        features.ftype, perm.permute_rows(features.values), frame_token
    )


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform SO(3) sample via a normalized quaternion."""
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


@dataclass(frozen=True)
class TransformSuite:
    """One sample of every transformation family for a fixed vertex count."""

    gauge: np.ndarray
    ambient: AmbientTransform
    perm: Permutation


def random_transform_suite(n_vertices: int, rng, translation_range: float = 10.0,
                           scale_min: float = 0.1, scale_max: float = 10.0) -> TransformSuite:
    """Gauge angles uniform in (-pi, pi], uniform rotation, uniform box
    translation, log-uniform scale, uniform permutation."""
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    gauge = rng.uniform(-np.pi, np.pi, n_vertices)
    ambient = AmbientTransform(
        rotation=random_rotation(rng),
        translation=rng.uniform(-translation_range, translation_range, 3),
        scale=float(np.exp(rng.uniform(np.log(scale_min), np.log(scale_max)))),
    )
    perm = Permutation(rng.permutation(n_vertices))
    return TransformSuite(gauge=gauge, ambient=ambient, perm=perm)
