"""Initial geometric feature fields: relative-tangent, local-position, raw XYZ.

Three input families with different symmetry behavior:

* ``reltan`` -- per-vertex tangent vectors summarizing the neighbor
  directions, weighted by powers of the neighbor distances.  Equivariant to
  global rotations and invariant to translations and scalings; one
  (rho0 + rho1) group per relative power, rho0 slot zero.
* ``get`` -- the vertex position expressed in its own frame
  (rho0 = normal projection, rho1 = tangent projections).  Gauge-covariant
  but sensitive to translation and scaling.
* ``xyz`` -- raw coordinates as three scalar channels; gauge-insensitive and
  sensitive to every ambient transform.

No normalization is applied to any family.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ZeroDistanceError
from .mesh import Mesh
from .representations import FeatureType
from .tangent import FrameField

__all__ = [
    "GeometricFeatureField",
    "RelTanConfig",
    "reltan_features",
    "reltan_vectors",
    "get_features",
    "xyz_features",
    "compute_features",
    "feature_type_for",
    "reltan_scaling_statistics",
]


@dataclass
class GeometricFeatureField:
    """Per-vertex coordinate vectors of a declared type, bound to a gauge.

    ``frame_token`` records which FrameField the coordinates are valid in;
    layers refuse fields whose binding does not match their edge geometry.
    """

    ftype: FeatureType
    values: np.ndarray
    frame_token: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] != self.ftype.dim:
            raise ValueError(
                f"feature array shape {self.values.shape} does not match "
                f"type {self.ftype} (dim {self.ftype.dim})"
            )

    @property
    def n_vertices(self):
        return self.values.shape[0]


@dataclass(frozen=True)
class RelTanConfig:
    """Relative powers used for the tangent summary (one channel group each)."""

    powers: tuple = (0.7,)

    def __post_init__(self):
        if not self.powers:
            raise ValueError("need at least one relative power")


def reltan_vectors(mesh: Mesh, frames: FrameField, power: float) -> np.ndarray:
    """Raw 3D tangent summary vectors for one relative power.

    For a vertex p with neighbors q, the vector is

        N_p^{-3/2} * sum_q proj_p((q-p)/|q-p|) * S_p / |q-p|^{power-1}

    with ``S_p = sum_q |q-p|^{power-1}`` and ``proj_p`` the projection onto
    the tangent plane.  Distances enter only through the power, so the
    result is scale free; directions are relative, so it is translation
    free.

    Raises
    ------
    ZeroDistanceError
        If a neighbor coincides with its center vertex.
    """
    v = mesh.vertices
    src, dst = mesh.edge_src, mesh.edge_dst
    d = v[src] - v[dst]
    dist = np.linalg.norm(d, axis=1)
    zero = np.where(dist <= 0.0)[0]
    if zero.size:
        e = int(zero[0])
        raise ZeroDistanceError(int(dst[e]), int(src[e]))
    n = frames.normals[dst]
    tang = d - n * np.einsum("ij,ij->i", n, d)[:, None]
    unit = tang / dist[:, None]  # proj of the unit offset, length <= 1

    w = dist ** (power - 1.0)
    wsum = np.zeros(mesh.n_vertices)
    np.add.at(wsum, dst, w)
    contrib = unit * (wsum[dst] / w)[:, None]
    out = np.zeros((mesh.n_vertices, 3))
    np.add.at(out, dst, contrib)
    return out * mesh.degrees[:, None] ** -1.5


def reltan_features(mesh: Mesh, frames: FrameField,
                    cfg: RelTanConfig = RelTanConfig()) -> GeometricFeatureField:
    """Tangent-summary features, one (rho0 + rho1) group per power.

    The rho1 slot holds the frame coordinates of the summary vector; the
    rho0 slot is identically zero.
    """
    groups = []
    for r in cfg.powers:
        v3 = reltan_vectors(mesh, frames, r)
        coords = np.stack(
            [np.zeros(mesh.n_vertices),
             np.einsum("ij,ij->i", v3, frames.e1),
             np.einsum("ij,ij->i", v3, frames.e2)],
            axis=1,
        )
        groups.append(coords)
    ftype = len(cfg.powers) * FeatureType([0, 1])
    return GeometricFeatureField(ftype, np.concatenate(groups, axis=1), frames.token)


def get_features(mesh: Mesh, frames: FrameField) -> GeometricFeatureField:
    """Vertex position in its own local frame: (p.n, p.e1, p.e2)."""
    v = mesh.vertices
    coords = np.stack(
        [np.einsum("ij,ij->i", v, frames.normals),
         np.einsum("ij,ij->i", v, frames.e1),
         np.einsum("ij,ij->i", v, frames.e2)],
        axis=1,
    )
    return GeometricFeatureField(FeatureType([0, 1]), coords, frames.token)


def xyz_features(mesh: Mesh, frames: FrameField | None = None) -> GeometricFeatureField:
    """Raw coordinates as three scalar channels.

    Scalar-only fields are gauge independent; without ``frames`` the field
    binds to any gauge (token -1).
    """
    token = frames.token if frames is not None else -1
    return GeometricFeatureField(FeatureType([0, 0, 0]), mesh.vertices.copy(), token)


def feature_type_for(family: str, powers=(0.7,)) -> FeatureType:
    if family == "reltan":
        return len(tuple(powers)) * FeatureType([0, 1])
    if family == "get":
        return FeatureType([0, 1])
    if family == "xyz":
        return FeatureType([0, 0, 0])
    raise ValueError(f"unknown feature family {family!r}")


def compute_features(family: str, mesh: Mesh, frames: FrameField,
                     powers=(0.7,)) -> GeometricFeatureField:
    """Dispatch on family name (``reltan`` honors ``powers``)."""
    if family == "reltan":
        return reltan_features(mesh, frames, RelTanConfig(tuple(powers)))
    if family == "get":
        return get_features(mesh, frames)
    if family == "xyz":
        return xyz_features(mesh, frames)
    raise ValueError(f"unknown feature family {family!r}")


def reltan_scaling_statistics(degree: int, samples: int, rng_seed: int = 0,
                              relative_power: float = 0.7,
                              radial: str = "absnormal"):
    """Monte-Carlo mean squared norm of the tangent summary at one degree.

    Neighbor offsets are sampled i.i.d. in the tangent plane with a uniform
    angular component and a radial component that is either ``|N(0,1)|``
    (default) or the ``"unit"`` point mass.  Returns a dict with the
    normalized (degree^{-3/2} factor applied) and unnormalized mean squared
    norms; the unnormalized one grows like degree cubed.
    """
    if degree < 2:
        raise ValueError("degree must be >= 2")
    rng = np.random.default_rng(rng_seed)
    phi = rng.uniform(0.0, 2.0 * np.pi, size=(samples, degree))
    if radial == "absnormal":
        rad = np.abs(rng.standard_normal((samples, degree)))
        rad = np.maximum(rad, 1e-12)
    elif radial == "unit":
        rad = np.ones((samples, degree))
    else:
        raise ValueError(f"unknown radial law {radial!r}")
    ux, uy = np.cos(phi), np.sin(phi)
    w = rad ** (relative_power - 1.0)
    wsum = w.sum(axis=1, keepdims=True)
    scale = wsum / w
    vx = (ux * scale).sum(axis=1)
    vy = (uy * scale).sum(axis=1)
    sq = vx**2 + vy**2
    unnormalized = float(np.mean(sq))
    return {
        "degree": degree,
        "samples": samples,
        "relative_power": relative_power,
        "unnormalized_mean_square": unnormalized,
        "normalized_mean_square": unnormalized / degree**3,
    }
