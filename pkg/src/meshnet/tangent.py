"""Tangent-plane geometry: gauges, log maps, neighbor angles, transport.

Every vertex carries an orthonormal frame (e1, e2) of its tangent plane such
that (e1, e2, n) is positively oriented.  Features are expressed in these
frames; the per-edge angles computed here are what the equivariant layers
consume:

* ``theta``   -- angle of the neighbor's log-map image in the frame at p,
* ``transport`` -- frame-alignment angle after rotating the neighbor's
  tangent plane onto p's about the axis ``n_q x n_p``.

All angles live in (-pi, pi].
"""

from __future__ import annotations

import itertools

import numpy as np

from .errors import (
    AmbiguousTransportError,
    FrameConstructionError,
    UndefinedLogMapError,
)
from .mesh import Mesh, vertex_normals

__all__ = [
    "FrameField",
    "TransportData",
    "tangent_projector",
    "log_map",
    "build_frames",
    "theta_angle",
    "transport_angle",
    "transport_data",
    "regauge",
    "wrap_angle",
]

_ANTIPODAL_TOL = 1e-8
_PROJECTION_TOL = 1e-12

_token_counter = itertools.count()


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    a = np.asarray(a, dtype=np.float64)
    out = np.remainder(a + np.pi, 2.0 * np.pi) - np.pi
    out = np.where(out == -np.pi, np.pi, out)
    return out if out.ndim else float(out)


def tangent_projector(n):
    """Orthogonal projector I - n n^T onto the plane normal to unit ``n``."""
    n = np.asarray(n, dtype=np.float64)
    return np.eye(3) - np.outer(n, n)


def log_map(p, q, n_p):
    """Norm-preserving discrete logarithm of ``q`` at ``p``.

    Projects q - p onto the tangent plane at p and rescales to the original
    length, so ``||log_p(q)|| = ||q - p||``.

    Raises
    ------
    UndefinedLogMapError
        If q - p is parallel to the normal.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    d = q - p
    w = d - n_p * np.dot(n_p, d)
    wn = np.linalg.norm(w)
    dn = np.linalg.norm(d)
    if wn <= _PROJECTION_TOL * max(dn, 1e-300):
        raise UndefinedLogMapError(tuple(p), tuple(q))
    return dn * w / wn


class FrameField:
    """Per-vertex orthonormal gauges plus the normals they complete.

    Attributes
    ----------
    mesh : Mesh
    normals : ndarray, shape (V, 3)
    e1, e2 : ndarray, shape (V, 3)
        ``(e1, e2, n)`` is a positively oriented orthonormal basis at every
        vertex.
    token : int
        Identity of this gauge choice; feature fields and edge geometry
        record it so layers can reject mixed-gauge inputs.
    """

    def __init__(self, mesh, normals, e1, e2):
        self.mesh = mesh
        self.normals = np.asarray(normals, dtype=np.float64)
        self.e1 = np.asarray(e1, dtype=np.float64)
        self.e2 = np.asarray(e2, dtype=np.float64)
        self.token = next(_token_counter)
        for a in (self.normals, self.e1, self.e2):
            a.flags.writeable = False


def build_frames(mesh: Mesh, normals=None, strategy="first_neighbor",
                 reference=None) -> FrameField:
    """Construct a gauge at every vertex.

    ``first_neighbor`` aligns e1 with the log-map image of the first
    neighbor (in stored ring order) whose log map is defined.  ``custom``
    uses ``reference[p]`` as the reference neighbor instead.  In both cases
    ``e2 = n x e1``.

    Raises
    ------
    FrameConstructionError
        If every candidate neighbor of some vertex projects to zero.
    """
    if normals is None:
        normals = vertex_normals(mesh)
    V = mesh.n_vertices
    e1 = np.zeros((V, 3))
    for p in range(V):
        if strategy == "first_neighbor":
            candidates = mesh.neighbors[p]
        elif strategy == "custom":
            candidates = [reference[p]]
        else:
            raise ValueError(f"unknown frame strategy {strategy!r}")
        for q in candidates:
            try:
                v = log_map(mesh.vertices[p], mesh.vertices[int(q)], normals[p])
            except UndefinedLogMapError:
                continue
            e1[p] = v / np.linalg.norm(v)
            break
        else:
            raise FrameConstructionError(p)
    e2 = np.cross(normals, e1)
    return FrameField(mesh, normals, e1, e2)


def theta_angle(p, q, e1_p, e2_p, n_p):
    """Angle of log_p(q) measured from e1 toward e2."""
    v = log_map(p, q, n_p)
    return float(np.arctan2(np.dot(e2_p, v), np.dot(e1_p, v)))


def _rodrigues_apply(axis_unit, cos_a, sin_a, v):
    """Rotate ``v`` about ``axis_unit`` by the angle with given cos/sin."""
    return (
        v * cos_a
        + np.cross(axis_unit, v) * sin_a
        + axis_unit * np.dot(axis_unit, v) * (1.0 - cos_a)
    )


def transport_angle(p_idx, q_idx, frames: FrameField):
    """Gauge alignment angle for the directed edge q -> p.

    The tangent plane at q is rotated onto the one at p by the unique
    rotation taking n_q to n_p about ``n_q x n_p`` (identity when the
    normals agree); the returned angle is the angle of the rotated first
    frame axis of q measured in the frame at p.  With this convention,
    rotating a transported coordinate vector by the angle expresses it in
    p's gauge, and regauging shifts the angle by ``-g_p + g_q``.

    Raises
    ------
    AmbiguousTransportError
        If the normals are antipodal.
    """
    nq, nprm = frames.normals[q_idx], frames.normals[p_idx]
    c = float(np.dot(nq, nprm))
    if c < -1.0 + _ANTIPODAL_TOL:
        raise AmbiguousTransportError(p_idx, q_idx)
    axis = np.cross(nq, nprm)
    s = float(np.linalg.norm(axis))
    if s < 1e-15:
        re1 = frames.e1[q_idx]
    else:
        axis = axis / s
        re1 = _rodrigues_apply(axis, c, s, frames.e1[q_idx])
    return float(
        np.arctan2(np.dot(re1, frames.e2[p_idx]), np.dot(re1, frames.e1[p_idx]))
    )


class TransportData:
    """Per-directed-edge angles, aligned with ``mesh.edge_src/edge_dst``.

    Attributes
    ----------
    theta : ndarray, shape (E,)
        Neighbor angle of q in the frame at p for each edge q -> p.
    transport : ndarray, shape (E,)
        Frame alignment angle g for each edge q -> p.
    frame_token : int
        Token of the FrameField these angles refer to.
    """

    def __init__(self, mesh, theta, transport, frame_token):
        self.mesh = mesh
        self.theta = theta
        self.transport = transport
        self.frame_token = frame_token
        self.theta.flags.writeable = False
        self.transport.flags.writeable = False


def transport_data(frames: FrameField) -> TransportData:
    """Compute theta and transport angles for every directed edge at once."""
    mesh = frames.mesh
    src, dst = mesh.edge_src, mesh.edge_dst
    pp = mesh.vertices[dst]
    qq = mesh.vertices[src]
    npm = frames.normals[dst]
    e1p, e2p = frames.e1[dst], frames.e2[dst]

    d = qq - pp
    w = d - npm * np.einsum("ij,ij->i", npm, d)[:, None]
    wn = np.linalg.norm(w, axis=1)
    dn = np.linalg.norm(d, axis=1)
    bad = np.where(wn <= _PROJECTION_TOL * np.maximum(dn, 1e-300))[0]
    if bad.size:
        e = int(bad[0])
        raise UndefinedLogMapError(int(dst[e]), int(src[e]))
    theta = np.arctan2(np.einsum("ij,ij->i", e2p, w), np.einsum("ij,ij->i", e1p, w))

    nq = frames.normals[src]
    c = np.einsum("ij,ij->i", nq, npm)
    anti = np.where(c < -1.0 + _ANTIPODAL_TOL)[0]
    if anti.size:
        e = int(anti[0])
        raise AmbiguousTransportError(int(dst[e]), int(src[e]))
    axis = np.cross(nq, npm)
    s = np.linalg.norm(axis, axis=1)
    safe = np.maximum(s, 1e-300)
    k = axis / safe[:, None]
    flat = s < 1e-15

    def rotate(v):
        out = (
            v * c[:, None]
            + np.cross(k, v) * s[:, None]
            + k * (np.einsum("ij,ij->i", k, v) * (1.0 - c))[:, None]
        )
        return np.where(flat[:, None], v, out)

    re1 = rotate(frames.e1[src])
    g = np.arctan2(
        np.einsum("ij,ij->i", re1, e2p), np.einsum("ij,ij->i", re1, e1p)
    )
    return TransportData(mesh, theta, g, frames.token)


def regauge(frames: FrameField, angles, with_transport=True):
    """Rotate every gauge by its angle; returns new frames (+ transport).

    The new first axis is ``cos(g) e1 + sin(g) e2`` and the second is
    recomputed as ``n x e1'``, so the frame invariants hold exactly.
    """
    angles = np.asarray(angles, dtype=np.float64).reshape(-1, 1)
    e1 = np.cos(angles) * frames.e1 + np.sin(angles) * frames.e2
    e2 = np.cross(frames.normals, e1)
    out = FrameField(frames.mesh, frames.normals, e1, e2)
    if not with_transport:
        return out
    return out, transport_data(out)
