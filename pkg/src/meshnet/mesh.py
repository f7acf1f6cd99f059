"""Triangle meshes: representation, validation, I/O, and synthetic generators.

A mesh is an oriented triangulated surface embedded in R^3.  Construction
validates manifoldness and orientation, and stores for every vertex the
neighbor ring in the cyclic order induced by the oriented face fan, so that
all downstream per-neighbor sums have a reproducible order.
"""

from __future__ import annotations

import numpy as np

from .errors import (
    DegenerateFaceError,
    DegenerateNormalError,
    DegreeError,
    IndexRangeError,
    MeshParseError,
    NonManifoldError,
    NonManifoldVertexError,
    OrientationError,
)

__all__ = [
    "Mesh",
    "FaceGeometry",
    "load_mesh",
    "save_mesh",
    "face_geometry",
    "vertex_normals",
    "generate_icosphere",
    "generate_grid_patch",
    "generate_mesh",
]


class Mesh:
    """Immutable oriented triangle mesh.

    Parameters
    ----------
    vertices : array_like, shape (V, 3)
        Vertex positions.
    faces : array_like, shape (F, 3)
        Vertex-index triples, counter-clockwise when seen from outside.
    neighbors : list of arrays, optional
        Trusted per-vertex neighbor rings.  When given, validation of the
        rings is skipped; used by permutation pushforwards to preserve the
        stored summation order exactly.

    Attributes
    ----------
    vertices : ndarray, shape (V, 3)
    faces : ndarray, shape (F, 3)
    neighbors : list of ndarray
        Neighbor ring of each vertex in oriented-fan order.  Closed fans
        start at the smallest neighbor index; open fans (boundary vertices)
        start at the head of the chain.
    edge_dst, edge_src : ndarray, shape (E,)
        Directed edges q -> p flattened in vertex order: ``edge_dst`` is the
        receiving vertex p, ``edge_src`` the neighbor q.
    edge_offsets : ndarray, shape (V + 1,)
        CSR-style offsets of each vertex's edge block.
    """

    def __init__(self, vertices, faces, neighbors=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        self.faces = np.ascontiguousarray(faces, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise ValueError("vertex array must have shape (V, 3)")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise ValueError("face array must have shape (F, 3)")
        self._validate_faces()
        if neighbors is None:
            self.neighbors = self._build_neighbor_rings()
        else:
            self.neighbors = [np.asarray(nb, dtype=np.int64) for nb in neighbors]
        self.degrees = np.array([len(nb) for nb in self.neighbors], dtype=np.int64)
        for p, d in enumerate(self.degrees):
            if d < 2:
                raise DegreeError(p, int(d))
        self.edge_offsets = np.concatenate([[0], np.cumsum(self.degrees)])
        self.edge_dst = np.repeat(np.arange(self.n_vertices), self.degrees)
        self.edge_src = (
            np.concatenate(self.neighbors)
            if self.neighbors
            else np.zeros(0, dtype=np.int64)
        )
        for a in (self.vertices, self.faces, self.degrees, self.edge_offsets,
                  self.edge_dst, self.edge_src):
            a.flags.writeable = False

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_faces(self):
        return self.faces.shape[0]

    @property
    def n_edges(self):
        """Number of directed edges."""
        return self.edge_src.shape[0]

    def _validate_faces(self):
        V = self.n_vertices
        for fi, (a, b, c) in enumerate(self.faces):
            for idx in (a, b, c):
                if idx < 0 or idx >= V:
                    raise IndexRangeError(fi, int(idx), V)
            if a == b or b == c or a == c:
                raise DegenerateFaceError(fi)
        # Undirected edge -> face count; directed edge uniqueness gives
        # consistent orientation (the two faces sharing an edge traverse it
        # in opposite directions).
        undirected = {}
        directed = set()
        for fi, (a, b, c) in enumerate(self.faces):
            for i, j in ((a, b), (b, c), (c, a)):
                key = (min(i, j), max(i, j))
                undirected[key] = undirected.get(key, 0) + 1
                if undirected[key] > 2:
                    raise NonManifoldError(key, undirected[key])
                if (i, j) in directed:
                    raise OrientationError((i, j))
                directed.add((i, j))

    def _build_neighbor_rings(self):
        V = self.n_vertices
        # At vertex p, face (p, a, b) contributes the oriented link edge
        # a -> b; chaining link edges walks the fan counter-clockwise.
        succ = [dict() for _ in range(V)]
        for a, b, c in self.faces:
            for p, x, y in ((a, b, c), (b, c, a), (c, a, b)):
                if x in succ[p]:
                    raise NonManifoldVertexError(int(p))
                succ[p][x] = y
        rings = []
        for p in range(V):
            nxt = succ[p]
            if not nxt:
                rings.append(np.zeros(0, dtype=np.int64))
                continue
            incoming = set(nxt.values())
            heads = [x for x in nxt if x not in incoming]
            if len(heads) > 1:
                raise NonManifoldVertexError(p)
            if heads:
                start = heads[0]  # open fan: begin at the boundary
            else:
                start = min(nxt)  # closed fan: deterministic start
            ring = [start]
            cur = start
            while cur in nxt:
                cur = nxt[cur]
                if cur == start:
                    break
                ring.append(cur)
                if len(ring) > len(nxt) + 1:
                    raise NonManifoldVertexError(p)
            if len(ring) != len(nxt) + (0 if not heads else 1) and len(ring) != len(nxt):
                raise NonManifoldVertexError(p)
            rings.append(np.array(ring, dtype=np.int64))
        return rings

    def edge_slice(self, p):
        """Directed-edge index range of vertex ``p``."""
        return slice(self.edge_offsets[p], self.edge_offsets[p + 1])

    def with_vertices(self, vertices):
        """Same combinatorics, new vertex positions (keeps stored rings)."""
        return Mesh(vertices, self.faces, neighbors=self.neighbors)

    def __repr__(self):
        return f"Mesh(V={self.n_vertices}, F={self.n_faces})"


class FaceGeometry:
    """Per-face unit normals and areas.

    Attributes
    ----------
    normals : ndarray, shape (F, 3)
    areas : ndarray, shape (F,)
    """

    def __init__(self, normals, areas):
        self.normals = normals
        self.areas = areas
        self.normals.flags.writeable = False
        self.areas.flags.writeable = False


def face_geometry(mesh: Mesh) -> FaceGeometry:
    """Unit normal (CCW cross product) and area of every face.

    Raises
    ------
    DegenerateFaceError
        If a face has zero area.
    """
    v = mesh.vertices
    f = mesh.faces
    e1 = v[f[:, 1]] - v[f[:, 0]]
    e2 = v[f[:, 2]] - v[f[:, 0]]
    cross = np.cross(e1, e2)
    norms = np.linalg.norm(cross, axis=1)
    scale = np.linalg.norm(e1, axis=1) * np.linalg.norm(e2, axis=1)
    bad = np.where(norms <= 1e-14 * np.maximum(scale, 1e-300))[0]
    if bad.size:
        raise DegenerateFaceError(int(bad[0]), "zero area")
    return FaceGeometry(cross / norms[:, None], 0.5 * norms)


def vertex_normals(mesh: Mesh, fg: FaceGeometry | None = None) -> np.ndarray:
    """Area-weighted vertex normals.

    Each vertex normal is the sum of incident face normals weighted by face
    area, normalized to unit length.

    Raises
    ------
    DegenerateNormalError
        If the weighted sum vanishes at some vertex (folded configuration).
    """
    if fg is None:
        fg = face_geometry(mesh)
    acc = np.zeros_like(mesh.vertices)
    w = fg.areas[:, None] * fg.normals
    for k in range(3):
        np.add.at(acc, mesh.faces[:, k], w)
    norms = np.linalg.norm(acc, axis=1)
    bad = np.where(norms <= 1e-12 * max(np.max(fg.areas), 1e-300))[0]
    if bad.size:
        raise DegenerateNormalError(int(bad[0]))
    return acc / norms[:, None]


# ---------------------------------------------------------------------------
# I/O
# ---------------------------------------------------------------------------

def load_mesh(path, fmt=None) -> Mesh:
    """Load a mesh from an OFF or OBJ file.

    ``fmt`` may be ``"off"`` or ``"obj"``; inferred from the extension when
    omitted.  OBJ import reads only ``v`` and ``f`` records and drops
    texture/normal indices.
    """
    path = str(path)
    if fmt is None:
        fmt = path.rsplit(".", 1)[-1].lower()
    fmt = fmt.lower()
    if fmt == "off":
        vertices, faces = _parse_off(path)
    elif fmt == "obj":
        vertices, faces = _parse_obj(path)
    else:
        raise MeshParseError(f"unknown mesh format {fmt!r} for {path}")
    return Mesh(vertices, faces)


def _parse_off(path):
    with open(path) as fh:
        tokens = []
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                tokens.extend(line.split())
    if not tokens or tokens[0] != "OFF":
        raise MeshParseError(f"{path}: missing OFF header")
    try:
        nv, nf = int(tokens[1]), int(tokens[2])
        pos = 4  # skip edge count
        vertices = np.array(
            [float(t) for t in tokens[pos:pos + 3 * nv]], dtype=np.float64
        ).reshape(nv, 3)
        pos += 3 * nv
        faces = []
        for _ in range(nf):
            cnt = int(tokens[pos])
            if cnt != 3:
                raise MeshParseError(f"{path}: only triangle faces supported, got {cnt}-gon")
            faces.append([int(tokens[pos + 1]), int(tokens[pos + 2]), int(tokens[pos + 3])])
            pos += 4
    except (ValueError, IndexError) as exc:
        raise MeshParseError(f"{path}: malformed OFF data ({exc})") from exc
    return vertices, np.array(faces, dtype=np.int64).reshape(nf, 3)


def _parse_obj(path):
    vertices = []
    faces = []
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                if len(parts) < 4:
                    raise MeshParseError(f"{path}:{ln}: short vertex record")
                vertices.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                if len(parts) != 4:
                    raise MeshParseError(f"{path}:{ln}: only triangle faces supported")
                idx = []
                for tok in parts[1:]:
                    head = tok.split("/", 1)[0]
                    try:
                        idx.append(int(head) - 1)
                    except ValueError as exc:
                        raise MeshParseError(f"{path}:{ln}: bad face index {tok!r}") from exc
                faces.append(idx)
            # every other record type (vt, vn, usemtl, ...) is ignored
    if not vertices:
        raise MeshParseError(f"{path}: no vertex records")
    return (
        np.array(vertices, dtype=np.float64),
        np.array(faces, dtype=np.int64).reshape(len(faces), 3),
    )


def save_mesh(mesh: Mesh, path, fmt=None):
    """Write vertices and faces to OFF or OBJ.

    OFF output round-trips bit-for-bit through :func:`load_mesh` (floats are
    written with 17 significant digits).
    """
    path = str(path)
    if fmt is None:
        fmt = path.rsplit(".", 1)[-1].lower()
    fmt = fmt.lower()
    with open(path, "w") as fh:
        if fmt == "off":
            fh.write("OFF\n")
            fh.write(f"{mesh.n_vertices} {mesh.n_faces} 0\n")
            for x, y, z in mesh.vertices:
                fh.write(f"{x:.17g} {y:.17g} {z:.17g}\n")
            for a, b, c in mesh.faces:
                fh.write(f"3 {a} {b} {c}\n")
        elif fmt == "obj":
            for x, y, z in mesh.vertices:
                fh.write(f"v {x:.17g} {y:.17g} {z:.17g}\n")
            for a, b, c in mesh.faces:
                fh.write(f"f {a + 1} {b + 1} {c + 1}\n")
        else:
            raise MeshParseError(f"unknown mesh format {fmt!r} for {path}")


# ---------------------------------------------------------------------------
# Synthetic generators
# ---------------------------------------------------------------------------

_ICO_T = (1.0 + np.sqrt(5.0)) / 2.0

_ICO_VERTICES = np.array(
    [
        [-1, _ICO_T, 0], [1, _ICO_T, 0], [-1, -_ICO_T, 0], [1, -_ICO_T, 0],
        [0, -1, _ICO_T], [0, 1, _ICO_T], [0, -1, -_ICO_T], [0, 1, -_ICO_T],
        [_ICO_T, 0, -1], [_ICO_T, 0, 1], [-_ICO_T, 0, -1], [-_ICO_T, 0, 1],
    ],
    dtype=np.float64,
)

_ICO_FACES = np.array(
    [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ],
    dtype=np.int64,
)


def generate_icosphere(subdivisions: int = 0) -> Mesh:
    """Unit icosphere: icosahedron plus midpoint subdivision.

    Every subdivision level replaces each face by four and projects new
    vertices onto the unit sphere (V' = V + E, F' = 4F).
    """
    if subdivisions < 0:
        raise ValueError("subdivisions must be >= 0")
    verts = _ICO_VERTICES / np.linalg.norm(_ICO_VERTICES, axis=1, keepdims=True)
    faces = _ICO_FACES.copy()
    for _ in range(subdivisions):
        verts, faces = _subdivide_midpoint(verts, faces)
        verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    return Mesh(verts, faces)


def _subdivide_midpoint(verts, faces):
    verts = list(map(tuple, verts))
    midpoint = {}

    def mid(i, j):
        key = (min(i, j), max(i, j))
        if key not in midpoint:
            vi, vj = np.array(verts[i]), np.array(verts[j])
            verts.append(tuple(0.5 * (vi + vj)))
            midpoint[key] = len(verts) - 1
        return midpoint[key]

    new_faces = []
    for a, b, c in faces:
        ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
        new_faces.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]])
    return np.array(verts, dtype=np.float64), np.array(new_faces, dtype=np.int64)


def generate_grid_patch(rows: int, cols: int, height_noise_amplitude: float = 0.0,
                        rng_seed: int = 0) -> Mesh:
    """Triangulated height field over a unit-spaced ``rows`` x ``cols`` grid.

    Heights are ``amplitude * U(-1, 1)`` per vertex, deterministic for a
    fixed seed.  The patch has boundary vertices (open fans).
    """
    if rows < 2 or cols < 2:
        raise ValueError("rows and cols must both be >= 2")
    rng = np.random.default_rng(rng_seed)
    ii, jj = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    z = height_noise_amplitude * rng.uniform(-1.0, 1.0, size=(rows, cols))
    verts = np.stack([jj.ravel().astype(float), ii.ravel().astype(float), z.ravel()], axis=1)
    faces = []
    for i in range(rows - 1):
        for j in range(cols - 1):
            a = i * cols + j
            b = i * cols + j + 1
            c = (i + 1) * cols + j
            d = (i + 1) * cols + j + 1
            # CCW when viewed from +z
            faces.append([a, b, d])
            faces.append([a, d, c])
    return Mesh(verts, np.array(faces, dtype=np.int64))


def generate_mesh(kind: str, **params) -> Mesh:
    """Dispatch on generator name: ``icosphere`` or ``grid_patch``."""
    if kind == "icosphere":
        return generate_icosphere(**params)
    if kind == "grid_patch":
        return generate_grid_patch(**params)
    raise ValueError(f"unknown mesh generator {kind!r}")
