import numpy as np
import numpy.testing as npt
import pytest

from meshnet.errors import (
    DegenerateFaceError,
    DegreeError,
    IndexRangeError,
    MeshParseError,
    NonManifoldError,
    OrientationError,
)
from meshnet.mesh import (
    Mesh,
    face_geometry,
    generate_grid_patch,
    generate_icosphere,
    generate_mesh,
    load_mesh,
    save_mesh,
    vertex_normals,
)
from meshnet.transforms import random_rotation

from oracles import random_test_mesh


MINIMAL_OFF = """OFF
3 1 0
0 0 0
1 0 0
0 1 0
3 0 1 2
"""


def test_load_minimal_off(tmp_path):
    path = tmp_path / "tri.off"
    path.write_text(MINIMAL_OFF)
    mesh = load_mesh(path)
    assert mesh.n_vertices == 3
    assert mesh.n_faces == 1
    assert mesh.degrees.tolist() == [2, 2, 2]


def test_load_off_index_out_of_range(tmp_path):
    path = tmp_path / "bad.off"
    path.write_text("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 5\n")
    with pytest.raises(IndexRangeError):
        load_mesh(path)


def test_load_off_bad_header(tmp_path):
    path = tmp_path / "bad.off"
    path.write_text("NOPE\n3 1 0\n")
    with pytest.raises(MeshParseError):
        load_mesh(path)


def test_icosahedron_off_degrees(tmp_path):
    # every icosahedron vertex touches exactly five edges
    path = tmp_path / "ico.off"
    save_mesh(generate_icosphere(0), path)
    mesh = load_mesh(path)
    assert mesh.n_vertices == 12 and mesh.n_faces == 20
    assert set(mesh.degrees.tolist()) == {5}


def test_obj_roundtrip_ignores_decorations(tmp_path):
    path = tmp_path / "tri.obj"
    path.write_text(
        "# comment\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvn 0 0 1\n"
        "usemtl none\nf 1/1/1 2/1/1 3/1/1\n"
    )
    mesh = load_mesh(path)
    assert mesh.n_vertices == 3 and mesh.n_faces == 1
    out = tmp_path / "tri2.obj"
    save_mesh(mesh, out)
    again = load_mesh(out)
    npt.assert_array_equal(mesh.faces, again.faces)
    npt.assert_array_equal(mesh.vertices, again.vertices)


def test_off_save_load_bit_for_bit(tmp_path):
    rng = np.random.default_rng(3)
    mesh = random_test_mesh(rng)
    path = tmp_path / "mesh.off"
    save_mesh(mesh, path)
    again = load_mesh(path)
    assert np.array_equal(mesh.vertices, again.vertices)
    assert np.array_equal(mesh.faces, again.faces)


class TestValidation:
    def test_degenerate_face(self):
        with pytest.raises(DegenerateFaceError):
            Mesh(np.eye(3), [[0, 1, 1]])

    def test_non_manifold_edge(self):
        verts = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [0, -1, 0]]
        faces = [[0, 1, 2], [1, 0, 3], [0, 1, 4]]  # edge 0-1 in three faces
        with pytest.raises((NonManifoldError, OrientationError)):
            Mesh(verts, faces)

    def test_inconsistent_orientation(self):
        verts = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]]
        faces = [[0, 1, 2], [1, 3, 2], [0, 1, 3]]  # 0->1 traversed twice
        with pytest.raises(OrientationError):
            Mesh(verts, faces)

    def test_isolated_vertex_rejected(self):
        verts = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [5, 5, 5]]
        with pytest.raises(DegreeError):
            Mesh(verts, [[0, 1, 2]])


class TestFaceGeometry:
    def test_axis_aligned_right_triangle(self):
        mesh = Mesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
        fg = face_geometry(mesh)
        npt.assert_allclose(fg.normals[0], [0, 0, 1], atol=1e-15)
        npt.assert_allclose(fg.areas[0], 0.5)

    def test_reversed_winding_flips_normal(self):
        mesh = Mesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 2, 1]])
        fg = face_geometry(mesh)
        npt.assert_allclose(fg.normals[0], [0, 0, -1], atol=1e-15)

    def test_area_scales_quadratically(self):
        mesh = Mesh([[0, 0, 0], [2, 0, 0], [0, 2, 0]], [[0, 1, 2]])
        npt.assert_allclose(face_geometry(mesh).areas[0], 2.0)

    def test_zero_area_face(self):
        mesh = Mesh([[0, 0, 0], [1, 0, 0], [2, 0, 0]], [[0, 1, 2]])
        with pytest.raises(DegenerateFaceError):
            face_geometry(mesh)


class TestVertexNormals:
    def test_flat_fan(self):
        verts = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [-1, 0, 0], [0, -1, 0]]
        faces = [[0, 1, 2], [0, 2, 3], [0, 3, 4], [0, 4, 1]]
        normals = vertex_normals(Mesh(verts, faces))
        npt.assert_allclose(normals, np.tile([0, 0, 1.0], (5, 1)), atol=1e-15)

    def test_single_triangle_matches_face_normal(self):
        mesh = Mesh([[0, 0, 0], [1, 0, 0], [0, 0.5, 0.5]], [[0, 1, 2]])
        fg = face_geometry(mesh)
        normals = vertex_normals(mesh, fg)
        for p in range(3):
            npt.assert_allclose(normals[p], fg.normals[0], atol=1e-15)

    def test_cube_corner_against_incidence_oracle(self):
        mesh = _cube()
        fg = face_geometry(mesh)
        normals = vertex_normals(mesh, fg)
        # oracle: accumulate area * normal over the incident faces directly
        for p in [0, 6]:
            acc = np.zeros(3)
            for fi, face in enumerate(mesh.faces):
                if p in face:
                    acc += fg.areas[fi] * fg.normals[fi]
            npt.assert_allclose(normals[p], acc / np.linalg.norm(acc), atol=1e-14)


def _cube():
    verts = [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
             [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]]
    faces = [[0, 2, 1], [0, 3, 2], [4, 5, 6], [4, 6, 7],
             [0, 1, 5], [0, 5, 4], [2, 3, 7], [2, 7, 6],
             [0, 4, 7], [0, 7, 3], [1, 2, 6], [1, 6, 5]]
    return Mesh(verts, faces)


class TestGenerators:
    def test_icosphere_counts(self):
        for sub, (v, f) in [(0, (12, 20)), (1, (42, 80)), (2, (162, 320))]:
            mesh = generate_icosphere(sub)
            assert (mesh.n_vertices, mesh.n_faces) == (v, f)

    def test_icosphere_on_unit_sphere(self):
        mesh = generate_icosphere(2)
        npt.assert_allclose(np.linalg.norm(mesh.vertices, axis=1), 1.0, atol=1e-12)

    def test_grid_patch_minimal(self):
        mesh = generate_grid_patch(2, 2, 0.0, 0)
        assert mesh.n_vertices == 4 and mesh.n_faces == 2
        npt.assert_allclose(mesh.vertices[:, 2], 0.0)

    def test_grid_patch_deterministic(self):
        a = generate_grid_patch(4, 5, 0.3, 7)
        b = generate_grid_patch(4, 5, 0.3, 7)
        npt.assert_array_equal(a.vertices, b.vertices)

    def test_generate_mesh_dispatch(self):
        assert generate_mesh("icosphere", subdivisions=0).n_vertices == 12
        assert generate_mesh("grid_patch", rows=3, cols=3).n_vertices == 9
        with pytest.raises(ValueError):
            generate_mesh("dodecahedron")

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            generate_icosphere(-1)
        with pytest.raises(ValueError):
            generate_grid_patch(1, 5)


class TestInvariants:
    def test_total_area_rigid_invariance(self):
        rng = np.random.default_rng(11)
        mesh = random_test_mesh(rng)
        total = face_geometry(mesh).areas.sum()
        R = random_rotation(rng)
        moved = mesh.with_vertices(mesh.vertices @ R.T + rng.uniform(-5, 5, 3))
        npt.assert_allclose(face_geometry(moved).areas.sum(), total, rtol=1e-10)

    def test_normals_rotate_with_mesh(self):
        rng = np.random.default_rng(12)
        mesh = random_test_mesh(rng)
        R = random_rotation(rng)
        rotated = mesh.with_vertices(mesh.vertices @ R.T)
        npt.assert_allclose(
            vertex_normals(rotated), vertex_normals(mesh) @ R.T, atol=1e-12
        )

    def test_neighbor_rings_are_cyclic_fans(self):
        mesh = generate_icosphere(1)
        # consecutive ring entries must share a face with the center
        face_set = {frozenset(f) for f in mesh.faces.tolist()}
        for p in range(mesh.n_vertices):
            ring = mesh.neighbors[p].tolist()
            for a, b in zip(ring, ring[1:] + ring[:1]):
                assert frozenset((p, a, b)) in face_set
