import numpy as np
import numpy.testing as npt
import pytest
from scipy.spatial.transform import Rotation

from meshnet.errors import AmbiguousTransportError, UndefinedLogMapError
from meshnet.mesh import Mesh, generate_icosphere, vertex_normals
from meshnet.tangent import (
    FrameField,
    build_frames,
    log_map,
    regauge,
    tangent_projector,
    theta_angle,
    transport_angle,
    transport_data,
    wrap_angle,
)
from meshnet.transforms import random_rotation

from oracles import random_test_mesh


def fan_mesh():
    """Flat open disk: center 0 with four neighbors in the z=0 plane."""
    verts = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [-1, 0, 0], [0, -1, 0]]
    faces = [[0, 1, 2], [0, 2, 3], [0, 3, 4], [0, 4, 1]]
    return Mesh(verts, faces)


class TestProjector:
    def test_axis_aligned(self):
        npt.assert_allclose(tangent_projector([0, 0, 1]) @ [3, 4, 5], [3, 4, 0])

    def test_annihilates_normal(self):
        n = np.array([0.6, 0.0, 0.8])
        npt.assert_allclose(tangent_projector(n) @ n, 0.0, atol=1e-15)

    def test_matches_direct_formula(self):
        n = np.ones(3) / np.sqrt(3)
        v = np.array([0.3, -1.2, 2.0])
        npt.assert_allclose(tangent_projector(n) @ v, v - np.dot(n, v) * n,
                            atol=1e-14)

    def test_idempotent(self):
        n = np.array([0.6, 0.0, 0.8])
        P = tangent_projector(n)
        npt.assert_allclose(P @ P, P, atol=1e-15)


class TestLogMap:
    def test_already_tangential(self):
        npt.assert_allclose(log_map([0, 0, 0], [1, 0, 0], np.array([0, 0, 1.0])),
                            [1, 0, 0])

    def test_norm_preserving_projection(self):
        out = log_map([0, 0, 0], [1, 0, 1], np.array([0, 0, 1.0]))
        npt.assert_allclose(out, [np.sqrt(2), 0, 0], atol=1e-15)

    def test_undefined_along_normal(self):
        with pytest.raises(UndefinedLogMapError):
            log_map([0, 0, 0], [0, 0, 2], np.array([0, 0, 1.0]))

    def test_norm_preservation_random(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            p, q = rng.standard_normal((2, 3))
            n = rng.standard_normal(3)
            n /= np.linalg.norm(n)
            try:
                v = log_map(p, q, n)
            except UndefinedLogMapError:
                continue
            npt.assert_allclose(np.linalg.norm(v), np.linalg.norm(q - p),
                                rtol=1e-12)


class TestFrames:
    def test_first_neighbor_reference(self):
        mesh = fan_mesh()
        fr = build_frames(mesh)
        # ring at 0 starts at the smallest neighbor index, along +x
        npt.assert_allclose(fr.e1[0], [1, 0, 0], atol=1e-15)
        npt.assert_allclose(fr.e2[0], [0, 1, 0], atol=1e-15)

    def test_custom_reference(self):
        mesh = fan_mesh()
        fr = build_frames(mesh, strategy="custom", reference=[2, 0, 0, 0, 0])
        npt.assert_allclose(fr.e1[0], [0, 1, 0], atol=1e-15)
        npt.assert_allclose(fr.e2[0], [-1, 0, 0], atol=1e-15)

    def test_orthonormal_and_oriented(self):
        rng = np.random.default_rng(8)
        for _ in range(5):
            mesh = random_test_mesh(rng)
            fr = build_frames(mesh)
            npt.assert_allclose(np.einsum("ij,ij->i", fr.e1, fr.e2), 0, atol=1e-10)
            npt.assert_allclose(np.einsum("ij,ij->i", fr.e1, fr.normals), 0, atol=1e-10)
            npt.assert_allclose(np.einsum("ij,ij->i", fr.e2, fr.normals), 0, atol=1e-10)
            npt.assert_allclose(np.cross(fr.e1, fr.e2), fr.normals, atol=1e-10)


class TestThetaAngle:
    def setup_method(self):
        self.p = np.zeros(3)
        self.n = np.array([0.0, 0.0, 1.0])
        self.e1 = np.array([1.0, 0.0, 0.0])
        self.e2 = np.array([0.0, 1.0, 0.0])

    def test_along_e1(self):
        assert theta_angle(self.p, [2, 0, 0], self.e1, self.e2, self.n) == 0.0

    def test_along_e2(self):
        npt.assert_allclose(
            theta_angle(self.p, [0, 3, 0], self.e1, self.e2, self.n), np.pi / 2)

    def test_thirty_degrees_with_normal_offset(self):
        q = [np.cos(np.pi / 6), np.sin(np.pi / 6), 0.7]
        got = theta_angle(self.p, q, self.e1, self.e2, self.n)
        # oracle: atan2 of the explicit tangent-plane projections
        w = np.asarray(q) - self.n * np.dot(self.n, q)
        expect = np.arctan2(self.e2 @ w, self.e1 @ w)
        npt.assert_allclose(got, expect, atol=1e-15)
        npt.assert_allclose(got, np.pi / 6, atol=1e-12)


class TestTransportAngle:
    def test_coplanar_identical_frames(self):
        mesh = fan_mesh()
        e1 = np.tile([1.0, 0, 0], (5, 1))
        e2 = np.tile([0.0, 1, 0], (5, 1))
        n = np.tile([0.0, 0, 1], (5, 1))
        fr = FrameField(mesh, n, e1, e2)
        assert abs(transport_angle(0, 1, fr)) < 1e-15

    def test_coplanar_rotated_frame_change_of_basis(self):
        # regauging the source frame by phi shifts the angle by +phi,
        # matching the explicit 2x2 change-of-basis computation
        mesh = fan_mesh()
        n = np.tile([0.0, 0, 1], (5, 1))
        e1 = np.tile([1.0, 0, 0], (5, 1))
        e2 = np.tile([0.0, 1, 0], (5, 1))
        base = FrameField(mesh, n, e1, e2)
        phi = 0.8
        e1r, e2r = e1.copy(), e2.copy()
        e1r[1] = [np.cos(phi), np.sin(phi), 0]
        e2r[1] = [-np.sin(phi), np.cos(phi), 0]
        rotated = FrameField(mesh, n, e1r, e2r)
        got = transport_angle(0, 1, rotated)
        # oracle: coordinates of the rotated first axis in the target basis
        expect = np.arctan2(e1r[1] @ e2[0], e1r[1] @ e1[0])
        npt.assert_allclose(got, expect, atol=1e-15)
        npt.assert_allclose(wrap_angle(got - phi), 0.0, atol=1e-12)

    def test_against_scipy_rotation_oracle(self):
        rng = np.random.default_rng(21)
        for _ in range(5):
            mesh = random_test_mesh(rng)
            fr = build_frames(mesh)
            e = int(rng.integers(0, mesh.n_edges))
            p, q = int(mesh.edge_dst[e]), int(mesh.edge_src[e])
            nq, npv = fr.normals[q], fr.normals[p]
            axis = np.cross(nq, npv)
            angle = np.arctan2(np.linalg.norm(axis), np.dot(nq, npv))
            R = Rotation.from_rotvec(axis / np.linalg.norm(axis) * angle).as_matrix()
            re1 = R @ fr.e1[q]
            expect = np.arctan2(re1 @ fr.e2[p], re1 @ fr.e1[p])
            npt.assert_allclose(transport_angle(p, q, fr), expect, atol=1e-10)

    def test_transport_coherence(self):
        # rotating source coordinates by the transport angle reproduces the
        # explicit 3D transport of the tangent vector
        rng = np.random.default_rng(22)
        mesh = generate_icosphere(1)
        fr = build_frames(mesh)
        td = transport_data(fr)
        for e in rng.integers(0, mesh.n_edges, size=10):
            p, q = int(mesh.edge_dst[e]), int(mesh.edge_src[e])
            v = np.cross(fr.normals[q], rng.standard_normal(3))
            coords_q = np.array([v @ fr.e1[q], v @ fr.e2[q]])
            nq, npv = fr.normals[q], fr.normals[p]
            axis = np.cross(nq, npv)
            angle = np.arctan2(np.linalg.norm(axis), nq @ npv)
            R = Rotation.from_rotvec(axis / np.linalg.norm(axis) * angle).as_matrix()
            expect = np.array([(R @ v) @ fr.e1[p], (R @ v) @ fr.e2[p]])
            g = td.transport[e]
            rot = np.array([[np.cos(g), -np.sin(g)], [np.sin(g), np.cos(g)]])
            npt.assert_allclose(rot @ coords_q, expect, atol=1e-12)

    def test_antipodal_normals_rejected(self):
        mesh = fan_mesh()
        n = np.tile([0.0, 0, 1], (5, 1))
        n[1] = [0, 0, -1]
        e1 = np.tile([1.0, 0, 0], (5, 1))
        e2 = np.cross(n, e1)
        fr = FrameField(mesh, n, e1, e2)
        with pytest.raises(AmbiguousTransportError):
            transport_angle(0, 1, fr)


class TestGaugeShiftLaw:
    def test_shift_law(self):
        rng = np.random.default_rng(30)
        for _ in range(5):
            mesh = random_test_mesh(rng)
            fr = build_frames(mesh)
            td = transport_data(fr)
            g = rng.uniform(-np.pi, np.pi, mesh.n_vertices)
            _fr2, td2 = regauge(fr, g)
            src, dst = mesh.edge_src, mesh.edge_dst
            npt.assert_allclose(
                wrap_angle(td2.theta - (td.theta - g[dst])), 0.0, atol=1e-9)
            npt.assert_allclose(
                wrap_angle(td2.transport - (td.transport - g[dst] + g[src])),
                0.0, atol=1e-9)

    def test_regauge_identity(self):
        mesh = generate_icosphere(0)
        fr = build_frames(mesh)
        fr2 = regauge(fr, np.zeros(mesh.n_vertices), with_transport=False)
        npt.assert_array_equal(fr2.e1, fr.e1)
        npt.assert_allclose(fr2.e2, fr.e2, atol=1e-16)

    def test_regauge_quarter_turn(self):
        mesh = generate_icosphere(0)
        fr = build_frames(mesh)
        g = np.zeros(mesh.n_vertices)
        g[3] = np.pi / 2
        fr2 = regauge(fr, g, with_transport=False)
        npt.assert_allclose(fr2.e1[3], fr.e2[3], atol=1e-15)
        npt.assert_allclose(fr2.e2[3], -fr.e1[3], atol=1e-15)


class TestAmbientCompatibility:
    def test_rotation_translation_scaling_leave_angles_fixed(self):
        rng = np.random.default_rng(31)
        for _ in range(5):
            mesh = random_test_mesh(rng)
            td = transport_data(build_frames(mesh))
            R = random_rotation(rng)
            lam = float(np.exp(rng.uniform(np.log(0.1), np.log(10.0))))
            x = rng.uniform(-10, 10, 3)
            moved = mesh.with_vertices(lam * mesh.vertices @ R.T + x)
            td2 = transport_data(build_frames(moved))
            npt.assert_allclose(wrap_angle(td2.theta - td.theta), 0, atol=1e-9)
            npt.assert_allclose(wrap_angle(td2.transport - td.transport), 0,
                                atol=1e-9)
