import math

import numpy as np
import pytest

from surgipose.errors import EmptyMesh, InvalidParam, ParseError
from surgipose.mesh import (TriMesh, compute_vertex_normals, generate_needle_mesh,
                            load_mesh, make_box_mesh, make_plane_mesh,
                            make_uv_sphere_mesh, mesh_diameter, save_mesh)

SINGLE_TRIANGLE_OBJ = """\
v 0 0 0
v 1 0 0
v 0 1 0
f 1 2 3
"""

CUBE_OBJ = """\
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
v 0 0 1
v 1 0 1
v 1 1 1
v 0 1 1
f 1 2 3
f 1 3 4
f 5 7 6
f 5 8 7
f 1 6 2
f 1 5 6
f 2 6 7
f 2 7 3
f 3 7 8
f 3 8 4
f 4 8 5
f 4 5 1
"""

TRIANGLE_PLY = """\
ply
format ascii 1.0
comment fixture
element vertex 3
property float x
property float y
property float z
element face 1
property list uchar int vertex_indices
end_header
0 0 0
2 0 0
0 2 0
3 0 1 2
"""


def naive_diameter(vertices) -> float:
    """Independent O(n^2) oracle: the definition, as plain loops."""
    best = 0.0
    v = np.asarray(vertices)
    for i in range(len(v)):
        for j in range(i + 1, len(v)):
            d = math.dist(v[i], v[j])
            best = max(best, d)
    return best


class TestLoadObj:
    def test_single_triangle(self, tmp_path):
        path = tmp_path / "tri.obj"
        path.write_text(SINGLE_TRIANGLE_OBJ)
        mesh = load_mesh(path)
        assert mesh.num_vertices == 3
        assert mesh.num_triangles == 1
        # all three vertex normals equal the face normal (0, 0, 1)
        assert np.allclose(mesh.vertex_normals, [[0, 0, 1]] * 3, atol=1e-12)

    def test_cube(self, tmp_path):
        path = tmp_path / "cube.obj"
        path.write_text(CUBE_OBJ)
        mesh = load_mesh(path)
        assert mesh.num_vertices == 8
        assert mesh.num_triangles == 12
        assert np.allclose(np.linalg.norm(mesh.vertex_normals, axis=1), 1.0, atol=1e-9)

    def test_invalid_face_index(self, tmp_path):
        path = tmp_path / "bad.obj"
        path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 999\n")
        with pytest.raises(ParseError, match="999"):
            load_mesh(path)

    def test_no_triangles(self, tmp_path):
        path = tmp_path / "verts.obj"
        path.write_text("v 0 0 0\nv 1 0 0\n")
        with pytest.raises(EmptyMesh):
            load_mesh(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ParseError):
            load_mesh(tmp_path / "nope.obj")

    def test_quad_faces_triangulated(self, tmp_path):
        path = tmp_path / "quad.obj"
        path.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
        mesh = load_mesh(path)
        assert mesh.num_triangles == 2

    def test_file_normals_used(self, tmp_path):
        path = tmp_path / "vn.obj"
        path.write_text(
            "v 0 0 0\nv 1 0 0\nv 0 1 0\n"
            "vn 0 0 -1\nvn 0 0 -1\nvn 0 0 -1\n"
            "f 1//1 2//2 3//3\n")
        mesh = load_mesh(path)
        assert np.allclose(mesh.vertex_normals, [[0, 0, -1]] * 3, atol=1e-12)


class TestLoadPly:
    def test_triangle(self, tmp_path):
        path = tmp_path / "tri.ply"
        path.write_text(TRIANGLE_PLY)
        mesh = load_mesh(path)
        assert mesh.num_vertices == 3
        assert mesh.num_triangles == 1
        assert np.allclose(mesh.vertices[1], [2, 0, 0])

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.ply"
        path.write_text("plyx\nformat ascii 1.0\nend_header\n")
        with pytest.raises(ParseError):
            load_mesh(path)

    def test_face_index_out_of_range(self, tmp_path):
        path = tmp_path / "bad2.ply"
        path.write_text(TRIANGLE_PLY.replace("3 0 1 2", "3 0 1 7"))
        with pytest.raises(ParseError, match="7"):
            load_mesh(path)


class TestSaveRoundTrip:
    @pytest.mark.parametrize("suffix", ["obj", "ply"])
    def test_round_trip_exact(self, tmp_path, suffix):
        rng = np.random.default_rng(4)
        v = rng.uniform(-40, 40, size=(20, 3))
        t = np.array([[i, (i + 1) % 20, (i + 7) % 20] for i in range(18)])
        mesh = TriMesh(v, t, compute_vertex_normals(v, t))
        path = tmp_path / f"m.{suffix}"
        save_mesh(path, mesh)
        back = load_mesh(path)
        assert np.max(np.abs(back.vertices - mesh.vertices)) <= 1e-6
        assert np.array_equal(back.triangles, mesh.triangles)


class TestMeshDiameter:
    def test_two_points(self):
        mesh = TriMesh(np.array([[0, 0, 0], [0, 0, 5.0], [0, 1, 0]]),
                       np.array([[0, 1, 2]]),
                       np.tile((0, 0, 1.0), (3, 1)))
        assert mesh_diameter(mesh) == pytest.approx(5.0990195135927845, abs=1e-12)

    def test_unit_cube(self):
        box = make_box_mesh(1.0, 1.0, 1.0)
        assert mesh_diameter(box) == pytest.approx(math.sqrt(3), abs=1e-12)

    def test_matches_naive_oracle(self):
        needle = generate_needle_mesh(segments=8, ring_segments=8)
        assert mesh_diameter(needle) == pytest.approx(naive_diameter(needle.vertices), abs=0.0)


class TestNeedle:
    def test_tip_to_tip_diameter(self):
        needle = generate_needle_mesh(arc_radius=9.325, tube_radius=0.2,
                                      arc_angle=math.pi, segments=32)
        d = mesh_diameter(needle)
        assert 18.65 <= d <= 19.05

    def test_mirror_symmetry(self):
        needle = generate_needle_mesh(segments=24, ring_segments=10)
        v = needle.vertices
        reflected = v * np.array([1.0, -1.0, 1.0])
        # reflected vertex set equals the original within 1e-6 (as a set)
        d2 = ((reflected[:, None, :] - v[None, :, :]) ** 2).sum(axis=2)
        assert float(d2.min(axis=1).max()) < 1e-12

    def test_segment_count_does_not_move_diameter(self):
        d8 = mesh_diameter(generate_needle_mesh(segments=8))
        d64 = mesh_diameter(generate_needle_mesh(segments=64))
        assert abs(d8 - d64) < 0.1

    def test_normals_unit(self):
        needle = generate_needle_mesh(segments=12, ring_segments=6)
        assert np.allclose(np.linalg.norm(needle.vertex_normals, axis=1), 1.0, atol=1e-9)

    def test_parameter_validation(self):
        with pytest.raises(InvalidParam):
            generate_needle_mesh(arc_radius=0.0)
        with pytest.raises(InvalidParam):
            generate_needle_mesh(arc_angle=7.0)
        with pytest.raises(InvalidParam):
            generate_needle_mesh(segments=4)


class TestTriMeshInvariants:
    def test_index_out_of_range(self):
        with pytest.raises(InvalidParam):
            TriMesh(np.zeros((3, 3)), np.array([[0, 1, 5]]), np.tile((0, 0, 1.0), (3, 1)))

    def test_needs_triangles(self):
        with pytest.raises(InvalidParam):
            TriMesh(np.zeros((3, 3)), np.zeros((0, 3), dtype=int), np.tile((0, 0, 1.0), (3, 1)))

    def test_non_unit_normals_rejected(self):
        with pytest.raises(InvalidParam):
            TriMesh(np.zeros((3, 3)), np.array([[0, 1, 2]]), np.ones((3, 3)))


def test_procedural_primitives():
    plane = make_plane_mesh(10.0, 6.0)
    assert plane.num_triangles == 2
    sphere = make_uv_sphere_mesh(5.0, n_lat=8, n_lon=12)
    assert mesh_diameter(sphere) == pytest.approx(10.0, abs=1e-9)
