import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from shape_atlas.errors import DegenerateFace, EmptyCloud, EmptyMesh, SizeMismatch
from shape_atlas.geom import (NormalizationTransform, PointCloud, TriangleMesh, compute_face_normals,
                              normalize_center, sample_surface, sample_surface_with_faces)
from shape_atlas.shapes import box, icosphere, torus

SQUARE = TriangleMesh([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], [[0, 1, 2], [0, 2, 3]])


def cross_by_hand(a, b):
    return [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]


def heron(a, b, c):
    la, lb, lc = (math.dist(a, b), math.dist(b, c), math.dist(c, a))
    s = 0.5 * (la + lb + lc)
    return math.sqrt(max(s * (s - la) * (s - lb) * (s - lc), 0.0))


def test_face_normal_right_hand_rule():
    n = compute_face_normals([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
    np.testing.assert_array_equal(n[0], [0, 0, 1])


def test_face_normal_reversed_winding():
    n = compute_face_normals([[0, 0, 0], [0, 1, 0], [1, 0, 0]], [[0, 1, 2]])
    np.testing.assert_array_equal(n[0], [0, 0, -1])


def test_face_normal_matches_scalar_cross_product():
    v0, v1, v2 = [0, 0, 0], [1, 0, 0], [1, 1, 1]
    c = cross_by_hand([v1[i] - v0[i] for i in range(3)], [v2[i] - v0[i] for i in range(3)])
    norm = math.sqrt(sum(x * x for x in c))
    n = compute_face_normals([v0, v1, v2], [[0, 1, 2]])[0]
    np.testing.assert_allclose(n, [x / norm for x in c], rtol=0, atol=1e-15)


def test_degenerate_face_raises():
    with pytest.raises(DegenerateFace):
        compute_face_normals([[0, 0, 0], [1, 0, 0], [2, 0, 0]], [[0, 1, 2]])


def test_cleaned_drops_degenerate_faces():
    m = TriangleMesh.cleaned([[0, 0, 0], [1, 0, 0], [2, 0, 0], [0, 1, 0]], [[0, 1, 2], [0, 1, 3]])
    assert len(m.faces) == 1


def test_face_index_out_of_range():
    with pytest.raises(ValueError):
        TriangleMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 3]])


def test_cloud_rejects_non_unit_normals_and_nan():
    with pytest.raises(ValueError):
        PointCloud([[0, 0, 0]], [[0, 0, 2]])
    with pytest.raises(ValueError):
        PointCloud([[0, np.nan, 0]])
    with pytest.raises(SizeMismatch):
        PointCloud([[0, 0, 0], [1, 1, 1]], [[0, 0, 1]])


def test_sample_surface_half_square():
    c = sample_surface(SQUARE, 10000, seed=3)
    frac = np.mean(c.points[:, 0] < 0.5)
    assert abs(frac - 0.5) <= 0.02


def test_single_triangle_sample_on_plane():
    m = TriangleMesh([[0, 0, 0], [1, 0, 0.5], [0, 1, 2]], [[0, 1, 2]])
    p = sample_surface(m, 1, seed=9).points[0]
    n = m.face_normals[0]
    assert abs(np.dot(n, p - m.vertices[0])) <= 1e-9


def test_area_weighted_split_three_to_one():
    # triangle A has area 1.5, triangle B has 0.5
    m = TriangleMesh([[0, 0, 0], [3, 0, 0], [0, 1, 0], [10, 0, 0], [11, 0, 0], [10, 1, 0]],
                     [[0, 1, 2], [3, 4, 5]])
    _, faces = sample_surface_with_faces(m, 40000, seed=0)
    frac = np.mean(faces == 0)
    assert abs(frac - 0.75) <= 0.02


def test_samples_carry_face_normals():
    m = box((1, 2, 3), 2)
    c, faces = sample_surface_with_faces(m, 500, seed=1)
    np.testing.assert_array_equal(c.normals, m.face_normals[faces])


def test_sample_surface_deterministic():
    m = icosphere(2)
    a = sample_surface(m, 300, seed=5).points
    b = sample_surface(m, 300, seed=5).points
    assert np.array_equal(a, b)


def test_sample_empty_mesh():
    with pytest.raises(EmptyMesh):
        sample_surface(TriangleMesh(np.zeros((3, 3)), np.zeros((0, 3), int)), 5)


@pytest.mark.parametrize("mesh", [icosphere(2), box((1, 0.5, 0.2), 3), torus(0.7, 0.2, 16, 8)])
def test_surface_area_matches_heron(mesh):
    oracle = sum(heron(*t) for t in mesh.triangles.tolist())
    assert mesh.surface_area == pytest.approx(oracle, rel=1e-9)
    np.testing.assert_allclose(np.linalg.norm(mesh.face_normals, axis=1), 1.0, atol=1e-9)


def test_normalize_symmetric_pair():
    out, tf = normalize_center(PointCloud([[2, 0, 0], [-2, 0, 0]]), "unit_ball")
    np.testing.assert_allclose(out.points, [[1, 0, 0], [-1, 0, 0]])
    np.testing.assert_allclose(tf.translation, 0)
    assert tf.scale == 0.5


def test_normalize_single_point_centroid_only():
    out, _ = normalize_center(PointCloud([[5, 5, 5]]), "centroid_only")
    np.testing.assert_allclose(out.points, [[0, 0, 0]])


def test_normalize_random_cloud(rng):
    out, _ = normalize_center(PointCloud(rng.normal(size=(100, 3)) * 7 + 3), "unit_ball")
    assert abs(np.linalg.norm(out.points, axis=1).max() - 1) <= 1e-9
    assert np.abs(out.points.mean(axis=0)).max() <= 1e-9


def test_normalize_empty():
    with pytest.raises(EmptyCloud):
        normalize_center(PointCloud(np.zeros((0, 3))))


finite = st.floats(-1e3, 1e3, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 30), st.just(3)), elements=finite),
       st.sampled_from(["unit_ball", "centroid_only"]))
def test_normalize_inverse_roundtrip(pts, mode):
    out, tf = normalize_center(PointCloud(pts), mode)
    back = tf.invert(out.points)
    scale = max(1.0, np.abs(pts).max())
    assert np.abs(back - pts).max() <= 1e-9 * scale


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, 3, elements=finite), st.floats(1e-3, 1e3))
def test_transform_apply_invert(t, s):
    tf = NormalizationTransform(t, s)
    x = np.array([[1.0, -2.0, 3.0], [0.5, 0.25, -7.0]])
    np.testing.assert_allclose(tf.invert(tf.apply(x)), x, rtol=1e-9, atol=1e-9 * np.abs(t).max())
