import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shape_atlas.errors import EmptyCloud, MissingNormals
from shape_atlas.geom import PointCloud, TriangleMesh, sample_surface
from shape_atlas.metrics import (MetricReport, chamfer_l1, chamfer_l2, edge_chamfer, edge_points, evaluate, fscore,
                                 infocd, normal_consistency, point_to_mesh, point_to_mesh_distances,
                                 precision_recall)
from shape_atlas.shapes import box, icosphere, torus

from conftest import unit
from oracles import bf_cd_l1, bf_cd_l2, bf_dists, bf_fscore, bf_nc, bf_point_mesh


# chamfer ---------------------------------------------------------------------

def test_cd_identity_and_single_pairs():
    a = np.random.default_rng(0).random((30, 3))
    assert chamfer_l1(a, a) == 0 and chamfer_l2(a, a) == 0
    assert chamfer_l1([[0, 0, 0]], [[1, 0, 0]]) == 1.0
    assert chamfer_l2([[0, 0, 0]], [[2, 0, 0]]) == 4.0


@pytest.mark.parametrize("seed", range(10))
def test_cd_matches_bruteforce(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.random((64, 3)), rng.random((80, 3))
    assert chamfer_l1(a, b) == pytest.approx(bf_cd_l1(a, b), rel=1e-12)
    assert chamfer_l2(a, b) == pytest.approx(bf_cd_l2(a, b), rel=1e-12)


def test_empty_cloud_errors():
    with pytest.raises(EmptyCloud):
        chamfer_l1(np.zeros((0, 3)), np.zeros((1, 3)))
    with pytest.raises(EmptyCloud):
        fscore(np.zeros((1, 3)), np.zeros((0, 3)))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.floats(-np.pi, np.pi))
def test_cd_symmetric_and_rigid_invariant(seed, angle):
    rng = np.random.default_rng(seed)
    a, b = rng.random((20, 3)), rng.random((25, 3))
    assert chamfer_l1(a, b) == pytest.approx(chamfer_l1(b, a), rel=1e-12)
    c, s = math.cos(angle), math.sin(angle)
    R = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
    t = rng.normal(size=3)
    assert chamfer_l2(a @ R.T + t, b @ R.T + t) == pytest.approx(chamfer_l2(a, b), rel=1e-9)
    assert chamfer_l1(a @ R.T + t, b @ R.T + t) == pytest.approx(chamfer_l1(a, b), rel=1e-9)


# f-score -------------------------------------------------------------------------

def test_fscore_cases():
    a = np.random.default_rng(1).random((50, 3))
    assert fscore(a, a) == 1.0
    assert fscore(a, a + 100 * 0.01 + 2) == 0.0
    gt = np.array([[0, 0, 0], [1, 0, 0]], float)
    pred = np.array([[0, 0, 0], [1, 0, 0], [5, 0, 0], [6, 0, 0]], float)
    assert precision_recall(pred, gt) == (0.5, 1.0)
    assert fscore(pred, gt) == pytest.approx(2 / 3)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.01, 0.5), st.floats(0.01, 0.5))
def test_fscore_monotone_in_tau(seed, t1, t2):
    rng = np.random.default_rng(seed)
    a, b = rng.random((30, 3)), rng.random((30, 3))
    lo, hi = sorted((t1, t2))
    assert fscore(a, b, lo) <= fscore(a, b, hi)
    assert fscore(a, b, lo) == pytest.approx(bf_fscore(a, b, lo), rel=1e-12)


# infocd --------------------------------------------------------------------------

def test_infocd_increases_with_noise():
    gt = np.random.default_rng(2).random((200, 3))
    noise = np.random.default_rng(3).normal(size=gt.shape)
    vals = [infocd(gt + s * noise, gt) for s in (0.0, 0.01, 0.05)]
    assert vals[0] < vals[1] < vals[2]


def test_infocd_order_and_duplication():
    rng = np.random.default_rng(4)
    a, b = rng.random((100, 3)), rng.random((120, 3))
    v = infocd(a, b)
    assert abs(infocd(a[rng.permutation(100)], b[rng.permutation(120)]) - v) < 1e-12
    assert abs(infocd(np.vstack([a, a]), np.vstack([b, b])) - v) < 1e-9


def test_infocd_matches_formula():
    rng = np.random.default_rng(5)
    a, b = rng.random((40, 3)), rng.random((50, 3))
    d = bf_dists(a, b)
    T, lam = 0.07, 1e-7

    def side(x):
        return x.mean() / T + lam * math.log(np.mean(np.exp(-x / T)))
    assert infocd(a, b, T, lam) == pytest.approx(0.5 * (side(d.min(1)) + side(d.min(0))), rel=1e-12)


# normal consistency --------------------------------------------------------------

def test_nc_identity_and_orthogonal():
    rng = np.random.default_rng(6)
    p = rng.random((60, 3))
    n = unit(rng.normal(size=(60, 3)))
    assert normal_consistency(PointCloud(p, n), PointCloud(p, n)) == pytest.approx(1.0)
    ortho = unit(np.cross(n, unit(rng.normal(size=(60, 3)))))
    assert normal_consistency(PointCloud(p, n), PointCloud(p, ortho)) == pytest.approx(0.0, abs=1e-12)


def test_nc_bruteforce_and_missing_normals():
    rng = np.random.default_rng(7)
    p, g = rng.random((64, 3)), rng.random((70, 3))
    pn, gn = unit(rng.normal(size=(64, 3))), unit(rng.normal(size=(70, 3)))
    assert normal_consistency(PointCloud(p, pn), PointCloud(g, gn)) == pytest.approx(bf_nc(p, pn, g, gn), rel=1e-12)
    with pytest.raises(MissingNormals):
        normal_consistency(PointCloud(p), PointCloud(g, gn))


# point to mesh ---------------------------------------------------------------------

TRI = TriangleMesh([[-1, -1, 0], [1, -1, 0], [0, 1, 0]], [[0, 1, 2]])


def test_point_above_interior():
    assert point_to_mesh([[0, 0, 0.3]], TRI) == pytest.approx(0.3, abs=1e-15)


def test_point_beyond_edge_closed_form_and_discretization():
    d, h = 0.4, 0.25
    p = np.array([[0.0, -1.0 - d, h]])  # beyond the edge y = -1
    exact = math.hypot(d, h)
    got = point_to_mesh(p, TRI)
    assert got == pytest.approx(exact, rel=1e-12)
    dense = sample_surface(TRI, 10**6, seed=0).points
    approx = np.sqrt(((dense - p) ** 2).sum(1)).min()
    assert approx >= got - 1e-12 and approx - got < 2e-3


@pytest.mark.parametrize("mesh", [icosphere(1), box((1, 0.5, 0.3), 2), torus(0.6, 0.2, 10, 6)])
def test_bvh_matches_bruteforce(mesh):
    pts = np.random.default_rng(8).normal(size=(150, 3))
    got = point_to_mesh_distances(pts, mesh)
    np.testing.assert_allclose(got, bf_point_mesh(pts, mesh), rtol=1e-12, atol=0)


@pytest.mark.parametrize("mesh", [icosphere(2), torus(), box((1, 2, 3), 5)])
def test_surface_samples_have_zero_distance(mesh):
    pts = sample_surface(mesh, 2000, seed=1)
    assert point_to_mesh(pts, mesh) <= 1e-9


# edges ---------------------------------------------------------------------------

def cube_cloud(n=6000, seed=0, noise=0.0):
    c = sample_surface(box((1, 1, 1), 1), n, seed)
    pts = c.points + noise * np.random.default_rng(seed + 1).normal(size=c.points.shape)
    return PointCloud(pts, c.normals)


def test_ecd_identical_cubes_zero():
    c = cube_cloud()
    assert edge_chamfer(c, c, radius=0.05) == 0.0


def test_sphere_has_no_edges_sentinel():
    s = sample_surface(icosphere(4), 6000, seed=0)
    s = PointCloud(s.points, unit(s.points))  # smooth radial normals
    assert not edge_points(s, radius=0.05).any()
    c = cube_cloud()
    assert math.isnan(edge_chamfer(s, s, radius=0.05))
    # one side empty: its whole cloud stands in
    v = edge_chamfer(s, c, radius=0.05)
    ec = c.points[edge_points(c, radius=0.05)]
    assert v == pytest.approx(chamfer_l1(s.points, ec), rel=1e-12)


@pytest.mark.parametrize("sigma", [0.002, 0.005])
def test_ecd_tracks_noise(sigma):
    a = cube_cloud(seed=0)
    b = cube_cloud(seed=0, noise=sigma)
    assert edge_chamfer(a, b, radius=0.05) <= 2 * sigma


def test_evaluate_report_ranges():
    a = cube_cloud(2000, 0)
    b = cube_cloud(2000, 5)
    rep = evaluate(a, b, mesh=box((1, 1, 1), 1))
    assert isinstance(rep, MetricReport)
    assert rep.cd_l1 >= 0 and rep.cd_l2 >= 0 and rep.mesh_loss >= 0
    assert 0 <= rep.fscore_at_tau <= 1 and 0 <= rep.nc <= 1
    assert rep.mesh_loss <= 1e-9
