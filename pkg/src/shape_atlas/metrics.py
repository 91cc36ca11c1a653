"""Point-cloud completion metrics and 3-D training-loss values.

Conventions:

* CD-L1 = 1/2 (mean_a min_b |a-b| + mean_b min_a |b-a|)
* CD-L2 = the same with squared distances
* F-score at tau: harmonic mean of the fraction of pred within tau of gt
  and gt within tau of pred (strict ``<``)
* InfoCD: per direction ``mean_i d_i / T + lam * log(mean_j exp(-d_j / T))``
  with ``d`` the Euclidean nearest-neighbour distance, averaged over both
  directions. The log-mean-exp (rather than log-sum-exp) keeps the value
  independent of point multiplicity.
* NC: mean over both directions of ``|n_query . n_nearest|``
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numba
import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyCloud, EmptyMesh, MissingNormals
from .geom import PointCloud, TriangleMesh

DEFAULT_TAU = 0.01
DEFAULT_INFOCD_TEMPERATURE = 0.07
DEFAULT_INFOCD_LAMBDA = 1e-7
DEFAULT_EDGE_RADIUS = 0.02
DEFAULT_SHARP_ANGLE = 30.0


def _points(c):
    pts = c.points if isinstance(c, PointCloud) else np.asarray(c, np.float64).reshape(-1, 3)
    if len(pts) == 0:
        raise EmptyCloud("metric needs non-empty clouds")
    return pts


def _normals(c):
    if not isinstance(c, PointCloud) or c.normals is None:
        raise MissingNormals("metric needs normals on both clouds")
    return c.normals


def nearest(query, ref):
    """Index of the nearest ``ref`` point and its squared distance, per query point."""
    _, idx = cKDTree(ref).query(query, k=1)
    idx = np.asarray(idx, np.int64)
    diff = query - ref[idx]
    return idx, np.einsum("ij,ij->i", diff, diff)


def _directional(a, b):
    _, ab = nearest(a, b)
    _, ba = nearest(b, a)
    return ab, ba


def chamfer_l1(a, b) -> float:
    ab, ba = _directional(_points(a), _points(b))
    return 0.5 * (float(np.mean(np.sqrt(ab))) + float(np.mean(np.sqrt(ba))))


def chamfer_l2(a, b) -> float:
    ab, ba = _directional(_points(a), _points(b))
    return 0.5 * (float(np.mean(ab)) + float(np.mean(ba)))


def precision_recall(pred, gt, tau: float = DEFAULT_TAU):
    if not tau > 0:
        raise ValueError("tau must be positive")
    pg, gp = _directional(_points(pred), _points(gt))
    return float(np.mean(np.sqrt(pg) < tau)), float(np.mean(np.sqrt(gp) < tau))


def fscore(pred, gt, tau: float = DEFAULT_TAU) -> float:
    p, r = precision_recall(pred, gt, tau)
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def _infocd_direction(d, temperature, lam):
    z = -d / temperature
    zmax = z.max()
    log_mean_exp = zmax + math.log(float(np.mean(np.exp(z - zmax))))
    return float(np.mean(d)) / temperature + lam * log_mean_exp


def infocd(pred, gt, tau_temp: float = DEFAULT_INFOCD_TEMPERATURE,
           lambda_reg: float = DEFAULT_INFOCD_LAMBDA) -> float:
    """Contrastive Chamfer value (see module docstring for the exact form)."""
    if not tau_temp > 0:
        raise ValueError("temperature must be positive")
    pg, gp = _directional(_points(pred), _points(gt))
    return 0.5 * (_infocd_direction(np.sqrt(pg), tau_temp, lambda_reg) +
                  _infocd_direction(np.sqrt(gp), tau_temp, lambda_reg))


def normal_consistency(pred: PointCloud, gt: PointCloud) -> float:
    pn, gn = _normals(pred), _normals(gt)
    pp, gp = _points(pred), _points(gt)
    i_pg, _ = nearest(pp, gp)
    i_gp, _ = nearest(gp, pp)
    d1 = np.abs(np.einsum("ij,ij->i", pn, gn[i_pg]))
    d2 = np.abs(np.einsum("ij,ij->i", gn, pn[i_gp]))
    return 0.5 * (float(np.mean(d1)) + float(np.mean(d2)))


# --------------------------------------------------------------------------
# edges


def edge_points(cloud: PointCloud, radius: float = DEFAULT_EDGE_RADIUS,
                sharp_angle_deg: float = DEFAULT_SHARP_ANGLE) -> np.ndarray:
    """Boolean mask of points with a neighbour (within ``radius``) whose
    normal deviates by more than ``sharp_angle_deg``."""
    n = _normals(cloud)
    pts = _points(cloud)
    pairs = cKDTree(pts).query_pairs(radius, output_type="ndarray")
    out = np.zeros(len(pts), bool)
    if len(pairs):
        dots = np.einsum("ij,ij->i", n[pairs[:, 0]], n[pairs[:, 1]])
        sharp = pairs[dots < math.cos(math.radians(sharp_angle_deg))]
        out[sharp.ravel()] = True
    return out


def edge_chamfer(pred: PointCloud, gt: PointCloud, sharp_angle_deg: float = DEFAULT_SHARP_ANGLE,
                 radius: float = DEFAULT_EDGE_RADIUS) -> float:
    """CD-L1 between the edge points of both clouds.

    A side with no edge points contributes its full cloud instead; when
    neither side has edges the result is ``nan`` (undefined).
    """
    ep = edge_points(pred, radius, sharp_angle_deg)
    eg = edge_points(gt, radius, sharp_angle_deg)
    if not ep.any() and not eg.any():
        return float("nan")
    a = pred.points[ep] if ep.any() else pred.points
    b = gt.points[eg] if eg.any() else gt.points
    return chamfer_l1(a, b)


# --------------------------------------------------------------------------
# point-to-mesh distance with a bounding-volume hierarchy


@dataclass(frozen=True, eq=False)
class BVH:
    lo: np.ndarray       # (nodes, 3)
    hi: np.ndarray       # (nodes, 3)
    left: np.ndarray     # child index or -1 for leaves
    right: np.ndarray
    start: np.ndarray    # leaf range into ``order``
    stop: np.ndarray
    order: np.ndarray    # triangle indices
    tri: np.ndarray      # (F, 3, 3)


def build_bvh(mesh: TriangleMesh, leaf_size: int = 4) -> BVH:
    """Median-split BVH over triangle centroids."""
    tri = np.ascontiguousarray(mesh.triangles)
    if len(tri) == 0:
        raise EmptyMesh("mesh has no faces")
    tlo, thi = tri.min(axis=1), tri.max(axis=1)
    cen = tri.mean(axis=1)
    order = np.arange(len(tri))
    lo, hi, left, right, start, stop = [], [], [], [], [], []
    stack = [(0, len(tri), -1, 0)]
    while stack:
        s, e, parent, side = stack.pop()
        node = len(lo)
        idx = order[s:e]
        lo.append(tlo[idx].min(axis=0))
        hi.append(thi[idx].max(axis=0))
        left.append(-1)
        right.append(-1)
        start.append(s)
        stop.append(e)
        if parent >= 0:
            (left if side == 0 else right)[parent] = node
        if e - s <= leaf_size:
            continue
        c = cen[idx]
        axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
        srt = idx[np.argsort(c[:, axis], kind="stable")]
        order[s:e] = srt
        mid = (s + e) // 2
        stack.append((mid, e, node, 1))
        stack.append((s, mid, node, 0))
    return BVH(np.array(lo), np.array(hi), np.array(left, np.int64), np.array(right, np.int64),
               np.array(start, np.int64), np.array(stop, np.int64), order, tri)


@numba.njit(cache=True)
def _closest_sq(px, py, pz, t):
    # closest point on triangle by Voronoi-region tests
    ax, ay, az = t[0, 0], t[0, 1], t[0, 2]
    abx, aby, abz = t[1, 0] - ax, t[1, 1] - ay, t[1, 2] - az
    acx, acy, acz = t[2, 0] - ax, t[2, 1] - ay, t[2, 2] - az
    apx, apy, apz = px - ax, py - ay, pz - az
    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    if d1 <= 0.0 and d2 <= 0.0:
        qx, qy, qz = ax, ay, az
    else:
        bpx, bpy, bpz = px - t[1, 0], py - t[1, 1], pz - t[1, 2]
        d3 = abx * bpx + aby * bpy + abz * bpz
        d4 = acx * bpx + acy * bpy + acz * bpz
        cpx, cpy, cpz = px - t[2, 0], py - t[2, 1], pz - t[2, 2]
        d5 = abx * cpx + aby * cpy + abz * cpz
        d6 = acx * cpx + acy * cpy + acz * cpz
        vc = d1 * d4 - d3 * d2
        vb = d5 * d2 - d1 * d6
        va = d3 * d6 - d5 * d4
        if d3 >= 0.0 and d4 <= d3:
            qx, qy, qz = t[1, 0], t[1, 1], t[1, 2]
        elif vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
            w = d1 / (d1 - d3)
            qx, qy, qz = ax + w * abx, ay + w * aby, az + w * abz
        elif d6 >= 0.0 and d5 <= d6:
            qx, qy, qz = t[2, 0], t[2, 1], t[2, 2]
        elif vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
            w = d2 / (d2 - d6)
            qx, qy, qz = ax + w * acx, ay + w * acy, az + w * acz
        elif va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
            w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
            qx = t[1, 0] + w * (t[2, 0] - t[1, 0])
            qy = t[1, 1] + w * (t[2, 1] - t[1, 1])
            qz = t[1, 2] + w * (t[2, 2] - t[1, 2])
        else:
            denom = 1.0 / (va + vb + vc)
            v = vb * denom
            w = vc * denom
            qx = ax + abx * v + acx * w
            qy = ay + aby * v + acy * w
            qz = az + abz * v + acz * w
    dx, dy, dz = px - qx, py - qy, pz - qz
    return dx * dx + dy * dy + dz * dz


@numba.njit(cache=True)
def _box_sq(px, py, pz, lo, hi):
    dx = max(lo[0] - px, 0.0, px - hi[0])
    dy = max(lo[1] - py, 0.0, py - hi[1])
    dz = max(lo[2] - pz, 0.0, pz - hi[2])
    return dx * dx + dy * dy + dz * dz


@numba.njit(cache=True)
def _bvh_query(points, lo, hi, left, right, start, stop, order, tri):
    n = len(points)
    out = np.empty(n)
    face = np.empty(n, np.int64)
    stack = np.empty(128, np.int64)
    for q in range(n):
        px, py, pz = points[q, 0], points[q, 1], points[q, 2]
        best = np.inf
        best_f = -1
        sp = 0
        stack[sp] = 0
        sp += 1
        while sp > 0:
            sp -= 1
            node = stack[sp]
            if _box_sq(px, py, pz, lo[node], hi[node]) > best:
                continue
            if left[node] == -1:
                for k in range(start[node], stop[node]):
                    f = order[k]
                    d = _closest_sq(px, py, pz, tri[f])
                    if d < best or (d == best and f < best_f):
                        best = d
                        best_f = f
            else:
                a, b = left[node], right[node]
                da = _box_sq(px, py, pz, lo[a], hi[a])
                db = _box_sq(px, py, pz, lo[b], hi[b])
                # push the farther child first so the nearer one is visited first
                if da <= db:
                    stack[sp] = b
                    stack[sp + 1] = a
                else:
                    stack[sp] = a
                    stack[sp + 1] = b
                sp += 2
        out[q] = best
        face[q] = best_f
    return out, face


def point_to_mesh_distances(points, mesh_or_bvh) -> np.ndarray:
    """Exact unsigned distance from every point to the nearest triangle."""
    bvh = mesh_or_bvh if isinstance(mesh_or_bvh, BVH) else build_bvh(mesh_or_bvh)
    pts = np.ascontiguousarray(_points(points))
    sq, _ = _bvh_query(pts, bvh.lo, bvh.hi, bvh.left, bvh.right, bvh.start, bvh.stop,
                       bvh.order, bvh.tri)
    return np.sqrt(sq)


def point_to_mesh(pred, mesh: TriangleMesh) -> float:
    """Mean point-to-triangle distance."""
    if len(mesh.faces) == 0:
        raise EmptyMesh("mesh has no faces")
    return float(np.mean(point_to_mesh_distances(pred, mesh)))


# --------------------------------------------------------------------------


@dataclass
class MetricReport:
    cd_l1: float
    cd_l2: float
    fscore_at_tau: float
    tau: float
    infocd: float | None = None
    mesh_loss: float | None = None
    ecd: float | None = None
    nc: float | None = None

    def as_dict(self):
        return asdict(self)


def evaluate(pred: PointCloud, gt: PointCloud, mesh: TriangleMesh | None = None,
             tau: float = DEFAULT_TAU, metrics=None, edge_radius: float = DEFAULT_EDGE_RADIUS,
             sharp_angle_deg: float = DEFAULT_SHARP_ANGLE) -> MetricReport:
    """Compute the requested metrics (all applicable ones by default)."""
    wanted = set(metrics or ("cd_l1", "cd_l2", "fscore", "infocd", "mesh_loss", "ecd", "nc"))
    both_normals = pred.normals is not None and gt.normals is not None
    rep = MetricReport(
        cd_l1=chamfer_l1(pred, gt) if "cd_l1" in wanted else float("nan"),
        cd_l2=chamfer_l2(pred, gt) if "cd_l2" in wanted else float("nan"),
        fscore_at_tau=fscore(pred, gt, tau) if "fscore" in wanted else float("nan"),
        tau=tau,
    )
    if "infocd" in wanted:
        rep.infocd = infocd(pred, gt)
    if "mesh_loss" in wanted and mesh is not None:
        rep.mesh_loss = point_to_mesh(pred, mesh)
    if "ecd" in wanted and both_normals:
        rep.ecd = edge_chamfer(pred, gt, sharp_angle_deg, edge_radius)
    if "nc" in wanted and both_normals:
        rep.nc = normal_consistency(pred, gt)
    return rep
