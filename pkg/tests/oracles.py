"""Slow, obviously-correct reference implementations used as test oracles."""

import numpy as np


def bf_dists(a, b):
    return np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(-1))


def bf_cd_l1(a, b):
    d = bf_dists(a, b)
    return 0.5 * (d.min(1).mean() + d.min(0).mean())


def bf_cd_l2(a, b):
    d = ((a[:, None, :] - b[None, :, :]) ** 2).sum(-1)
    return 0.5 * (d.min(1).mean() + d.min(0).mean())


def bf_fscore(p, g, tau):
    d = bf_dists(p, g)
    prec, rec = (d.min(1) < tau).mean(), (d.min(0) < tau).mean()
    return 0.0 if prec + rec == 0 else 2 * prec * rec / (prec + rec)


def bf_nc(p, pn, g, gn):
    d = bf_dists(p, g)
    a = np.abs((pn * gn[d.argmin(1)]).sum(1)).mean()
    b = np.abs((gn * pn[d.argmin(0)]).sum(1)).mean()
    return 0.5 * (a + b)


def _norm(v):
    return np.sqrt(np.dot(v, v))


def seg_dist(p, a, b):
    ab = b - a
    t = min(max(np.dot(p - a, ab) / np.dot(ab, ab), 0.0), 1.0)
    return _norm(p - (a + t * ab))


def bf_point_triangle(p, a, b, c):
    """Plane projection if inside, else the nearest of the three edges."""
    n = np.cross(b - a, c - a)
    n = n / _norm(n)
    h = np.dot(p - a, n)
    q = p - h * n
    inside = all(np.dot(np.cross(v1 - v0, q - v0), n) >= 0 for v0, v1 in ((a, b), (b, c), (c, a)))
    if inside:
        return abs(h)
    return min(seg_dist(p, a, b), seg_dist(p, b, c), seg_dist(p, c, a))


def bf_point_mesh(points, mesh):
    """Evaluated in extended precision: on thin random triangles two float64
    evaluations can each carry ~5e-13 relative error, so a float64 oracle
    could not certify 1e-12 agreement."""
    tris = np.asarray(mesh.triangles, np.longdouble)
    pts = np.asarray(points, np.longdouble)
    return np.array([min(bf_point_triangle(p, *t) for t in tris) for p in pts], np.float64)


# visibility

def raycast_face_ids(mesh, cam):
    """Nearest hit face per pixel center by Moller-Trumbore ray casting."""
    w, h = cam.resolution
    R = cam.rotation
    px, py = np.meshgrid(np.arange(w) + 0.5, np.arange(h) + 0.5)
    d_cam = np.stack([(px - 0.5 * w) / cam.focal, (py - 0.5 * h) / cam.focal, np.ones_like(px)], -1)
    dirs = d_cam.reshape(-1, 3) @ R
    tri = mesh.triangles
    best_t = np.full(len(dirs), np.inf)
    best_f = np.full(len(dirs), -1)
    for f, (a, b, c) in enumerate(tri):
        e1, e2 = b - a, c - a
        p = np.cross(dirs, e2)
        det = p @ e1
        ok = np.abs(det) > 1e-14
        inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
        s = cam.position - a
        u = (p @ s) * inv
        q = np.cross(s, e1)
        v = (dirs @ q) * inv
        t = (q @ e2) * inv
        hit = ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > 0) & (t < best_t)
        best_t[hit] = t[hit]
        best_f[hit] = f
    return best_f.reshape(h, w)


