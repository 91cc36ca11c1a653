"""Linear assignment solvers.

Both solvers are shortest-augmenting-path variants of Jonker-Volgenant:
rows are inserted one at a time and a Dijkstra search over reduced costs
finds the cheapest augmenting path to a free column. The dense solver scans
every column per step (O(n^3)); the sparse solver walks a CSR candidate graph
with a binary heap so that only candidate edges are ever touched.

Ties are broken towards the lowest column index in both solvers.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass

import numba
import numpy as np
from scipy.spatial import cKDTree

from .errors import AssignmentInfeasible, SizeMismatch

log = logging.getLogger(__name__)

DEFAULT_K = 50
DEFAULT_K_MAX = 400
DENSE_FALLBACK_MAX_ROWS = 4096


@dataclass(frozen=True)
class AssignmentResult:
    row_to_col: np.ndarray
    total_cost: float
    k_used: int | None = None

    @property
    def col_to_row(self) -> dict:
        return {int(c): r for r, c in enumerate(self.row_to_col)}


@dataclass(frozen=True)
class SparseCandidates:
    """CSR candidate graph: row ``i`` owns ``cols[indptr[i]:indptr[i+1]]``,
    sorted ascending by cost (then by column index)."""

    indptr: np.ndarray
    cols: np.ndarray
    costs: np.ndarray
    n_cols: int

    @property
    def n_rows(self) -> int:
        return len(self.indptr) - 1

    def row(self, i):
        sl = slice(self.indptr[i], self.indptr[i + 1])
        return self.cols[sl], self.costs[sl]

    @classmethod
    def from_lists(cls, rows, n_cols):
        """Build from ``[[(col, cost), ...], ...]``; sorts each row."""
        indptr = [0]
        cols, costs = [], []
        for cand in rows:
            cand = sorted(cand, key=lambda cc: (cc[1], cc[0]))
            cols.extend(int(c) for c, _ in cand)
            costs.extend(float(w) for _, w in cand)
            indptr.append(len(cols))
        return cls(np.asarray(indptr, np.int64), np.asarray(cols, np.int64),
                   np.asarray(costs, np.float64), int(n_cols))

    def union(self, other: "SparseCandidates") -> "SparseCandidates":
        if other.n_rows != self.n_rows or other.n_cols != self.n_cols:
            raise SizeMismatch("candidate graphs have different shapes")
        rows = np.concatenate([np.repeat(np.arange(self.n_rows), np.diff(self.indptr)),
                               np.repeat(np.arange(other.n_rows), np.diff(other.indptr))])
        cols = np.concatenate([self.cols, other.cols])
        costs = np.concatenate([self.costs, other.costs])
        return _csr_from_triplets(rows, cols, costs, self.n_rows, self.n_cols)


def _csr_from_triplets(rows, cols, costs, n_rows, n_cols):
    order = np.lexsort((cols, costs, rows))
    rows, cols, costs = rows[order], cols[order], costs[order]
    # drop duplicate (row, col) pairs; costs are equal for a given pair
    key = rows.astype(np.int64) * n_cols + cols
    _, first = np.unique(key, return_index=True)
    keep = np.sort(first)
    rows, cols, costs = rows[keep], cols[keep], costs[keep]
    indptr = np.zeros(n_rows + 1, np.int64)
    np.add.at(indptr, rows + 1, 1)
    return SparseCandidates(np.cumsum(indptr), cols.astype(np.int64),
                            costs.astype(np.float64), int(n_cols))


# --------------------------------------------------------------------------
# dense solver


@numba.njit(cache=True)
def _lapjv_dense(cost):
    n_rows, n_cols = cost.shape
    u = np.zeros(n_rows)
    v = np.zeros(n_cols)
    shortest = np.empty(n_cols)
    path = np.full(n_cols, -1, np.int64)
    col4row = np.full(n_rows, -1, np.int64)
    row4col = np.full(n_cols, -1, np.int64)
    scanned_rows = np.zeros(n_rows, np.bool_)
    scanned_cols = np.zeros(n_cols, np.bool_)
    remaining = np.empty(n_cols, np.int64)

    for cur_row in range(n_rows):
        for j in range(n_cols):
            shortest[j] = np.inf
            remaining[j] = j
            scanned_cols[j] = False
        scanned_rows[:] = False
        n_remaining = n_cols
        min_val = 0.0
        i = cur_row
        sink = -1
        while sink == -1:
            scanned_rows[i] = True
            lowest = np.inf
            index = -1
            best_j = n_cols
            for it in range(n_remaining):
                j = remaining[it]
                r = min_val + cost[i, j] - u[i] - v[j]
                if r < shortest[j]:
                    path[j] = i
                    shortest[j] = r
                if shortest[j] < lowest or (shortest[j] == lowest and j < best_j):
                    lowest = shortest[j]
                    index = it
                    best_j = j
            if lowest == np.inf:
                return col4row, u, v, False
            min_val = lowest
            j = remaining[index]
            if row4col[j] == -1:
                sink = j
            else:
                i = row4col[j]
            scanned_cols[j] = True
            n_remaining -= 1
            remaining[index] = remaining[n_remaining]

        u[cur_row] += min_val
        for i in range(n_rows):
            if scanned_rows[i] and i != cur_row:
                u[i] += min_val - shortest[col4row[i]]
        for j in range(n_cols):
            if scanned_cols[j]:
                v[j] -= min_val - shortest[j]

        j = sink
        while True:
            i = path[j]
            row4col[j] = i
            prev = col4row[i]
            col4row[i] = j
            j = prev
            if i == cur_row:
                break
    return col4row, u, v, True


def _check_cost(cost):
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise SizeMismatch("cost matrix must be 2-D")
    if cost.shape[0] > cost.shape[1]:
        raise SizeMismatch(f"rows ({cost.shape[0]}) must not exceed cols ({cost.shape[1]})")
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix contains non-finite entries")
    if np.any(cost < 0):
        raise ValueError("cost matrix contains negative entries")
    return np.ascontiguousarray(cost)


def solve_dense(cost) -> AssignmentResult:
    """Optimal assignment for a dense ``rows x cols`` matrix (rows <= cols)."""
    cost = _check_cost(cost)
    if cost.shape[0] == 0:
        return AssignmentResult(np.zeros(0, np.int64), 0.0)
    col4row, _, _, ok = _lapjv_dense(cost)
    if not ok:  # unreachable for finite costs
        raise AssignmentInfeasible("dense assignment failed")
    total = float(cost[np.arange(cost.shape[0]), col4row].sum())
    return AssignmentResult(col4row, total)


# --------------------------------------------------------------------------
# sparse solver


@numba.njit(cache=True)
def _heap_push(hkey, hcol, size, key, col):
    pos = size
    hkey[pos] = key
    hcol[pos] = col
    while pos > 0:
        parent = (pos - 1) >> 1
        if hkey[parent] < key or (hkey[parent] == key and hcol[parent] <= col):
            break
        hkey[pos] = hkey[parent]
        hcol[pos] = hcol[parent]
        pos = parent
    hkey[pos] = key
    hcol[pos] = col
    return size + 1


@numba.njit(cache=True)
def _heap_pop(hkey, hcol, size):
    key = hkey[0]
    col = hcol[0]
    size -= 1
    if size > 0:
        lk = hkey[size]
        lc = hcol[size]
        pos = 0
        while True:
            child = 2 * pos + 1
            if child >= size:
                break
            other = child + 1
            if other < size and (hkey[other] < hkey[child] or
                                 (hkey[other] == hkey[child] and hcol[other] < hcol[child])):
                child = other
            if lk < hkey[child] or (lk == hkey[child] and lc <= hcol[child]):
                break
            hkey[pos] = hkey[child]
            hcol[pos] = hcol[child]
            pos = child
        hkey[pos] = lk
        hcol[pos] = lc
    return key, col, size


@numba.njit(cache=True)
def _lapjv_sparse(indptr, cols, costs, u, v, col4row, row4col):
    # u, v, col4row, row4col are updated in place; the caller guarantees
    # non-negative reduced costs on every edge and tight matched edges
    n_rows = len(u)
    n_cols = len(v)
    shortest = np.full(n_cols, np.inf)
    path = np.full(n_cols, -1, np.int64)
    scanned = np.zeros(n_cols, np.bool_)
    touched = np.empty(n_cols, np.int64)
    done_cols = np.empty(n_cols, np.int64)
    done_rows = np.empty(n_rows + 1, np.int64)
    cap = len(cols) + 1
    hkey = np.empty(cap)
    hcol = np.empty(cap, np.int64)

    n_scanned = 0
    for cur_row in range(n_rows):
        if col4row[cur_row] != -1:
            continue
        n_touched = 0
        n_done = 0
        n_done_rows = 0
        hsize = 0
        min_val = 0.0
        i = cur_row
        sink = -1
        while True:
            done_rows[n_done_rows] = i
            n_done_rows += 1
            ui = u[i]
            for e in range(indptr[i], indptr[i + 1]):
                j = cols[e]
                if scanned[j]:
                    continue
                r = min_val + costs[e] - ui - v[j]
                if r < shortest[j]:
                    if shortest[j] == np.inf:
                        touched[n_touched] = j
                        n_touched += 1
                    shortest[j] = r
                    path[j] = i
                    if hsize >= cap:
                        # compact: rebuild heap from live entries
                        hsize = 0
                        for t in range(n_touched):
                            jj = touched[t]
                            if not scanned[jj] and shortest[jj] < np.inf:
                                hsize = _heap_push(hkey, hcol, hsize, shortest[jj], jj)
                    else:
                        hsize = _heap_push(hkey, hcol, hsize, r, j)
            # pop the closest unscanned column, skipping stale entries
            j = -1
            while hsize > 0:
                key, jj, hsize = _heap_pop(hkey, hcol, hsize)
                if not scanned[jj] and key == shortest[jj]:
                    j = jj
                    min_val = key
                    break
            if j == -1:
                break
            scanned[j] = True
            done_cols[n_done] = j
            n_done += 1
            if row4col[j] == -1:
                sink = j
                break
            i = row4col[j]

        n_scanned += n_done
        if sink == -1:
            return False, cur_row, n_scanned

        u[cur_row] += min_val
        for t in range(1, n_done_rows):
            r_i = done_rows[t]
            u[r_i] += min_val - shortest[col4row[r_i]]
        for t in range(n_done):
            jj = done_cols[t]
            v[jj] -= min_val - shortest[jj]

        j = sink
        while True:
            i = path[j]
            row4col[j] = i
            prev = col4row[i]
            col4row[i] = j
            j = prev
            if i == cur_row:
                break

        for t in range(n_touched):
            jj = touched[t]
            shortest[jj] = np.inf
            scanned[jj] = False
    return True, n_rows, n_scanned


@numba.njit(cache=True)
def _column_reduction(indptr, cols, costs, u, v, col4row, row4col):
    # v_j = cheapest edge into column j; that edge's row takes j if still free.
    # With u = 0 every reduced cost is non-negative and matched edges are tight.
    n_rows = len(u)
    best_row = np.full(len(v), -1, np.int64)
    v[:] = np.inf
    for i in range(n_rows):
        for e in range(indptr[i], indptr[i + 1]):
            j = cols[e]
            if costs[e] < v[j]:
                v[j] = costs[e]
                best_row[j] = i
    for j in range(len(v)):
        i = best_row[j]
        if i == -1:
            v[j] = 0.0
        elif col4row[i] == -1:
            col4row[i] = j
            row4col[j] = i


def solve_sparse(cands: SparseCandidates, rows: int | None = None, cols: int | None = None) -> AssignmentResult:
    """Optimal assignment restricted to candidate edges.

    Raises AssignmentInfeasible when no matching covers every row.
    """
    rows = cands.n_rows if rows is None else rows
    cols = cands.n_cols if cols is None else cols
    if rows != cands.n_rows:
        raise SizeMismatch(f"candidate graph has {cands.n_rows} rows, expected {rows}")
    if rows > cols:
        raise SizeMismatch(f"rows ({rows}) must not exceed cols ({cols})")
    if rows == 0:
        return AssignmentResult(np.zeros(0, np.int64), 0.0)
    if np.any(np.diff(cands.indptr) == 0):
        raise AssignmentInfeasible("a row has no candidate columns")
    u = np.zeros(rows)
    v = np.zeros(cols)
    col4row = np.full(rows, -1, np.int64)
    row4col = np.full(cols, -1, np.int64)
    if rows == cols:
        # warm start is only sound when every column ends up matched
        _column_reduction(cands.indptr, cands.cols, cands.costs, u, v, col4row, row4col)
    ok, failed_row, _ = _lapjv_sparse(cands.indptr, cands.cols, cands.costs, u, v, col4row, row4col)
    if not ok:
        raise AssignmentInfeasible(f"no augmenting path for row {failed_row}")
    row_ids = np.repeat(np.arange(rows), np.diff(cands.indptr))
    hit = cands.cols == col4row[row_ids]
    total = float(cands.costs[hit].sum())
    return AssignmentResult(col4row, total)


# --------------------------------------------------------------------------
# candidate generation and escalation


def sq_dist(a, b):
    """Squared Euclidean distance matrix between row sets ``a`` and ``b``."""
    a = np.asarray(a, np.float64)
    b = np.asarray(b, np.float64)
    d = a[:, None, :] - b[None, :, :]
    return np.einsum("ijk,ijk->ij", d, d)


def build_knn_candidates(sources, targets, k: int) -> SparseCandidates:
    """Each source's ``k`` nearest targets under squared Euclidean cost."""
    sources = np.asarray(sources, np.float64)
    targets = np.asarray(targets, np.float64)
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(targets) == 0:
        raise ValueError("targets must be non-empty")
    k = min(k, len(targets))
    tree = cKDTree(targets)
    _, idx = tree.query(sources, k=k)
    idx = np.asarray(idx, np.int64).reshape(len(sources), k)
    # exact costs recomputed from coordinates so ties compare bit-identically
    diff = sources[:, None, :] - targets[idx]
    cost = np.einsum("ijk,ijk->ij", diff, diff)
    rows = np.repeat(np.arange(len(sources)), k)
    return _csr_from_triplets(rows, idx.ravel(), cost.ravel(), len(sources), len(targets))


def reverse_knn_candidates(sources, targets, k: int) -> SparseCandidates:
    """Edges (i, j) where source ``i`` is among target ``j``'s ``k`` nearest sources."""
    sources = np.asarray(sources, np.float64)
    targets = np.asarray(targets, np.float64)
    k = min(k, len(sources))
    _, idx = cKDTree(sources).query(targets, k=k)
    idx = np.asarray(idx, np.int64).reshape(len(targets), k)
    diff = targets[:, None, :] - sources[idx]
    cost = np.einsum("ijk,ijk->ij", diff, diff)
    cols = np.repeat(np.arange(len(targets)), k)
    return _csr_from_triplets(idx.ravel(), cols, cost.ravel(), len(sources), len(targets))


def escalate_and_solve(sources, targets, k0: int = DEFAULT_K, k_max: int = DEFAULT_K_MAX,
                       dense_max_rows: int = DENSE_FALLBACK_MAX_ROWS,
                       symmetric: bool = False) -> AssignmentResult:
    """Sparse assignment with k doubling on infeasibility, then a dense fallback.

    With ``symmetric`` the candidate graph also contains, for every target,
    the edges to its ``k`` nearest sources, so no target starts out isolated.
    """
    sources = np.asarray(sources, np.float64)
    targets = np.asarray(targets, np.float64)
    if k0 < 1:
        raise ValueError("k0 must be >= 1")
    n, m = len(sources), len(targets)
    if n > m:
        raise SizeMismatch(f"{n} sources cannot be matched injectively into {m} targets")
    k = k0
    while True:
        cands = build_knn_candidates(sources, targets, k)
        if symmetric:
            cands = cands.union(reverse_knn_candidates(sources, targets, k))
        try:
            res = solve_sparse(cands, n, m)
            return AssignmentResult(res.row_to_col, res.total_cost, k)
        except AssignmentInfeasible:
            log.debug("sparse assignment infeasible at k=%d", k)
        if k >= m or k >= k_max:
            break
        k = min(2 * k, k_max)
    if n <= dense_max_rows:
        log.info("falling back to dense assignment for %d rows", n)
        res = solve_dense(sq_dist(sources, targets))
        return AssignmentResult(res.row_to_col, res.total_cost, m)
    raise AssignmentInfeasible(f"sparse assignment infeasible up to k={k} with {n} rows")


def solve_brute_force(cost) -> AssignmentResult:
    """Exhaustive enumeration; only for tiny instances."""
    cost = np.asarray(cost, np.float64)
    n, m = cost.shape
    best, best_perm = np.inf, None
    for perm in itertools.permutations(range(m), n):
        c = cost[np.arange(n), perm].sum()
        if c < best:
            best, best_perm = c, perm
    return AssignmentResult(np.asarray(best_perm, np.int64), float(best))


# --------------------------------------------------------------------------
# coarse-to-fine sparse solver for point-set matching


def _multiscale_candidates(sources, targets, predicted, k):
    """kNN edges around each source's predicted target, the reverse edges,
    and the identity matching so a perfect matching always exists."""
    n, m = len(sources), len(targets)
    k = min(k, m)
    _, fwd = cKDTree(targets).query(predicted, k=k)
    _, rev = cKDTree(predicted).query(targets, k=k)
    fwd = np.asarray(fwd, np.int64).reshape(n, k)
    rev = np.asarray(rev, np.int64).reshape(m, k)
    rows = np.concatenate([np.repeat(np.arange(n), k), rev.ravel(), np.arange(n)])
    cols = np.concatenate([fwd.ravel(), np.repeat(np.arange(m), k), np.arange(n)])
    diff = sources[rows] - targets[cols]
    cost = np.einsum("ij,ij->i", diff, diff)
    return _csr_from_triplets(rows, cols, cost, n, m)


def _solve_multiscale(sources, targets, k, base, rng):
    n = len(sources)
    if n <= base:
        return solve_dense(sq_dist(sources, targets)).row_to_col
    n_coarse = n // 4
    src_idx = np.sort(rng.permutation(n)[:n_coarse])
    tgt_idx = np.sort(rng.permutation(n)[:n_coarse])
    coarse = _solve_multiscale(sources[src_idx], targets[tgt_idx], k, base, rng)
    # each source is predicted to land where its nearest coarse source went
    _, nearest = cKDTree(sources[src_idx]).query(sources)
    predicted = targets[tgt_idx][coarse][nearest]
    cands = _multiscale_candidates(sources, targets, predicted, k)
    return solve_sparse(cands, n, n).row_to_col


def solve_geometric(sources, targets, k: int = DEFAULT_K, base: int = 1024,
                    seed: int = 0) -> AssignmentResult:
    """Square point-set matching under squared Euclidean cost.

    Up to ``base`` points the dense solver gives the exact optimum. Larger
    problems are solved on a quarter-size random subsample first; the coarse
    matching predicts where every source should land, and the fine problem
    is solved exactly on the kNN graph around those predictions.

    Sources are put in lexicographic order before solving, so the result
    does not depend on the input order.
    """
    sources = np.asarray(sources, np.float64)
    targets = np.asarray(targets, np.float64)
    n, m = len(sources), len(targets)
    if n != m:
        return escalate_and_solve(sources, targets, k, max(k, DEFAULT_K_MAX), symmetric=True)
    if n == 0:
        return AssignmentResult(np.zeros(0, np.int64), 0.0)
    order = np.lexsort(sources.T[::-1])
    rng = np.random.default_rng(seed)
    sorted_cols = _solve_multiscale(sources[order], targets, k, base, rng)
    row_to_col = np.empty(n, np.int64)
    row_to_col[order] = sorted_cols
    diff = sources - targets[row_to_col]
    total = float(np.einsum("ij,ij->", diff, diff))
    return AssignmentResult(row_to_col, total, k if n > base else m)
