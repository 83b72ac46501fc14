"""Exact discrete optimal transport by the transportation simplex method.

The basis is kept as a spanning tree over row and column nodes. Each pivot
prices all cells with the tree potentials (``u_i + v_j = c_ij`` on basic
cells), brings in the most negative reduced cost, and pushes flow around the
unique tree cycle it closes. The initial basis comes from the least-cost rule,
with degenerate (zero-flow) cells kept so the basis always has ``m + n - 1``
cells.
"""

from __future__ import annotations

from collections import deque

import numpy as np

_OPTIMALITY_TOL = 1e-12


def _least_cost_basis(a: np.ndarray, b: np.ndarray, C: np.ndarray):
    m, n = C.shape
    supply = a.copy()
    demand = b.copy()
    row_open = np.ones(m, dtype=bool)
    col_open = np.ones(n, dtype=bool)
    rows_left, cols_left = m, n
    flow = np.zeros((m, n))
    basis: list[tuple[int, int]] = []
    for cell in np.argsort(C, axis=None, kind="stable"):
        i, j = divmod(int(cell), n)
        if not (row_open[i] and col_open[j]):
            continue
        q = min(supply[i], demand[j])
        flow[i, j] = q
        supply[i] -= q
        demand[j] -= q
        basis.append((i, j))
        if len(basis) == m + n - 1:
            break
        # close exactly one line per allocation so the basis stays a tree
        if (supply[i] <= demand[j] and rows_left > 1) or cols_left == 1:
            row_open[i] = False
            rows_left -= 1
        else:
            col_open[j] = False
            cols_left -= 1
    return flow, basis


def transport(a, b, C, max_iter: int = 100_000) -> tuple[float, np.ndarray]:
    """Minimum-cost transport plan between histograms ``a`` and ``b``.

    ``a`` and ``b`` must be non-negative with equal totals (they are rescaled
    to the mean of the two totals). Returns ``(cost, plan)``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    C = np.asarray(C, dtype=float)
    if C.shape != (len(a), len(b)):
        raise ValueError("cost matrix shape does not match the histograms")
    if np.any(a < 0) or np.any(b < 0):
        raise ValueError("histograms must be non-negative")
    ta, tb = a.sum(), b.sum()
    if ta <= 0 or tb <= 0:
        raise ValueError("histograms must have positive mass")
    if abs(ta - tb) > 1e-9 * max(ta, tb):
        raise ValueError("histograms must have equal mass")

    rows = np.flatnonzero(a > 0)
    cols = np.flatnonzero(b > 0)
    total = 0.5 * (ta + tb)
    sa = a[rows] * (total / ta)
    sb = b[cols] * (total / tb)
    sub = C[np.ix_(rows, cols)]
    flow = _solve(sa, sb, sub, max_iter)
    plan = np.zeros(C.shape)
    plan[np.ix_(rows, cols)] = flow
    return float(np.sum(flow * sub)), plan


def _solve(a: np.ndarray, b: np.ndarray, C: np.ndarray, max_iter: int) -> np.ndarray:
    m, n = C.shape
    if m == 1 or n == 1:
        return np.outer(a, b) / a.sum() if m == 1 else np.outer(a, b) / b.sum()
    flow, basis = _least_cost_basis(a, b, C)
    # node ids: rows 0..m-1, columns m..m+n-1
    adj: list[set[int]] = [set() for _ in range(m + n)]
    for i, j in basis:
        adj[i].add(m + j)
        adj[m + j].add(i)

    cost_rows = C.tolist()
    potential = [0.0] * (m + n)
    parent = [-1] * (m + n)
    depth = [0] * (m + n)
    for _ in range(max_iter):
        # potentials and tree structure from a BFS rooted at row 0
        parent[0] = -1
        queue = deque([0])
        while queue:
            node = queue.popleft()
            pu, dn, par = potential[node], depth[node] + 1, parent[node]
            for nxt in adj[node]:
                if nxt == par:
                    continue
                parent[nxt] = node
                depth[nxt] = dn
                if node < m:
                    potential[nxt] = cost_rows[node][nxt - m] - pu
                else:
                    potential[nxt] = cost_rows[nxt][node - m] - pu
                queue.append(nxt)

        pot = np.asarray(potential)
        reduced = C - pot[:m, None] - pot[None, m:]
        cell = int(np.argmin(reduced))
        if reduced.flat[cell] >= -_OPTIMALITY_TOL:
            return flow
        ei, ej = divmod(cell, n)

        # tree path from column node ej up to row node ei, via their common ancestor
        x, y = m + ej, ei
        up_x, up_y = [x], [y]
        while depth[x] > depth[y]:
            x = parent[x]
            up_x.append(x)
        while depth[y] > depth[x]:
            y = parent[y]
            up_y.append(y)
        while x != y:
            x = parent[x]
            y = parent[y]
            up_x.append(x)
            up_y.append(y)
        path = up_x + up_y[-2::-1]  # ej ... lca ... ei

        # cycle cells alternate -, +, -, ... starting after the entering cell
        minus, plus = [], []
        for step, (p, q) in enumerate(zip(path[:-1], path[1:])):
            r, c = (p, q - m) if p < m else (q, p - m)
            (minus if step % 2 == 0 else plus).append((r, c))
        theta = np.inf
        leave = None
        for r, c in minus:
            if flow[r, c] < theta:
                theta = flow[r, c]
                leave = (r, c)
        for r, c in minus:
            flow[r, c] -= theta
        for r, c in plus:
            flow[r, c] += theta
        flow[ei, ej] += theta
        flow[leave] = 0.0
        lr, lc = leave
        adj[lr].discard(m + lc)
        adj[m + lc].discard(lr)
        adj[ei].add(m + ej)
        adj[m + ej].add(ei)
    raise RuntimeError("transportation simplex did not converge")
