"""Exact weighted matching on general graphs, compiled with numba.

Array port of the classic O(n^3) "flower" implementation of maximum weight
matching with dual variables kept integral: node slots 1..n are vertices,
slots above n hold contracted odd cycles, `st` maps every node to the root
of its contraction, and each contraction remembers its member cycle plus,
per original vertex, which member contains it.  Edge weights are integers
so every dual update and slack comparison is exact.

The search walks base-graph edges through a CSR adjacency, so the same
code runs on the complete graph or on a sparse subgraph.  For large
perfect-matching instances `min_weight_perfect_matching` first solves a
k-nearest-neighbour subgraph and then certifies the result against the
full graph with the final dual values: the matching is optimal on the
complete graph if every excluded edge has nonnegative dual slack, where
vertex duals and the duals of nested contractions containing both
endpoints all contribute.  If the certificate fails, k is doubled,
falling back to the complete graph.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .errors import InvalidInput

_INF = np.int64(1) << np.int64(62)

SPARSE_CUTOFF = 160
INITIAL_NEIGHBOURS = 12


@njit(cache=True)
def _e_delta(lab, g_u, g_v, g_w, a, b):
    return lab[g_u[a, b]] + lab[g_v[a, b]] - 2 * g_w[a, b]


@njit(cache=True)
def _update_slack(lab, g_u, g_v, g_w, slack, u, x):
    if slack[x] == 0 or _e_delta(lab, g_u, g_v, g_w, u, x) < _e_delta(
            lab, g_u, g_v, g_w, slack[x], x):
        slack[x] = u


@njit(cache=True)
def _set_slack(n, indptr, adj, lab, g_u, g_v, g_w, slack, st, s_label, x):
    slack[x] = 0
    if x <= n:
        for i in range(indptr[x - 1], indptr[x]):
            u = adj[i]
            if g_w[u, x] > 0 and st[u] != x and s_label[st[u]] == 0:
                _update_slack(lab, g_u, g_v, g_w, slack, u, x)
    else:
        for u in range(1, n + 1):
            if g_w[u, x] > 0 and st[u] != x and s_label[st[u]] == 0:
                _update_slack(lab, g_u, g_v, g_w, slack, u, x)


@njit(cache=True)
def _q_push(x, n, flower, flower_len, q, qt, stack):
    sp = 0
    stack[sp] = x
    sp += 1
    while sp > 0:
        sp -= 1
        y = stack[sp]
        if y <= n:
            q[qt] = y
            qt += 1
        else:
            for i in range(flower_len[y]):
                stack[sp] = flower[y, i]
                sp += 1
    return qt


@njit(cache=True)
def _set_st(x, b, n, st, flower, flower_len, stack):
    sp = 0
    stack[sp] = x
    sp += 1
    while sp > 0:
        sp -= 1
        y = stack[sp]
        st[y] = b
        if y > n:
            for i in range(flower_len[y]):
                stack[sp] = flower[y, i]
                sp += 1


@njit(cache=True)
def _get_pr(flower, flower_len, b, xr):
    fl = flower_len[b]
    pr = 0
    for i in range(fl):
        if flower[b, i] == xr:
            pr = i
            break
    if pr % 2 == 1:
        left = 1
        right = fl - 1
        while left < right:
            tmp = flower[b, left]
            flower[b, left] = flower[b, right]
            flower[b, right] = tmp
            left += 1
            right -= 1
        return fl - pr
    return pr


@njit(cache=True)
def _set_match(u0, v0, n, match, g_u, g_v, flower, flower_len, flower_from,
               stack_u, stack_v):
    sp = 0
    stack_u[sp] = u0
    stack_v[sp] = v0
    sp += 1
    while sp > 0:
        sp -= 1
        u = stack_u[sp]
        v = stack_v[sp]
        match[u] = g_v[u, v]
        if u > n:
            xr = flower_from[u, g_u[u, v]]
            pr = _get_pr(flower, flower_len, u, xr)
            for i in range(pr):
                stack_u[sp] = flower[u, i]
                stack_v[sp] = flower[u, i ^ 1]
                sp += 1
            stack_u[sp] = xr
            stack_v[sp] = v
            sp += 1
            fl = flower_len[u]
            tmp = flower[u, :fl].copy()
            for i in range(fl):
                flower[u, i] = tmp[(i + pr) % fl]


@njit(cache=True)
def _augment(u, v, n, match, st, pa, g_u, g_v, flower, flower_len, flower_from,
             stack_u, stack_v):
    while True:
        xnv = st[match[u]]
        _set_match(u, v, n, match, g_u, g_v, flower, flower_len, flower_from,
                   stack_u, stack_v)
        if xnv == 0:
            return
        _set_match(xnv, st[pa[xnv]], n, match, g_u, g_v, flower, flower_len,
                   flower_from, stack_u, stack_v)
        u = st[pa[xnv]]
        v = xnv


@njit(cache=True)
def _get_lca(u, v, st, pa, match, vis, stamp):
    stamp[0] += 1
    t = stamp[0]
    while u != 0 or v != 0:
        if u != 0:
            if vis[u] == t:
                return u
            vis[u] = t
            u = st[match[u]]
            if u != 0:
                u = st[pa[u]]
        tmp = u
        u = v
        v = tmp
    return 0


@njit(cache=True)
def _add_blossom(u, lca, v, n, n_x, indptr, adj, lab, match, st, pa, s_label,
                 slack, g_u, g_v, g_w, flower, flower_len, flower_from, q, qt,
                 stack):
    b = n + 1
    while b <= n_x and st[b] != 0:
        b += 1
    if b > n_x:
        n_x += 1
    lab[b] = 0
    s_label[b] = 0
    match[b] = match[lca]
    fl = 0
    flower[b, fl] = lca
    fl += 1
    x = u
    while x != lca:
        flower[b, fl] = x
        fl += 1
        y = st[match[x]]
        flower[b, fl] = y
        fl += 1
        qt = _q_push(y, n, flower, flower_len, q, qt, stack)
        x = st[pa[y]]
    left = 1
    right = fl - 1
    while left < right:
        tmp = flower[b, left]
        flower[b, left] = flower[b, right]
        flower[b, right] = tmp
        left += 1
        right -= 1
    x = v
    while x != lca:
        flower[b, fl] = x
        fl += 1
        y = st[match[x]]
        flower[b, fl] = y
        fl += 1
        qt = _q_push(y, n, flower, flower_len, q, qt, stack)
        x = st[pa[y]]
    flower_len[b] = fl
    _set_st(b, b, n, st, flower, flower_len, stack)
    for x in range(1, n_x + 1):
        g_w[b, x] = 0
        g_w[x, b] = 0
    for x in range(1, n + 1):
        flower_from[b, x] = 0
    for i in range(fl):
        xs = flower[b, i]
        for x in range(1, n_x + 1):
            if g_w[xs, x] > 0 and (g_w[b, x] == 0 or _e_delta(
                    lab, g_u, g_v, g_w, xs, x) < _e_delta(
                    lab, g_u, g_v, g_w, b, x)):
                g_u[b, x] = g_u[xs, x]
                g_v[b, x] = g_v[xs, x]
                g_w[b, x] = g_w[xs, x]
                g_u[x, b] = g_u[x, xs]
                g_v[x, b] = g_v[x, xs]
                g_w[x, b] = g_w[x, xs]
        for x in range(1, n + 1):
            if flower_from[xs, x] != 0:
                flower_from[b, x] = xs
    _set_slack(n, indptr, adj, lab, g_u, g_v, g_w, slack, st, s_label, b)
    return n_x, qt


@njit(cache=True)
def _expand_blossom(b, n, n_x, indptr, adj, lab, st, pa, s_label, slack,
                    g_u, g_v, g_w, flower, flower_len, flower_from, q, qt,
                    stack):
    for i in range(flower_len[b]):
        _set_st(flower[b, i], flower[b, i], n, st, flower, flower_len, stack)
    xr = flower_from[b, g_u[b, pa[b]]]
    pr = _get_pr(flower, flower_len, b, xr)
    i = 0
    while i < pr:
        xs = flower[b, i]
        xns = flower[b, i + 1]
        pa[xs] = g_u[xns, xs]
        s_label[xs] = 1
        s_label[xns] = 0
        slack[xs] = 0
        _set_slack(n, indptr, adj, lab, g_u, g_v, g_w, slack, st, s_label, xns)
        qt = _q_push(xns, n, flower, flower_len, q, qt, stack)
        i += 2
    s_label[xr] = 1
    pa[xr] = pa[b]
    for i in range(pr + 1, flower_len[b]):
        xs = flower[b, i]
        s_label[xs] = -1
        _set_slack(n, indptr, adj, lab, g_u, g_v, g_w, slack, st, s_label, xs)
    st[b] = 0
    return qt


@njit(cache=True)
def _on_found_edge(a, c, n, n_x, indptr, adj, lab, match, st, pa, s_label,
                   slack, vis, stamp, g_u, g_v, g_w, flower, flower_len,
                   flower_from, q, qt, stack, stack_u, stack_v):
    u = st[g_u[a, c]]
    v = st[g_v[a, c]]
    if s_label[v] == -1:
        pa[v] = g_u[a, c]
        s_label[v] = 1
        nu = st[match[v]]
        slack[v] = 0
        slack[nu] = 0
        s_label[nu] = 0
        qt = _q_push(nu, n, flower, flower_len, q, qt, stack)
    elif s_label[v] == 0:
        lca = _get_lca(u, v, st, pa, match, vis, stamp)
        if lca == 0:
            _augment(u, v, n, match, st, pa, g_u, g_v, flower, flower_len,
                     flower_from, stack_u, stack_v)
            _augment(v, u, n, match, st, pa, g_u, g_v, flower, flower_len,
                     flower_from, stack_u, stack_v)
            return True, n_x, qt
        else:
            n_x, qt = _add_blossom(u, lca, v, n, n_x, indptr, adj, lab, match,
                                   st, pa, s_label, slack, g_u, g_v, g_w,
                                   flower, flower_len, flower_from, q, qt,
                                   stack)
    return False, n_x, qt


@njit(cache=True)
def _matching(n, n_x, indptr, adj, lab, match, st, pa, s_label, slack, vis,
              stamp, g_u, g_v, g_w, flower, flower_len, flower_from, q,
              stack, stack_u, stack_v):
    for x in range(1, n_x + 1):
        s_label[x] = -1
        slack[x] = 0
    qh = 0
    qt = 0
    for x in range(1, n_x + 1):
        if st[x] == x and match[x] == 0:
            pa[x] = 0
            s_label[x] = 0
            qt = _q_push(x, n, flower, flower_len, q, qt, stack)
    if qt == 0:
        return False, n_x
    while True:
        while qh < qt:
            u = q[qh]
            qh += 1
            if s_label[st[u]] == 1:
                continue
            for i in range(indptr[u - 1], indptr[u]):
                v = adj[i]
                if g_w[u, v] > 0 and st[u] != st[v]:
                    if _e_delta(lab, g_u, g_v, g_w, u, v) == 0:
                        done, n_x, qt = _on_found_edge(
                            u, v, n, n_x, indptr, adj, lab, match, st, pa,
                            s_label, slack, vis, stamp, g_u, g_v, g_w, flower,
                            flower_len, flower_from, q, qt, stack, stack_u,
                            stack_v)
                        if done:
                            return True, n_x
                    else:
                        _update_slack(lab, g_u, g_v, g_w, slack, u, st[v])
        d = _INF
        for b in range(n + 1, n_x + 1):
            if st[b] == b and s_label[b] == 1:
                half = lab[b] // 2
                if half < d:
                    d = half
        for x in range(1, n_x + 1):
            if st[x] == x and slack[x] != 0:
                delta = _e_delta(lab, g_u, g_v, g_w, slack[x], x)
                if s_label[x] == -1:
                    if delta < d:
                        d = delta
                elif s_label[x] == 0:
                    if delta // 2 < d:
                        d = delta // 2
        for u in range(1, n + 1):
            if s_label[st[u]] == 0:
                lab[u] -= d
                if lab[u] <= 0:
                    return False, n_x
            elif s_label[st[u]] == 1:
                lab[u] += d
        for b in range(n + 1, n_x + 1):
            if st[b] == b:
                if s_label[b] == 0:
                    lab[b] += 2 * d
                elif s_label[b] == 1:
                    lab[b] -= 2 * d
        qh = 0
        qt = 0
        for x in range(1, n_x + 1):
            if (st[x] == x and slack[x] != 0 and st[slack[x]] != x
                    and _e_delta(lab, g_u, g_v, g_w, slack[x], x) == 0):
                done, n_x, qt = _on_found_edge(
                    slack[x], x, n, n_x, indptr, adj, lab, match, st, pa,
                    s_label, slack, vis, stamp, g_u, g_v, g_w, flower,
                    flower_len, flower_from, q, qt, stack, stack_u, stack_v)
                if done:
                    return True, n_x
        for b in range(n + 1, n_x + 1):
            if st[b] == b and s_label[b] == 1 and lab[b] == 0:
                qt = _expand_blossom(b, n, n_x, indptr, adj, lab, st, pa,
                                     s_label, slack, g_u, g_v, g_w, flower,
                                     flower_len, flower_from, q, qt, stack)


@njit(cache=True)
def _solve(n, weights, indptr, adj):
    m = 2 * n + 2
    g_u = np.empty((m, m), np.int32)
    g_v = np.empty((m, m), np.int32)
    g_w = np.zeros((m, m), np.int64)
    for u in range(m):
        for v in range(m):
            g_u[u, v] = u
            g_v[u, v] = v
    w_max = np.int64(0)
    for u in range(1, n + 1):
        for v in range(1, n + 1):
            g_w[u, v] = weights[u - 1, v - 1]
            if g_w[u, v] > w_max:
                w_max = g_w[u, v]
    lab = np.zeros(m, np.int64)
    match = np.zeros(m, np.int32)
    st = np.zeros(m, np.int32)
    pa = np.zeros(m, np.int32)
    s_label = np.zeros(m, np.int32)
    slack = np.zeros(m, np.int32)
    vis = np.zeros(m, np.int64)
    stamp = np.zeros(1, np.int64)
    flower = np.zeros((m, n + 2), np.int32)
    flower_len = np.zeros(m, np.int32)
    flower_from = np.zeros((m, n + 1), np.int32)
    for u in range(n + 1):
        st[u] = u
    for u in range(1, n + 1):
        lab[u] = w_max
        flower_from[u, u] = u
    q = np.zeros(8 * m, np.int32)
    stack = np.empty(4 * n + 4, np.int32)
    stack_u = np.empty(4 * n + 4, np.int32)
    stack_v = np.empty(4 * n + 4, np.int32)
    n_x = n
    while True:
        found, n_x = _matching(n, n_x, indptr, adj, lab, match, st, pa,
                               s_label, slack, vis, stamp, g_u, g_v, g_w,
                               flower, flower_len, flower_from, q, stack,
                               stack_u, stack_v)
        if not found:
            break
    return match[1:n + 1], lab, st, flower_from


def _csr_from_mask(present: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """1-based CSR adjacency from a boolean matrix with empty diagonal."""
    rows, cols = np.nonzero(present)
    indptr = np.zeros(present.shape[0] + 1, np.int64)
    np.add.at(indptr, rows + 1, 1)
    np.cumsum(indptr, out=indptr)
    return indptr, (cols + 1).astype(np.int32)


def maximum_weight_matching(weights: np.ndarray) -> tuple[list[tuple[int, int]], int]:
    """Maximum weight matching of a symmetric nonnegative integer matrix.

    Zero entries mean the edge is absent.  Returns the chosen pairs with
    0-based indices and the integer total weight.
    """
    w = np.asarray(weights)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise InvalidInput("weights must be a square matrix")
    if not np.array_equal(w, w.T):
        raise InvalidInput("weights must be symmetric")
    if w.size and w.min() < 0:
        raise InvalidInput("weights must be nonnegative")
    n = w.shape[0]
    if n == 0:
        return [], 0
    indptr, adj = _csr_from_mask(w > 0)
    mate, _, _, _ = _solve(n, np.ascontiguousarray(w, dtype=np.int64), indptr,
                           adj)
    pairs = []
    total = 0
    for u in range(n):
        v = int(mate[u]) - 1
        if v > u:
            pairs.append((u, v))
            total += int(w[u, v])
    return pairs, total


def _neighbour_mask(d: np.ndarray, k: int) -> np.ndarray:
    """Symmetric k-nearest mask per row."""
    n = d.shape[0]
    take = min(k + 1, n - 1)
    ranked = np.argpartition(d, take, axis=1)
    mask = np.zeros((n, n), dtype=bool)
    np.put_along_axis(mask, ranked[:, :take + 1], True, axis=1)
    np.fill_diagonal(mask, False)
    return mask | mask.T


def _contraction_chain(st, flower_from, n, v1):
    """Contraction nodes containing 1-based vertex v1, outermost first."""
    out = []
    b = int(st[v1])
    while b > n:
        out.append(b)
        b = int(flower_from[b, v1])
    return out


def _certified(mate, lab, st, flower_from, transformed, present, n) -> bool:
    """Final duals must dominate every excluded edge of the full graph.

    Edge slack in doubled units is lab[u] + lab[v] + sum of lab over the
    contractions containing both endpoints, minus twice the edge weight;
    the solver keeps it nonnegative on the subgraph it saw, and the same
    dual values prove optimality over the complete graph whenever the
    slack of every excluded edge is nonnegative too.
    """
    if (mate == 0).any():
        return False
    labv = lab[1:n + 1]
    base = labv[:, None] + labv[None, :] - 2 * transformed
    absent = ~present
    np.fill_diagonal(absent, False)
    bad = absent & (base < 0)
    if not bad.any():
        return True
    topv = st[1:n + 1].astype(np.int64)
    bu, bv = np.nonzero(bad)
    keep = bu < bv
    bu, bv = bu[keep], bv[keep]
    if (topv[bu] <= n).any() or (topv[bu] != topv[bv]).any():
        return False
    if bu.size > 200_000:
        return False
    chains: dict[int, list[int]] = {}
    for u, v in zip(bu.tolist(), bv.tolist()):
        cu = chains.get(u)
        if cu is None:
            cu = _contraction_chain(st, flower_from, n, u + 1)
            chains[u] = cu
        cv = chains.get(v)
        if cv is None:
            cv = _contraction_chain(st, flower_from, n, v + 1)
            chains[v] = cv
        shared = 0
        for a, b in zip(cu, cv):
            if a != b:
                break
            shared += int(lab[a])
        if int(base[u, v]) + shared < 0:
            return False
    return True


def min_weight_perfect_matching(
        dist: np.ndarray,
        candidates: np.ndarray | None = None) -> tuple[list[tuple[int, int]], float]:
    """Minimum weight perfect matching of a symmetric float distance matrix.

    Distances are scaled to integers (31 bits of relative resolution) so
    the matching itself runs in exact arithmetic; the returned total is
    the float sum of the original distances over the chosen pairs.

    `candidates` is an optional boolean mask of edges likely to appear in
    the optimal matching.  It seeds the sparse attempts; exactness never
    depends on it because every sparse result is dual-certified against
    the complete graph before being accepted.
    """
    d = np.asarray(dist, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise InvalidInput("dist must be a square matrix")
    n = d.shape[0]
    if n % 2 != 0:
        raise InvalidInput("perfect matching needs an even number of nodes")
    if n == 0:
        return [], 0.0
    if not np.allclose(d, d.T):
        raise InvalidInput("dist must be symmetric")
    if d.min() < 0:
        raise InvalidInput("dist must be nonnegative")
    if n == 2:
        return [(0, 1)], float(d[0, 1])
    if candidates is not None:
        candidates = np.asarray(candidates, dtype=bool)
        if candidates.shape != d.shape:
            raise InvalidInput("candidates must match the distance matrix shape")
        candidates = candidates | candidates.T
    top = float(d.max())
    scale = float((1 << 31) - 1) / top if top > 0 else 1.0
    w_int = np.rint(d * scale).astype(np.int64)
    np.fill_diagonal(w_int, 0)
    big = np.int64(w_int.max() + 1)
    transformed = big - w_int
    np.fill_diagonal(transformed, 0)

    k = INITIAL_NEIGHBOURS
    while True:
        if n <= SPARSE_CUTOFF or k >= n - 1:
            present = np.ones((n, n), dtype=bool)
            np.fill_diagonal(present, False)
        else:
            present = _neighbour_mask(d, k)
            if candidates is not None:
                present |= candidates
                np.fill_diagonal(present, False)
        sparse_w = np.where(present, transformed, np.int64(0))
        indptr, adj = _csr_from_mask(present)
        mate, lab, st, flower_from = _solve(n, np.ascontiguousarray(sparse_w),
                                            indptr, adj)
        if present.all(axis=None) or _certified(mate, lab, st, flower_from,
                                                transformed, present, n):
            break
        k *= 2

    pairs = []
    total = 0.0
    for u in range(n):
        v = int(mate[u]) - 1
        if v < 0:
            raise InvalidInput("matching is not perfect; distance matrix degenerate")
        if v > u:
            pairs.append((u, v))
            total += float(d[u, v])
    return pairs, total
