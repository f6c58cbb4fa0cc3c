"""Primal network simplex for dense transportation problems.

Solves min <C, X> over nonnegative matrices X with prescribed row sums
(supplies) and column sums (demands) on the complete bipartite graph.  The
spanning-tree basis is stored in flat index arrays (parent, thread,
rev_thread, succ_num, last_succ), the entering arc is found by deterministic
block pricing, and the leaving arc uses the tie-break that keeps the basis
strongly feasible, which rules out cycling under degeneracy.

The code follows the implementation strategy described in Kiraly and Kovacs
(2012), "Efficient implementations of minimum-cost flow algorithms", and
chapter 11 of Ahuja, Magnanti and Orlin (1993), "Network Flows".  Arcs are
never materialized: the cost matrix is scanned directly and per-arc state is
recovered from the tree (a tree arc is the predecessor arc of exactly one
non-root node).

All row and column nodes are initially connected to an artificial root
through artificial arcs carrying the initial flows; a big-M cost on the
demand-side artificial arcs drives the flow onto real arcs.  Artificial arcs
are never priced, so they can only leave the basis.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# terminal status codes
STATUS_OPTIMAL = 0
STATUS_ITER_LIMIT = 1
STATUS_UNBOUNDED = 2
# internal consistency failures (validation mode) are 100 + check id


BASIC_MASK = 1e30  # pcost entry for basic arcs; dwarfs any real reduced cost
FIND_CHUNK = 512   # columns rescanned serially once a chunk tests positive


@njit(cache=True, fastmath=True)
def _span_min(row, pii, picol, j0, j1, cur):
    # minimum reduced cost over columns [j0, j1) of one row, floored at
    # cur.  pcost rows carry the basic-arc mask, so the hot loop is two
    # loads and two adds.  Eight accumulators break the serial dependency
    # chain of the min so LLVM keeps several vector minima in flight; the
    # minimum of finite floats is order-free, so the result does not
    # depend on the reduction shape.
    m0 = cur
    m1 = cur
    m2 = cur
    m3 = cur
    m4 = cur
    m5 = cur
    m6 = cur
    m7 = cur
    j = j0
    while j + 8 <= j1:
        m0 = min(m0, row[j] + pii - picol[j])
        m1 = min(m1, row[j + 1] + pii - picol[j + 1])
        m2 = min(m2, row[j + 2] + pii - picol[j + 2])
        m3 = min(m3, row[j + 3] + pii - picol[j + 3])
        m4 = min(m4, row[j + 4] + pii - picol[j + 4])
        m5 = min(m5, row[j + 5] + pii - picol[j + 5])
        m6 = min(m6, row[j + 6] + pii - picol[j + 6])
        m7 = min(m7, row[j + 7] + pii - picol[j + 7])
        j += 8
    while j < j1:
        m0 = min(m0, row[j] + pii - picol[j])
        j += 1
    return min(min(min(m0, m1), min(m2, m3)), min(min(m4, m5), min(m6, m7)))


@njit(cache=True)
def _row_min(row, pii, picol, cur):
    return _span_min(row, pii, picol, 0, row.shape[0], cur)


@njit(cache=True)
def _row_find(row, pii, picol, thresh):
    # first column of the row with reduced cost strictly below thresh, or
    # -1.  Chunked: the vector min locates the first chunk containing a
    # qualifying column, then a short serial rescan picks the first such
    # column.  A chunk minimum is below thresh iff some element is, so the
    # answer matches a plain left-to-right scan.
    n = row.shape[0]
    j0 = 0
    while j0 < n:
        j1 = j0 + FIND_CHUNK
        if j1 > n:
            j1 = n
        if _span_min(row, pii, picol, j0, j1, thresh) < thresh:
            for j in range(j0, j1):
                if row[j] + pii - picol[j] < thresh:
                    return j
        j0 = j1
    return -1


@njit(cache=True)
def _pred_cost(u, parent_u, dir_u, m, cost, art_cost):
    # cost of the predecessor arc of node u (real or artificial).  Up arcs
    # into the root are free; every root-to-node arc pays the big-M cost,
    # otherwise mass could transship through the root for free.  Artificial
    # arcs keep their initial orientation, so dir_u identifies them fully.
    if parent_u == m + cost.shape[1]:
        return 0.0 if dir_u == 1 else art_cost
    if u < m:
        return cost[u, parent_u - m]
    return cost[parent_u, u - m]


@njit(cache=True)
def _recompute_potentials(m, n, cost, art_cost, parent, pred_dir, thread, pi):
    # exact potentials from the tree: rc of every tree arc becomes ~0
    root = m + n
    pi[root] = 0.0
    u = thread[root]
    while u != root:
        p = parent[u]
        pi[u] = pi[p] - pred_dir[u] * _pred_cost(u, p, pred_dir[u], m, cost,
                                                 art_cost)
        u = thread[u]


@njit(cache=True)
def _validate(m, n, cost, art_cost, a, b, parent, pred_dir, pred_flow,
              thread, rev_thread, succ_num, last_succ, pi, basic):
    """Deep structural check of the basis; returns 0 or a check id."""
    V = m + n + 1
    root = m + n

    for u in range(V):
        if rev_thread[thread[u]] != u:
            return 1

    # thread is a single cycle over all nodes
    seen = np.zeros(V, np.uint8)
    u = root
    for _ in range(V):
        if seen[u]:
            return 2
        seen[u] = 1
        u = thread[u]
    if u != root:
        return 2

    # parent pointers reach the root without cycles
    for u in range(V):
        if u == root:
            continue
        w = u
        steps = 0
        while w != root:
            w = parent[w]
            steps += 1
            if steps > V:
                return 3

    # subtree sizes
    size = np.ones(V, np.int64)
    size[root] = 1
    # accumulate child counts bottom-up by repeated passes (small V only)
    order = np.empty(V, np.int64)
    u = root
    for k in range(V):
        order[k] = u
        u = thread[u]
    for k in range(V - 1, -1, -1):
        w = order[k]
        if w != root:
            size[parent[w]] += size[w]
    for u in range(V):
        if succ_num[u] != size[u]:
            return 4

    # last_succ: the subtree of u is the thread chunk [u .. last_succ[u]]
    for u in range(V):
        w = u
        for _ in range(succ_num[u] - 1):
            w = thread[w]
        if last_succ[u] != w:
            return 5

    for u in range(V):
        if pred_flow[u] < 0.0:
            return 6

    # flow conservation at every node
    bal = np.zeros(V, np.float64)
    for u in range(V):
        if u == root:
            continue
        p = parent[u]
        if pred_dir[u] == 1:  # arc u -> p
            bal[u] -= pred_flow[u]
            bal[p] += pred_flow[u]
        else:  # arc p -> u
            bal[u] += pred_flow[u]
            bal[p] -= pred_flow[u]
    tot = 0.0
    scale = 1.0
    for i in range(m):
        scale += a[i]
    for u in range(V):
        if u < m:
            want = -a[u]
        elif u < m + n:
            want = b[u - m]
        else:
            tot = 0.0
            for i in range(m):
                tot -= a[i]
            for j in range(n):
                tot += b[j]
            want = -tot
        if abs(bal[u] - want) > 1e-9 * scale:
            return 7

    # basic[] marks exactly the real tree arcs
    cnt = 0
    for i in range(m):
        for j in range(n):
            cnt += basic[i, j]
    real_tree = 0
    for u in range(V):
        if u != root and parent[u] != root:
            real_tree += 1
            if u < m:
                i, j = u, parent[u] - m
            else:
                i, j = parent[u], u - m
            if basic[i, j] != 1:
                return 8
    if cnt != real_tree:
        return 8

    # strong feasibility: a zero-flow tree arc must point toward the root,
    # so that every node can still push positive flow up to the root
    for u in range(V):
        if u != root and pred_flow[u] == 0.0 and pred_dir[u] != 1:
            return 9

    # tree arcs have ~zero reduced cost under the current potentials
    for u in range(V):
        if u == root:
            continue
        c = _pred_cost(u, parent[u], pred_dir[u], m, cost, art_cost)
        if pred_dir[u] == 1:
            rc = c + pi[u] - pi[parent[u]]
        else:
            rc = c + pi[parent[u]] - pi[u]
        if abs(rc) > 1e-6 * (1.0 + art_cost):
            return 10

    return 0


@njit(cache=True)
def solve_dense(cost, a, b, eps, max_iter, refresh_every, validate_every,
                block_rows_hint=0):
    """Run the simplex; returns (rows, cols, flows, k, art_residual, status, pivots).

    The first k entries of rows/cols/flows hold the basic real arcs on exit
    (including degenerate zero-flow ones).  art_residual is the largest flow
    left on an artificial arc; it must be ~0 for balanced inputs.
    """
    m, n = cost.shape
    V = m + n + 1
    root = m + n
    E = m * n

    cmax = 0.0
    for i in range(m):
        for j in range(n):
            if cost[i, j] > cmax:
                cmax = cost[i, j]
    art_cost = (cmax + 1.0) * (m + n)

    parent = np.empty(V, np.int64)
    pred_dir = np.zeros(V, np.int8)
    pred_flow = np.zeros(V, np.float64)
    thread = np.empty(V, np.int64)
    rev_thread = np.empty(V, np.int64)
    succ_num = np.empty(V, np.int64)
    last_succ = np.empty(V, np.int64)
    pi = np.zeros(V, np.float64)
    basic = np.zeros((m, n), np.uint8)
    # pricing copy of the costs with basic arcs masked out; restored from
    # cost when an arc leaves the basis (adding the mask would not round
    # back exactly)
    pcost = cost.copy()
    dirty = np.empty(V + 1, np.int64)

    if m == n:
        # diagonal warm start for square problems: arc (i, i) is basic with
        # flow min(a_i, b_i) and only the residual mass crosses the root.
        # With near-uniform marginals and small diagonal costs this starts
        # close to optimal.  Orientations keep every zero-flow arc pointed
        # up at the root (strong feasibility).
        pos = 0
        prev = root
        for i in range(m):
            row = i
            col = m + i
            if b[i] <= 0.0:
                parent[row] = root
                pred_dir[row] = 1
                pred_flow[row] = a[i]
                pi[row] = 0.0
                parent[col] = root
                pred_dir[col] = 1
                pred_flow[col] = 0.0
                pi[col] = 0.0
                first, second = row, col
            elif a[i] >= b[i]:
                parent[row] = root
                pred_dir[row] = 1
                pred_flow[row] = a[i] - b[i]
                pi[row] = 0.0
                parent[col] = row
                pred_dir[col] = -1
                pred_flow[col] = b[i]
                pi[col] = cost[i, i]
                basic[i, i] = 1
                pcost[i, i] = BASIC_MASK
                first, second = row, col
            else:
                parent[col] = root
                pred_dir[col] = -1
                pred_flow[col] = b[i] - a[i]
                pi[col] = art_cost
                parent[row] = col
                pred_dir[row] = 1
                pred_flow[row] = a[i]
                pi[row] = art_cost - cost[i, i]
                basic[i, i] = 1
                pcost[i, i] = BASIC_MASK
                first, second = col, row
            if pos == 0:
                thread[root] = first
            else:
                thread[prev] = first
            thread[first] = second
            prev = second
            pos += 2
            if parent[second] == first:
                succ_num[first] = 2
                last_succ[first] = second
            else:
                succ_num[first] = 1
                last_succ[first] = first
            succ_num[second] = 1
            last_succ[second] = second
        thread[prev] = root
        last_succ[root] = prev
    else:
        # all nodes hang off the artificial root.  Supply nodes push their
        # mass up a zero-cost arc; positive demands are fed by big-M down
        # arcs.  Zero-flow arcs always point up (strong feasibility).
        for u in range(m + n):
            parent[u] = root
            thread[u] = u + 1
            succ_num[u] = 1
            last_succ[u] = u
            if u < m:
                pred_dir[u] = 1
                pred_flow[u] = a[u]
                pi[u] = 0.0
            else:
                # zero-demand nodes hang on a free up arc like supply nodes
                pred_dir[u] = -1 if b[u - m] > 0.0 else 1
                pred_flow[u] = b[u - m]
                pi[u] = art_cost if b[u - m] > 0.0 else 0.0
        thread[root] = 0
        last_succ[root] = m + n - 1
    parent[root] = -1
    pred_dir[root] = 0
    pred_flow[root] = 0.0
    for u in range(V):
        rev_thread[thread[u]] = u
    succ_num[root] = V
    pi[root] = 0.0

    block = int(np.sqrt(E)) + 1
    if block < 16:
        block = 16
    block_rows = block // n
    if block_rows < 1:
        block_rows = 1
    if block_rows_hint > 0:
        block_rows = block_rows_hint

    next_row = 0
    pivots = 0
    status = STATUS_OPTIMAL
    final_pass = False
    picol = pi[m:m + n]  # view; sees in-place potential updates

    while True:
        # ---- pricing: scan whole rows, vectorized.  Stop at the first
        # row block holding a candidate; within the winning row take the
        # first column within tolerance of the row minimum.
        in_i = -1
        in_j = -1
        best = -eps
        i = next_row
        scanned = 0
        rows_left = block_rows
        while scanned < m:
            pii = pi[i]
            row = pcost[i]
            row_mn = _row_min(row, pii, picol, best)
            if row_mn < best:
                thresh = row_mn + 1e-9 * (1.0 + abs(row_mn))
                if thresh > -eps:
                    thresh = -eps
                jj = _row_find(row, pii, picol, thresh)
                if jj >= 0:
                    best = row_mn
                    in_i = i
                    in_j = jj
            scanned += 1
            i += 1
            if i == m:
                i = 0
            rows_left -= 1
            if rows_left == 0:
                rows_left = block_rows
                if in_i >= 0:
                    break

        if in_i < 0:
            if final_pass:
                break
            # re-derive exact potentials and rescan once before declaring
            # optimality, so stale drift cannot end the run early
            _recompute_potentials(m, n, cost, art_cost, parent, pred_dir,
                                  thread, pi)
            final_pass = True
            next_row = 0
            continue
        final_pass = False
        next_row = i

        if pivots >= max_iter:
            status = STATUS_ITER_LIMIT
            break
        pivots += 1

        u_in = in_i
        v_in = m + in_j

        # ---- join node: climb the smaller subtree
        u = u_in
        v = v_in
        while u != v:
            if succ_num[u] < succ_num[v]:
                u = parent[u]
            else:
                v = parent[v]
        join = u

        # ---- leaving arc: min blocking flow on the two tree paths.  The
        # strict/non-strict pair picks the last blocking arc in cycle
        # order from the join node (strong feasibility).
        delta = np.inf
        u_out = -1
        side = 0
        w = u_in
        while w != join:
            if pred_dir[w] == 1 and pred_flow[w] < delta:
                delta = pred_flow[w]
                u_out = w
                side = 1
            w = parent[w]
        w = v_in
        while w != join:
            if pred_dir[w] == -1 and pred_flow[w] <= delta:
                delta = pred_flow[w]
                u_out = w
                side = 2
            w = parent[w]
        if u_out < 0:
            status = STATUS_UNBOUNDED
            break

        # ---- push delta around the cycle
        w = u_in
        while w != join:
            pred_flow[w] -= pred_dir[w] * delta
            w = parent[w]
        w = v_in
        while w != join:
            pred_flow[w] += pred_dir[w] * delta
            w = parent[w]

        # endpoint inside the cut subtree, and its new parent
        if side == 1:
            child = u_in
            attach = v_in
        else:
            child = v_in
            attach = u_in

        v_out = parent[u_out]
        if v_out != root:
            if u_out < m:
                basic[u_out, v_out - m] = 0
                pcost[u_out, v_out - m] = cost[u_out, v_out - m]
            else:
                basic[v_out, u_out - m] = 0
                pcost[v_out, u_out - m] = cost[v_out, u_out - m]
        basic[in_i, in_j] = 1
        pcost[in_i, in_j] = BASIC_MASK

        old_rev_thread = rev_thread[u_out]
        old_succ_num = succ_num[u_out]
        old_last_succ = last_succ[u_out]

        if child == u_out:
            # the cut subtree is re-hung unchanged under `attach`
            parent[child] = attach
            pred_dir[child] = 1 if child == u_in else -1
            pred_flow[child] = delta
            if thread[attach] != u_out:
                after = thread[old_last_succ]
                thread[old_rev_thread] = after
                rev_thread[after] = old_rev_thread
                after2 = thread[attach]
                thread[attach] = u_out
                rev_thread[u_out] = attach
                thread[old_last_succ] = after2
                rev_thread[after2] = old_last_succ
        else:
            # reverse the stem path child .. u_out while splicing each
            # stem subtree into the thread list behind its new parent.
            # The successor of the removed block must be cached: the weave
            # below may overwrite thread[old_last_succ].
            after_block = thread[old_last_succ]
            if old_rev_thread == attach:
                thread_continue = after_block
            else:
                thread_continue = thread[attach]

            stem = child
            par_stem = attach
            last = last_succ[child]
            after = thread[last]
            thread[attach] = child
            n_dirty = 0
            dirty[n_dirty] = attach
            n_dirty += 1
            while stem != u_out:
                next_stem = parent[stem]
                thread[last] = next_stem
                dirty[n_dirty] = last
                n_dirty += 1

                before = rev_thread[stem]
                thread[before] = after
                rev_thread[after] = before

                parent[stem] = par_stem
                par_stem = stem
                stem = next_stem

                if last_succ[stem] == last_succ[par_stem]:
                    last = rev_thread[par_stem]
                else:
                    last = last_succ[stem]
                after = thread[last]
            parent[u_out] = par_stem
            thread[last] = thread_continue
            rev_thread[thread_continue] = last
            last_succ[u_out] = last

            if old_rev_thread != attach:
                thread[old_rev_thread] = after_block
                rev_thread[after_block] = old_rev_thread

            for t in range(n_dirty):
                uu = dirty[t]
                rev_thread[thread[uu]] = uu

            # shift predecessor data and sizes along the reversed stem,
            # reading each old value before it is overwritten
            tmp_sc = 0
            tmp_ls = last_succ[u_out]
            u = u_out
            p = parent[u]
            while u != child:
                pred_dir[u] = -pred_dir[p]
                pred_flow[u] = pred_flow[p]
                tmp_sc += succ_num[u] - succ_num[p]
                succ_num[u] = tmp_sc
                last_succ[p] = tmp_ls
                u = p
                p = parent[u]
            pred_dir[child] = 1 if child == u_in else -1
            pred_flow[child] = delta
            succ_num[child] = old_succ_num

        # ---- fix last_succ and succ_num on the paths to the root
        up_limit_out = join if last_succ[join] == attach else -1
        last_succ_out = last_succ[u_out]
        u = attach
        while u != -1 and last_succ[u] == attach:
            last_succ[u] = last_succ_out
            u = parent[u]

        if join != old_rev_thread and attach != old_rev_thread:
            u = v_out
            while u != up_limit_out and last_succ[u] == old_last_succ:
                last_succ[u] = old_rev_thread
                u = parent[u]
        elif last_succ_out != old_last_succ:
            u = v_out
            while u != up_limit_out and last_succ[u] == old_last_succ:
                last_succ[u] = last_succ_out
                u = parent[u]

        u = attach
        while u != join:
            succ_num[u] += old_succ_num
            u = parent[u]
        u = v_out
        while u != join:
            succ_num[u] -= old_succ_num
            u = parent[u]

        # ---- shift potentials by a constant: +sigma on the re-hung
        # subtree, or equivalently -sigma on its complement.  Reduced costs
        # only see pi differences, so walk whichever side is smaller.
        c_in = cost[in_i, in_j]
        sigma = pi[attach] - pi[child] - pred_dir[child] * c_in
        stop = thread[last_succ[child]]
        if 2 * succ_num[child] <= V:
            u = child
            while u != stop:
                pi[u] += sigma
                u = thread[u]
        else:
            u = stop
            while u != child:
                pi[u] -= sigma
                u = thread[u]

        if refresh_every > 0 and pivots % refresh_every == 0:
            _recompute_potentials(m, n, cost, art_cost, parent, pred_dir,
                                  thread, pi)

        if validate_every > 0 and pivots % validate_every == 0:
            code = _validate(m, n, cost, art_cost, a, b, parent, pred_dir,
                             pred_flow, thread, rev_thread, succ_num,
                             last_succ, pi, basic)
            if code != 0:
                status = 100 + code
                break

    # final structural check in validation mode
    if status == STATUS_OPTIMAL and validate_every > 0:
        code = _validate(m, n, cost, art_cost, a, b, parent, pred_dir,
                         pred_flow, thread, rev_thread, succ_num, last_succ,
                         pi, basic)
        if code != 0:
            status = 100 + code

    # ---- extract basic real arcs and the artificial residual
    rows = np.empty(m + n, np.int64)
    cols = np.empty(m + n, np.int64)
    flows = np.empty(m + n, np.float64)
    k = 0
    art_residual = 0.0
    for u in range(m + n):
        p = parent[u]
        if p == root:
            if pred_flow[u] > art_residual:
                art_residual = pred_flow[u]
            continue
        if u < m:
            rows[k] = u
            cols[k] = p - m
        else:
            rows[k] = p
            cols[k] = u - m
        flows[k] = pred_flow[u]
        k += 1

    return rows, cols, flows, k, art_residual, status, pivots
