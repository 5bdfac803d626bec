"""Numba kernels: push-relabel max-flow and l1-ball threshold search.

These are internal; the public entry points live in :mod:`structflow.maxflow`
and :mod:`structflow.projections`.

The max-flow kernel operates on a flat arc representation: arcs are stored in
forward/reverse pairs (``a ^ 1`` is the reverse of ``a``), capacities may be
``inf``, and flows are kept skew-symmetric (``flow[a ^ 1] == -flow[a]``).
An arc counts as saturated when its residual drops to ``eps[a]``, with
``eps[a] = SAT_RTOL * max(1, cap[a])`` for finite capacities and 0 for
infinite ones, so sentinel arcs are never saturated.
"""

import numpy as np
from numba import njit

#: Relative saturation tolerance for finite-capacity arcs.
SAT_RTOL = 1e-10


def arc_epsilons(cap):
    eps = np.zeros_like(cap)
    finite = np.isfinite(cap)
    eps[finite] = SAT_RTOL * np.maximum(1.0, cap[finite])
    return eps


@njit(cache=True, nogil=True)
def _bfs_heights(n, s, t, adj_ptr, adj_arc, arc_to, cap, eps, flow, height, queue):
    """Exact distance labels: dist to t in the residual graph, else n + dist
    to s, else 2n.  Writes into ``height``."""
    two_n = 2 * n
    for v in range(n):
        height[v] = two_n
    # Backward BFS from t: label w when a residual arc w -> u exists with u
    # already labelled.
    height[t] = 0
    head = 0
    tail = 1
    queue[0] = t
    while head < tail:
        u = queue[head]
        head += 1
        hu = height[u]
        for k in range(adj_ptr[u], adj_ptr[u + 1]):
            a = adj_arc[k]
            w = arc_to[a]
            if w == s or height[w] != two_n:
                continue
            ra = a ^ 1  # arc w -> u
            if cap[ra] - flow[ra] > eps[ra]:
                height[w] = hu + 1
                queue[tail] = w
                tail += 1
    height[s] = n
    head = 0
    tail = 1
    queue[0] = s
    while head < tail:
        u = queue[head]
        head += 1
        hu = height[u]
        for k in range(adj_ptr[u], adj_ptr[u + 1]):
            a = adj_arc[k]
            w = arc_to[a]
            if w == t or height[w] != two_n:
                continue
            ra = a ^ 1
            if cap[ra] - flow[ra] > eps[ra]:
                height[w] = hu + 1
                queue[tail] = w
                tail += 1


@njit(cache=True, nogil=True)
def _rebuild_levels(n, s, t, adj_ptr, adj_arc, arc_to, cap, eps, flow,
                    excess, height, queue, cur,
                    lev_head, lev_next, lev_prev, lev_count,
                    act_head, act_next, act_prev, act_in):
    """Recompute exact heights and rebuild all level structures.

    Returns the highest level holding an active vertex (-1 if none).
    """
    _bfs_heights(n, s, t, adj_ptr, adj_arc, arc_to, cap, eps, flow, height, queue)
    two_n = 2 * n
    for h in range(len(lev_head)):
        lev_head[h] = -1
        act_head[h] = -1
        lev_count[h] = 0
    hi_act = -1
    for v in range(n):
        cur[v] = adj_ptr[v]
        act_in[v] = 0
        if v == s or v == t:
            continue
        h = height[v]
        lev_count[h] += 1
        lev_next[v] = lev_head[h]
        lev_prev[v] = -1
        if lev_head[h] != -1:
            lev_prev[lev_head[h]] = v
        lev_head[h] = v
        if excess[v] > 0.0 and h < two_n:
            act_next[v] = act_head[h]
            act_prev[v] = -1
            if act_head[h] != -1:
                act_prev[act_head[h]] = v
            act_head[h] = v
            act_in[v] = 1
            if h > hi_act:
                hi_act = h
    return hi_act


@njit(cache=True, nogil=True)
def push_relabel(n, s, t, adj_ptr, adj_arc, arc_to, cap, eps, flow,
                 use_gap, relabel_period, source_active):
    """Run push-relabel to completion, mutating ``flow`` in place.

    The incoming ``flow`` may be any capacity-respecting skew-symmetric
    assignment (for instance a truncated previous optimum); source arcs are
    saturated on entry so that the preflow and the BFS labels are valid.  The
    routine drains every excess, so on exit the flow is a maximum flow with
    conservation at all vertices except s and t.  Returns the flow value.

    ``use_gap`` toggles the gap heuristic; ``relabel_period`` sets how many
    relabel operations happen between global relabels (0 disables them).
    Both only affect the amount of work, never the returned value.
    ``source_active[g]`` masks which source arcs (arc ids 2g) to saturate;
    quiescent parts of a multi-region graph stay untouched.
    """
    two_n = 2 * n
    n_levels = two_n + 2

    # Clip to capacities (warm starts may carry stale flows), then saturate
    # the source arcs.
    for a in range(len(cap)):
        if np.isfinite(cap[a]) and flow[a] > cap[a]:
            flow[a ^ 1] += flow[a] - cap[a]
            flow[a] = cap[a]
    for k in range(adj_ptr[s], adj_ptr[s + 1]):
        a = adj_arc[k]
        if source_active[a >> 1] == 0:
            continue
        if np.isfinite(cap[a]) and cap[a] > 0.0:
            delta = cap[a] - flow[a]
            if delta > 0.0:
                flow[a] = cap[a]
                flow[a ^ 1] -= delta

    excess = np.zeros(n, dtype=np.float64)
    for v in range(n):
        tot = 0.0
        for k in range(adj_ptr[v], adj_ptr[v + 1]):
            tot += flow[adj_arc[k]]
        excess[v] = -tot

    # Repair negative excesses left by truncated inflow arcs (a warm start
    # whose graph lost arcs): push each deficit downstream until it reaches
    # s or t.  Deficits are cut dust, so this pass is short.
    queue0 = np.empty(n, dtype=np.int64)
    head0 = 0
    tail0 = 0
    for v in range(n):
        if v != s and v != t and excess[v] < 0.0:
            queue0[tail0] = v
            tail0 += 1
    while head0 < tail0:
        v = queue0[head0 % n]
        head0 += 1
        for k in range(adj_ptr[v], adj_ptr[v + 1]):
            if excess[v] >= 0.0:
                break
            a = adj_arc[k]
            if flow[a] > 0.0:
                d = -excess[v]
                if flow[a] < d:
                    d = flow[a]
                flow[a] -= d
                flow[a ^ 1] += d
                excess[v] += d
                w = arc_to[a]
                was = excess[w]
                excess[w] -= d
                if w != s and w != t and was >= 0.0 and excess[w] < 0.0:
                    queue0[tail0 % n] = w
                    tail0 += 1

    height = np.empty(n, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    cur = np.empty(n, dtype=np.int64)
    lev_head = np.empty(n_levels, dtype=np.int64)
    lev_next = np.full(n, -1, dtype=np.int64)
    lev_prev = np.full(n, -1, dtype=np.int64)
    lev_count = np.empty(n_levels, dtype=np.int64)
    act_head = np.empty(n_levels, dtype=np.int64)
    act_next = np.full(n, -1, dtype=np.int64)
    act_prev = np.full(n, -1, dtype=np.int64)
    act_in = np.zeros(n, dtype=np.uint8)

    hi_act = _rebuild_levels(n, s, t, adj_ptr, adj_arc, arc_to, cap, eps, flow,
                             excess, height, queue, cur,
                             lev_head, lev_next, lev_prev, lev_count,
                             act_head, act_next, act_prev, act_in)
    relabels = 0

    while hi_act >= 0:
        v = act_head[hi_act]
        if v == -1:
            hi_act -= 1
            continue
        # Pop v from its active list.
        nx = act_next[v]
        act_head[hi_act] = nx
        if nx != -1:
            act_prev[nx] = -1
        act_in[v] = 0
        if excess[v] <= 0.0:  # stale entry
            continue

        # Discharge v completely.
        while excess[v] > 0.0:
            k = cur[v]
            end = adj_ptr[v + 1]
            emptied = False
            hv = height[v]
            while k < end:
                a = adj_arc[k]
                res = cap[a] - flow[a]
                if res > eps[a]:
                    w = arc_to[a]
                    if hv == height[w] + 1:
                        delta = excess[v]
                        if res < delta:
                            delta = res
                        flow[a] += delta
                        flow[a ^ 1] -= delta
                        excess[v] -= delta
                        excess[w] += delta
                        if w != s and w != t and act_in[w] == 0:
                            hw = height[w]
                            act_next[w] = act_head[hw]
                            act_prev[w] = -1
                            if act_head[hw] != -1:
                                act_prev[act_head[hw]] = w
                            act_head[hw] = w
                            act_in[w] = 1
                        if excess[v] <= 0.0:
                            emptied = True
                            break
                k += 1
            cur[v] = k
            if emptied:
                break

            # Arc list exhausted: relabel v.
            old_h = height[v]
            new_h = two_n
            for k2 in range(adj_ptr[v], end):
                a = adj_arc[k2]
                if cap[a] - flow[a] > eps[a]:
                    hw = height[arc_to[a]]
                    if hw + 1 < new_h:
                        new_h = hw + 1
            # Unlink v from its all-vertex level list.
            lev_count[old_h] -= 1
            pv = lev_prev[v]
            nx = lev_next[v]
            if pv != -1:
                lev_next[pv] = nx
            else:
                lev_head[old_h] = nx
            if nx != -1:
                lev_prev[nx] = pv
            height[v] = new_h
            cur[v] = adj_ptr[v]
            if new_h >= two_n:
                # No residual arc at all: excess is stranded.  Cannot happen
                # on the graphs built here; kept as a termination safeguard.
                break
            lev_count[new_h] += 1
            lev_next[v] = lev_head[new_h]
            lev_prev[v] = -1
            if lev_head[new_h] != -1:
                lev_prev[lev_head[new_h]] = v
            lev_head[new_h] = v
            relabels += 1

            if use_gap and 0 < old_h < n and lev_count[old_h] == 0:
                # Gap: levels strictly above old_h and below n can no longer
                # reach t; park them at n + 1.
                demoted = False
                for h in range(old_h + 1, n):
                    w = lev_head[h]
                    while w != -1:
                        nxt = lev_next[w]
                        lev_count[h] -= 1
                        if act_in[w] == 1:
                            pw = act_prev[w]
                            nw = act_next[w]
                            if pw != -1:
                                act_next[pw] = nw
                            else:
                                act_head[h] = nw
                            if nw != -1:
                                act_prev[nw] = pw
                            act_in[w] = 0
                        height[w] = n + 1
                        lev_count[n + 1] += 1
                        lev_next[w] = lev_head[n + 1]
                        lev_prev[w] = -1
                        if lev_head[n + 1] != -1:
                            lev_prev[lev_head[n + 1]] = w
                        lev_head[n + 1] = w
                        if excess[w] > 0.0 and w != v:
                            act_next[w] = act_head[n + 1]
                            act_prev[w] = -1
                            if act_head[n + 1] != -1:
                                act_prev[act_head[n + 1]] = w
                            act_head[n + 1] = w
                            act_in[w] = 1
                        demoted = True
                        w = nxt
                    lev_head[h] = -1
                if demoted and n + 1 > hi_act:
                    hi_act = n + 1

            if relabel_period > 0 and relabels >= relabel_period:
                relabels = 0
                hi_act = _rebuild_levels(
                    n, s, t, adj_ptr, adj_arc, arc_to, cap, eps, flow,
                    excess, height, queue, cur,
                    lev_head, lev_next, lev_prev, lev_count,
                    act_head, act_next, act_prev, act_in)
                break
            if height[v] > hi_act:
                hi_act = height[v]

    return excess[t]


@njit(cache=True, nogil=True)
def residual_reachable(n, s, adj_ptr, adj_arc, arc_to, cap, eps, flow):
    """Vertices reachable from s through non-saturated arcs."""
    seen = np.zeros(n, dtype=np.uint8)
    queue = np.empty(n, dtype=np.int64)
    seen[s] = 1
    head = 0
    tail = 1
    queue[0] = s
    while head < tail:
        u = queue[head]
        head += 1
        for k in range(adj_ptr[u], adj_ptr[u + 1]):
            a = adj_arc[k]
            w = arc_to[a]
            if seen[w] == 0 and cap[a] - flow[a] > eps[a]:
                seen[w] = 1
                queue[tail] = w
                tail += 1
    return seen


@njit(cache=True, nogil=True)
def _box_project_into(u_vals, ub_vals, radius, out):
    """Project onto {0 <= g <= ub, sum(g) <= radius}; clamp-and-rethreshold."""
    m = len(u_vals)
    if radius <= 0.0:
        for i in range(m):
            out[i] = 0.0
        return
    total = 0.0
    for i in range(m):
        out[i] = u_vals[i] if u_vals[i] < ub_vals[i] else ub_vals[i]
        total += out[i]
    if total <= radius:
        return
    free = np.ones(m, dtype=np.uint8)
    budget = radius
    theta = 0.0
    scratch = np.empty(m, dtype=np.float64)
    while True:
        nfree = 0
        fsum = 0.0
        for i in range(m):
            if free[i] == 1:
                scratch[nfree] = u_vals[i]
                fsum += u_vals[i]
                nfree += 1
        if nfree == 0 or budget <= 0.0:
            if budget <= 0.0:
                theta = np.inf  # nothing left for the free coordinates
            break
        if fsum <= budget:
            theta = 0.0
        else:
            theta = l1_threshold(scratch[:nfree], budget)
        clamped_any = False
        for i in range(m):
            if free[i] == 1 and u_vals[i] - theta > ub_vals[i]:
                free[i] = 0
                out[i] = ub_vals[i]
                budget -= ub_vals[i]
                clamped_any = True
        if not clamped_any:
            break
    for i in range(m):
        if free[i] == 1:
            v = u_vals[i] - theta
            out[i] = v if v > 0.0 else 0.0


@njit(cache=True, nogil=True)
def flow_rounds(nv, ng, child_ptr, child, source_cap, u,
                adj_ptr, adj_arc, arc_to, cap, eps, flow,
                term_rtol, use_gap, relabel_period):
    """Quadratic-flow solve on a full canonical graph, all regions at once.

    Maintains a partition of the group/variable vertices into regions
    (initially the connected components).  Each round projects every active
    region's sink loads onto its budget box, runs one max-flow over the whole
    graph (settled regions stay quiescent), settles the regions whose loads
    were realized, and splits the others along the global minimum cut by
    deactivating the cut arcs.  Mutates ``cap``, ``eps`` and ``flow``;
    returns the final per-variable loads (or a first entry of -1 on a
    saturation-tolerance fault).
    """
    ne = len(child)
    n = nv + ng + 2
    s = nv + ng
    t = s + 1
    n_edges = ng + ne + nv

    entry_active = np.ones(ne, dtype=np.uint8)
    settled = np.zeros(nv + ng, dtype=np.uint8)
    gamma = np.zeros(nv)
    parent = np.empty(ne, dtype=np.int64)
    for g in range(ng):
        for e in range(child_ptr[g], child_ptr[g + 1]):
            parent[e] = g

    rows = np.empty(ne, dtype=np.int64)
    cols = np.empty(ne, dtype=np.int64)
    source_act = np.empty(ng, dtype=np.uint8)
    failed = np.zeros(1, dtype=np.int64)

    max_rounds = nv + ng + 64
    for _ in range(max_rounds):
        # Region labels from the still-active arcs between unsettled vertices.
        n_edge_act = 0
        for e in range(ne):
            if entry_active[e] == 1 and settled[child[e]] == 0:
                rows[n_edge_act] = nv + parent[e]
                cols[n_edge_act] = child[e]
                n_edge_act += 1
        n_regions, label = union_labels(nv + ng, rows[:n_edge_act],
                                        cols[:n_edge_act])
        region_settled = np.ones(n_regions, dtype=np.uint8)
        for v in range(nv + ng):
            if settled[v] == 0:
                region_settled[label[v]] = 0
        if np.all(region_settled == 1):
            return gamma

        # Budgets, structural bounds, and the projected loads per region.
        radius = np.zeros(n_regions)
        for g in range(ng):
            if settled[nv + g] == 0:
                radius[label[nv + g]] += source_cap[g]
        ub = np.zeros(nv)
        for e in range(ne):
            if entry_active[e] == 1 and settled[child[e]] == 0:
                ub[child[e]] += source_cap[parent[e]]
        # Counting sort of unsettled variables by region.
        rcount = np.zeros(n_regions + 1, dtype=np.int64)
        for j in range(nv):
            if settled[j] == 0:
                rcount[label[j] + 1] += 1
        rptr = np.cumsum(rcount)
        rpos = rptr[:-1].copy()
        vorder = np.empty(rptr[-1], dtype=np.int64)
        for j in range(nv):
            if settled[j] == 0:
                r = label[j]
                vorder[rpos[r]] = j
                rpos[r] += 1
        for r in range(n_regions):
            lo, hi = rptr[r], rptr[r + 1]
            if hi == lo or region_settled[r] == 1:
                continue
            uv = np.empty(hi - lo)
            ubv = np.empty(hi - lo)
            for i in range(lo, hi):
                uv[i - lo] = u[vorder[i]]
                ubv[i - lo] = ub[vorder[i]]
            out = np.empty(hi - lo)
            _box_project_into(uv, ubv, radius[r], out)
            for i in range(lo, hi):
                gamma[vorder[i]] = out[i - lo]

        # One max-flow over everything; only active regions move.
        for j in range(nv):
            a = 2 * (ng + ne + j)
            cap[a] = gamma[j]
            eps[a] = SAT_RTOL * (1.0 if cap[a] < 1.0 else cap[a])
        for g in range(ng):
            source_act[g] = 1 if (settled[nv + g] == 0) else 0
        push_relabel(n, s, t, adj_ptr, adj_arc, arc_to, cap, eps, flow,
                     use_gap, relabel_period, source_act)

        # Settle exact regions; split the rest along the global minimum cut.
        region_ok = np.ones(n_regions, dtype=np.uint8)
        for j in range(nv):
            if settled[j] == 0:
                a = 2 * (ng + ne + j)
                resid = flow[a] - gamma[j]
                if resid < 0.0:
                    resid = -resid
                if resid > term_rtol * (1.0 + gamma[j]):
                    region_ok[label[j]] = 0
        any_split = False
        for r in range(n_regions):
            if region_settled[r] == 0 and region_ok[r] == 0:
                any_split = True
                break
        if not any_split:
            for v in range(nv + ng):
                settled[v] = 1
            return gamma

        reach = residual_reachable(n, s, adj_ptr, adj_arc, arc_to, cap, eps,
                                   flow)
        # Progress check: a splitting region must have both sides non-empty.
        plus_seen = np.zeros(n_regions, dtype=np.uint8)
        minus_seen = np.zeros(n_regions, dtype=np.uint8)
        for v in range(nv + ng):
            if settled[v] == 0:
                if reach[v] == 1:
                    plus_seen[label[v]] = 1
                else:
                    minus_seen[label[v]] = 1
        for r in range(n_regions):
            if region_settled[r] == 0 and region_ok[r] == 0:
                if plus_seen[r] == 0 or minus_seen[r] == 0:
                    failed[0] = 1
                    gamma[0] = -1.0
                    return gamma
        for v in range(nv + ng):
            if settled[v] == 0 and region_ok[label[v]] == 1:
                settled[v] = 1
        # Deactivate arcs crossing the cut inside still-active regions.
        for e in range(ne):
            if entry_active[e] == 1:
                cv = child[e]
                gv = nv + parent[e]
                if settled[cv] == 0 and region_ok[label[cv]] == 0:
                    if reach[gv] != reach[cv]:
                        entry_active[e] = 0
                        a = 2 * (ng + e)
                        cap[a] = 0.0
                        eps[a] = SAT_RTOL
    gamma[0] = -1.0
    return gamma


@njit(cache=True, nogil=True)
def union_labels(n, rows, cols):
    """Connected-component labels (0..k-1) of an undirected edge list."""
    parent = np.arange(n, dtype=np.int64)
    for e in range(len(rows)):
        a = rows[e]
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        b = cols[e]
        while parent[b] != b:
            parent[b] = parent[parent[b]]
            b = parent[b]
        if a != b:
            parent[b] = a
    labels = np.full(n, -1, dtype=np.int64)
    count = 0
    for v in range(n):
        r = v
        while parent[r] != r:
            r = parent[r]
        a = v
        while parent[a] != r:
            nxt = parent[a]
            parent[a] = r
            a = nxt
        if labels[r] == -1:
            labels[r] = count
            count += 1
        labels[v] = labels[r]
    return count, labels


# ---------------------------------------------------------------------------
# l1-ball threshold search.


@njit(cache=True, nogil=True)
def _neumaier_add(s, comp, x):
    t = s + x
    if abs(s) >= abs(x):
        comp += (s - t) + x
    else:
        comp += (x - t) + s
    return t, comp


@njit(cache=True, nogil=True)
def _threshold_sorted(work, lo, hi, s_acc, comp, n_acc, radius):
    seg = np.sort(work[lo:hi])[::-1]
    s = s_acc
    nn = n_acc
    for i in range(len(seg)):
        theta = ((s + comp) + seg[i] - radius) / (nn + 1)
        if theta >= seg[i]:
            break
        s, comp = _neumaier_add(s, comp, seg[i])
        nn += 1
    return ((s + comp) - radius) / nn


@njit(cache=True, nogil=True)
def l1_threshold(v, radius):
    """Smallest theta >= 0 with sum(max(v - theta, 0)) == radius.

    ``v`` must be non-negative with sum(v) > radius > 0 (callers handle the
    degenerate cases).  Expected linear time: quickselect-style partitioning
    with median-of-3 pivots, falling back to sorting the surviving window
    after about 3*log2(p) partitions that failed to shrink it meaningfully.
    Support sums are Neumaier-compensated so the returned threshold is
    reproducible to round-off across element orderings.
    """
    work = v.copy()
    lo = 0
    hi = len(work)
    s_acc = 0.0
    comp = 0.0
    n_acc = 0
    max_unproductive = 3 * int(np.ceil(np.log2(len(work) + 1))) + 3
    unproductive = 0

    while hi > lo:
        size = hi - lo
        if unproductive > max_unproductive:
            return _threshold_sorted(work, lo, hi, s_acc, comp, n_acc, radius)
        # Median-of-3 pivot; it is an element value, so ties always shrink
        # the window by at least one.
        a = work[lo]
        b = work[(lo + hi) // 2]
        c = work[hi - 1]
        if a > c:
            a, c = c, a
        if a > b:
            b = a
        elif b > c:
            b = c
        pivot = b
        # Three-way partition of the window around the pivot value.
        i = lo
        j = hi
        k = lo
        sum_gt = 0.0
        cg = 0.0
        n_eq = 0
        while k < j:
            x = work[k]
            if x > pivot:
                work[k] = work[i]
                work[i] = x
                sum_gt, cg = _neumaier_add(sum_gt, cg, x)
                i += 1
                k += 1
            elif x == pivot:
                j -= 1
                work[k] = work[j]
                work[j] = x
                n_eq += 1
            else:
                k += 1
        n_gt = i - lo
        phi = (s_acc + comp + sum_gt + cg) - (n_acc + n_gt) * pivot - radius
        if phi > 0.0:
            # Threshold lies above the pivot: only the strictly-greater part
            # can be in the support.
            hi = lo + n_gt
        else:
            # Threshold is at or below the pivot: everything >= pivot joins
            # the support; continue among the strictly-smaller values.
            s_acc, comp = _neumaier_add(s_acc, comp, sum_gt)
            s_acc, comp = _neumaier_add(s_acc, comp, cg)
            s_acc, comp = _neumaier_add(s_acc, comp, n_eq * pivot)
            n_acc += n_gt + n_eq
            m = j - i  # number of < pivot elements
            for idx in range(m):
                work[lo + idx] = work[i + idx]
            hi = lo + m
        if hi - lo > 0.75 * size:
            unproductive += 1
    return ((s_acc + comp) - radius) / n_acc
