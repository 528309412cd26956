"""Pure numpy versions of the hot loops in ``_ckernels.pyx``.

Each function returns the same values as its compiled twin; the sweep is
vectorised over minutes instead of looping over them.
"""
import numpy as np


def sweep_batch(parent, z_re, z_im, p, q, v0, tol, max_iter):
    T, nb = p.shape
    z = np.asarray(z_re) + 1j * np.asarray(z_im)
    s_conj = np.asarray(p) - 1j * np.asarray(q)
    v = np.full((T, nb), v0, dtype=complex)
    iters = np.zeros(T, dtype=np.int64)
    active = np.ones(T, dtype=bool)
    j = np.zeros((T, nb), dtype=complex)
    for it in range(1, max_iter + 1):
        rows = np.flatnonzero(active)
        if rows.size == 0:
            break
        va = v[rows]
        ja = s_conj[rows] / np.conj(va)
        for i in range(nb - 1, 0, -1):
            ja[:, parent[i]] += ja[:, i]
        vn = va.copy()
        for i in range(1, nb):
            vn[:, i] = vn[:, parent[i]] - z[i] * ja[:, i]
        dv = np.abs(vn - va).max(axis=1)
        v[rows] = vn
        j[rows] = ja
        iters[rows] = it
        active[rows[dv < tol]] = False
    iters[active] = max_iter + 1
    loss = (np.abs(j[:, 1:]) ** 2 * np.asarray(z_re)[1:]).sum(axis=1)
    return v.real.copy(), v.imag.copy(), iters, loss


def dp_schedule(cost_on, allowed, lo, hi, c_sw, b_init):
    cost_on = np.asarray(cost_on, dtype=float)
    N = cost_on.shape[0]
    M = N + 1
    val = np.full((M, 2), np.inf)
    val[0, b_init] = 0.0
    choice = np.zeros((N, M, 2), dtype=np.int8)
    idx = np.arange(M)
    for k in range(N):
        nxt = np.empty((M, 2))
        a = val[:, 0]
        b = val[:, 1] + c_sw
        stay = a <= b
        nxt[:, 0] = np.where(stay, a, b)
        choice[k, :, 0] = np.where(stay, 0, 1)
        nxt[0, 1] = np.inf
        if allowed[k]:
            a = val[:-1, 0] + c_sw
            b = val[:-1, 1]
            keep = b <= a
            nxt[1:, 1] = np.where(keep, b, a) + cost_on[k]
            choice[k, 1:, 1] = np.where(keep, 1, 0)
        else:
            nxt[1:, 1] = np.inf
        out = (idx < lo[k]) | (idx > hi[k])
        nxt[out] = np.inf
        val = nxt
    flat = int(np.argmin(val))
    best = float(val.flat[flat])
    sched = np.zeros(N, dtype=np.int8)
    if not np.isfinite(best):
        return sched, np.inf
    n_cur, s_cur = divmod(flat, 2)
    for k in range(N - 1, -1, -1):
        sched[k] = s_cur
        s_prev = choice[k, n_cur, s_cur]
        if s_cur == 1:
            n_cur -= 1
        s_cur = int(s_prev)
    return sched, best


def _unit_patterns(N, rating, soc0, soc_max, soc_term, draws, b_init, dt, spot, c_sw, tol):
    codes = np.arange(1 << N, dtype=np.int64)
    bits = ((codes[:, None] >> np.arange(N)) & 1).astype(np.int8)
    soc = np.full(codes.shape[0], float(soc0))
    ok = np.ones(codes.shape[0], dtype=bool)
    for k in range(N):
        soc = soc + rating * bits[:, k] * dt - draws[k]
        ok &= (soc >= -tol) & (soc <= soc_max + tol)
    ok &= soc >= soc_term - tol
    bits = bits[ok]
    prev = np.concatenate([np.full((bits.shape[0], 1), b_init, dtype=np.int8), bits[:, :-1]], axis=1)
    switches = (bits != prev).sum(axis=1)
    own = (bits * (spot * dt * rating)).sum(axis=1) + c_sw * switches
    return bits, own


def enumerate_best(rating, soc0, soc_max, soc_term, draws, b_init, dt, spot, shed_cost,
                   c_sw, need, e_min, cap, tol):
    rating = np.asarray(rating, dtype=float)
    I = rating.shape[0]
    N = len(spot)
    units = []
    for i in range(I):
        bits, own = _unit_patterns(N, rating[i], soc0[i], soc_max[i], soc_term[i], draws[i],
                                   int(b_init[i]), dt, np.asarray(spot), c_sw, tol)
        if bits.shape[0] == 0:
            return None, np.inf, 0
        units.append((bits, own))
    # combine units 1..I-1 exhaustively, then sweep unit 0 in chunks
    power = np.zeros((1, N))
    own = np.zeros(1)
    index = np.zeros((1, 0), dtype=np.int64)
    for i in range(1, I):
        bits, own_i = units[i]
        n0, n1 = power.shape[0], bits.shape[0]
        power = (power[:, None, :] + bits[None, :, :] * rating[i]).reshape(n0 * n1, N)
        own = (own[:, None] + own_i[None, :]).reshape(-1)
        index = np.concatenate([np.repeat(index, n1, axis=0),
                                np.tile(np.arange(n1), n0)[:, None]], axis=1)
    need = np.asarray(need, dtype=float)
    e_min = np.asarray(e_min, dtype=float) - tol
    cap = np.asarray(cap, dtype=float) + tol
    bits0, own0 = units[0]
    chunk = max(1, 4_000_000 // max(1, power.shape[0] * N))
    best, best_pair, n_feasible = np.inf, None, 0
    for start in range(0, bits0.shape[0], chunk):
        b0 = bits0[start:start + chunk]
        tot_power = b0[:, None, :] * rating[0] + power[None, :, :]
        ok = ((tot_power >= e_min) & (tot_power <= cap)).all(axis=2)
        shed = np.clip(need - tot_power, 0.0, None)
        total = own0[start:start + chunk, None] + own[None, :] + (shed_cost * dt * shed).sum(axis=2)
        total = np.where(ok, total, np.inf)
        n_feasible += int(ok.sum())
        flat = int(np.argmin(total))
        if total.flat[flat] < best:
            best = float(total.flat[flat])
            r0, r1 = divmod(flat, total.shape[1])
            best_pair = (start + r0, r1)
    if best_pair is None:
        return None, np.inf, 0
    r0, r1 = best_pair
    sched = np.zeros((I, N), dtype=np.int8)
    sched[0] = bits0[r0]
    for i in range(1, I):
        sched[i] = units[i][0][index[r1, i - 1]]
    return sched, best, n_feasible


def ssp_flow(n_nodes, tail, head, cost, cap_fwd, cap_bwd, excess):
    """Successive shortest paths on a residual network.

    Arc ``a`` has a forward residual ``tail -> head`` (capacity ``cap_fwd``,
    cost ``cost``) and a backward residual (capacity ``cap_bwd``, cost
    ``-cost``); every residual with capacity must have non-negative cost.
    Node excesses are routed to deficits at least cost. Returns the change
    of flow per arc and the amount of excess left unrouted.
    """
    import heapq
    tail = np.asarray(tail, dtype=np.int64)
    head = np.asarray(head, dtype=np.int64)
    n_arcs = tail.shape[0]
    r_to = np.empty(2 * n_arcs, dtype=np.int64)
    r_to[0::2], r_to[1::2] = head, tail
    r_from = np.empty(2 * n_arcs, dtype=np.int64)
    r_from[0::2], r_from[1::2] = tail, head
    r_cost = np.empty(2 * n_arcs)
    r_cost[0::2], r_cost[1::2] = cost, -np.asarray(cost, dtype=float)
    r_cap = np.empty(2 * n_arcs, dtype=np.int64)
    r_cap[0::2], r_cap[1::2] = cap_fwd, cap_bwd
    order = np.argsort(r_from, kind="stable")
    start = np.searchsorted(r_from[order], np.arange(n_nodes + 1))
    adj = [order[start[v]:start[v + 1]].tolist() for v in range(n_nodes)]
    r_to_l, r_cost_l = r_to.tolist(), r_cost.tolist()
    r_cap_l = r_cap.tolist()
    excess = [int(e) for e in excess]
    pot = [0.0] * n_nodes
    inf = float("inf")
    while True:
        sources = [v for v in range(n_nodes) if excess[v] > 0]
        if not sources:
            break
        dist = [inf] * n_nodes
        pred = [-1] * n_nodes
        done = [False] * n_nodes
        heap = []
        for v in sources:
            dist[v] = 0.0
            heap.append((0.0, v))
        heapq.heapify(heap)
        sink, settled = -1, []
        while heap:
            d, u = heapq.heappop(heap)
            if done[u]:
                continue
            done[u] = True
            settled.append(u)
            if excess[u] < 0:
                sink = u
                break
            pu = pot[u]
            for e in adj[u]:
                if r_cap_l[e] <= 0:
                    continue
                v = r_to_l[e]
                if done[v]:
                    continue
                rc = r_cost_l[e] + pu - pot[v]
                if rc < 0.0:
                    rc = 0.0
                nd = d + rc
                if nd < dist[v]:
                    dist[v] = nd
                    pred[v] = e
                    heapq.heappush(heap, (nd, v))
        if sink < 0:
            break
        dt = dist[sink]
        for u in settled:
            pot[u] += dist[u]
        for u in range(n_nodes):
            if not done[u]:
                pot[u] += dt
        # bottleneck along the path
        amount = -excess[sink]
        v = sink
        while pred[v] >= 0:
            e = pred[v]
            amount = min(amount, r_cap_l[e])
            v = r_from[e]
        amount = min(amount, excess[v])
        w = sink
        while pred[w] >= 0:
            e = pred[w]
            r_cap_l[e] -= amount
            r_cap_l[e ^ 1] += amount
            w = r_from[e]
        excess[v] -= amount
        excess[sink] += amount
    final = np.asarray(r_cap_l, dtype=np.int64)
    delta = np.asarray(cap_fwd, dtype=np.int64) - final[0::2]
    return delta, int(sum(e for e in excess if e > 0))
