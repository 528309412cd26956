# cython: language_level=3
"""Compiled inner loops. Semantics mirror :mod:`pvdr._pykernels` exactly."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, INFINITY

cnp.import_array()


def sweep_batch(const long[:] parent, const double[:] z_re, const double[:] z_im,
                const double[:, :] p, const double[:, :] q, double v0,
                double tol, int max_iter):
    cdef Py_ssize_t T = p.shape[0]
    cdef Py_ssize_t nb = p.shape[1]
    v_re_arr = np.empty((T, nb))
    v_im_arr = np.empty((T, nb))
    iters_arr = np.zeros(T, dtype=np.int64)
    loss_arr = np.zeros(T)
    cdef double[:, :] v_re = v_re_arr
    cdef double[:, :] v_im = v_im_arr
    cdef long[:] iters = iters_arr
    cdef double[:] loss = loss_arr
    cdef double[:] j_re = np.empty(nb)
    cdef double[:] j_im = np.empty(nb)
    cdef Py_ssize_t t, i, par
    cdef int it
    cdef double den, a, b, nre, nim, dv, dmax, acc

    for t in range(T):
        for i in range(nb):
            v_re[t, i] = v0
            v_im[t, i] = 0.0
        for it in range(1, max_iter + 1):
            # injected currents conj(S / V)
            for i in range(nb):
                a = v_re[t, i]
                b = v_im[t, i]
                den = a * a + b * b
                j_re[i] = (p[t, i] * a + q[t, i] * b) / den
                j_im[i] = (p[t, i] * b - q[t, i] * a) / den
            for i in range(nb - 1, 0, -1):
                par = parent[i]
                j_re[par] += j_re[i]
                j_im[par] += j_im[i]
            dmax = 0.0
            for i in range(1, nb):
                par = parent[i]
                nre = v_re[t, par] - (z_re[i] * j_re[i] - z_im[i] * j_im[i])
                nim = v_im[t, par] - (z_re[i] * j_im[i] + z_im[i] * j_re[i])
                a = nre - v_re[t, i]
                b = nim - v_im[t, i]
                dv = sqrt(a * a + b * b)
                if dv > dmax:
                    dmax = dv
                v_re[t, i] = nre
                v_im[t, i] = nim
            iters[t] = it
            if dmax < tol:
                break
        else:
            iters[t] = max_iter + 1
        acc = 0.0
        for i in range(1, nb):
            acc += (j_re[i] * j_re[i] + j_im[i] * j_im[i]) * z_re[i]
        loss[t] = acc
    return v_re_arr, v_im_arr, iters_arr, loss_arr


def dp_schedule(const double[:] cost_on, const unsigned char[:] allowed,
                const long[:] lo, const long[:] hi, double c_sw, int b_init):
    cdef Py_ssize_t N = cost_on.shape[0]
    cdef Py_ssize_t M = N + 1
    cdef double[:, :] val = np.full((M, 2), INFINITY)
    cdef double[:, :] nxt = np.empty((M, 2))
    choice_arr = np.zeros((N, M, 2), dtype=np.int8)
    cdef signed char[:, :, :] choice = choice_arr
    cdef Py_ssize_t k, n
    cdef int s
    cdef double a, b
    val[0, b_init] = 0.0
    for k in range(N):
        for n in range(M):
            a = val[n, 0]
            b = val[n, 1] + c_sw
            if a <= b:
                nxt[n, 0] = a
                choice[k, n, 0] = 0
            else:
                nxt[n, 0] = b
                choice[k, n, 0] = 1
        nxt[0, 1] = INFINITY
        for n in range(1, M):
            if allowed[k]:
                a = val[n - 1, 0] + c_sw
                b = val[n - 1, 1]
                if b <= a:
                    nxt[n, 1] = b + cost_on[k]
                    choice[k, n, 1] = 1
                else:
                    nxt[n, 1] = a + cost_on[k]
                    choice[k, n, 1] = 0
            else:
                nxt[n, 1] = INFINITY
        for n in range(M):
            if n < lo[k] or n > hi[k]:
                val[n, 0] = INFINITY
                val[n, 1] = INFINITY
            else:
                val[n, 0] = nxt[n, 0]
                val[n, 1] = nxt[n, 1]
    cdef double best = INFINITY
    cdef Py_ssize_t bn = 0
    cdef int bs = 0
    for n in range(M):
        for s in range(2):
            if val[n, s] < best:
                best = val[n, s]
                bn = n
                bs = s
    sched = np.zeros(N, dtype=np.int8)
    if best == INFINITY:
        return sched, best
    cdef int s_cur = bs
    cdef int s_prev
    cdef Py_ssize_t n_cur = bn
    for k in range(N - 1, -1, -1):
        sched[k] = s_cur
        s_prev = choice[k, n_cur, s_cur]
        if s_cur == 1:
            n_cur -= 1
        s_cur = s_prev
    return sched, best


cdef int _unit_patterns(int N, double rating, double soc0, double soc_max, double soc_term,
                        const double[:] draws, int b_init, double dt, const double[:] spot,
                        double c_sw, double tol, list codes, list costs):
    cdef long code, total = 1 << N
    cdef int k, bit, prev, sw
    cdef double soc, own
    cdef bint ok
    for code in range(total):
        soc = soc0
        ok = True
        own = 0.0
        prev = b_init
        sw = 0
        for k in range(N):
            bit = (code >> k) & 1
            soc = soc + rating * bit * dt - draws[k]
            if soc < -tol or soc > soc_max + tol:
                ok = False
                break
            if bit:
                own += spot[k] * dt * rating
            if bit != prev:
                sw += 1
            prev = bit
        if ok and soc >= soc_term - tol:
            codes.append(code)
            costs.append(own + c_sw * sw)
    return len(codes)


def enumerate_best(const double[:] rating, const double[:] soc0, const double[:] soc_max,
                   const double[:] soc_term, const double[:, :] draws, const long[:] b_init,
                   double dt, const double[:] spot, double shed_cost, double c_sw,
                   const double[:] need, const double[:] e_min, const double[:] cap,
                   double tol):
    cdef int I = rating.shape[0]
    cdef int N = spot.shape[0]
    cdef int i, k, pos
    unit_codes = []
    unit_costs = []
    for i in range(I):
        codes = []
        costs = []
        _unit_patterns(N, rating[i], soc0[i], soc_max[i], soc_term[i], draws[i],
                       <int>b_init[i], dt, spot, c_sw, tol, codes, costs)
        if not codes:
            return None, INFINITY, 0
        unit_codes.append(np.asarray(codes, dtype=np.int64))
        unit_costs.append(np.asarray(costs, dtype=np.float64))
    cdef long[:] counts = np.asarray([len(c) for c in unit_codes], dtype=np.int64)
    cdef long max_len = max(counts)
    code_arr = np.zeros((I, max_len), dtype=np.int64)
    cost_arr = np.zeros((I, max_len))
    for i in range(I):
        code_arr[i, :counts[i]] = unit_codes[i]
        cost_arr[i, :counts[i]] = unit_costs[i]
    cdef long[:, :] code_tab = code_arr
    cdef double[:, :] cost_tab = cost_arr
    cdef long[:] idx = np.zeros(I, dtype=np.int64)
    cdef long[:] best_idx = np.zeros(I, dtype=np.int64)
    cdef double best = INFINITY
    cdef double total, e, shed
    cdef long n_feasible = 0
    cdef bint ok
    while True:
        total = 0.0
        for i in range(I):
            total += cost_tab[i, idx[i]]
        ok = True
        for k in range(N):
            e = 0.0
            for i in range(I):
                if (code_tab[i, idx[i]] >> k) & 1:
                    e += rating[i]
            if e < e_min[k] - tol or e > cap[k] + tol:
                ok = False
                break
            shed = need[k] - e
            if shed > 0:
                total += shed_cost * dt * shed
        if ok:
            n_feasible += 1
            if total < best:
                best = total
                for i in range(I):
                    best_idx[i] = idx[i]
        # odometer, last unit fastest
        pos = I - 1
        while pos >= 0:
            idx[pos] += 1
            if idx[pos] < counts[pos]:
                break
            idx[pos] = 0
            pos -= 1
        if pos < 0:
            break
    if best == INFINITY:
        return None, best, 0
    sched = np.zeros((I, N), dtype=np.int8)
    for i in range(I):
        for k in range(N):
            sched[i, k] = (code_tab[i, best_idx[i]] >> k) & 1
    return sched, best, n_feasible


cdef inline bint _less(double da, long a, double db, long b) noexcept nogil:
    return da < db or (da == db and a < b)


cdef void _heap_push(double[:] hd, long[:] hv, long* size, double d, long v) noexcept nogil:
    cdef long i = size[0], parent
    size[0] += 1
    while i > 0:
        parent = (i - 1) >> 1
        if not _less(d, v, hd[parent], hv[parent]):
            break
        hd[i] = hd[parent]
        hv[i] = hv[parent]
        i = parent
    hd[i] = d
    hv[i] = v


cdef void _heap_pop(double[:] hd, long[:] hv, long* size) noexcept nogil:
    cdef long n = size[0] - 1, i = 0, c
    cdef double d = hd[n]
    cdef long v = hv[n]
    size[0] = n
    while True:
        c = 2 * i + 1
        if c >= n:
            break
        if c + 1 < n and _less(hd[c + 1], hv[c + 1], hd[c], hv[c]):
            c += 1
        if not _less(hd[c], hv[c], d, v):
            break
        hd[i] = hd[c]
        hv[i] = hv[c]
        i = c
    if n > 0:
        hd[i] = d
        hv[i] = v


def ssp_flow(long n_nodes, tail, head, cost, cap_fwd, cap_bwd, excess):
    tail_a = np.asarray(tail, dtype=np.int64)
    head_a = np.asarray(head, dtype=np.int64)
    cdef long n_arcs = tail_a.shape[0]
    r_to_a = np.empty(2 * n_arcs, dtype=np.int64)
    r_to_a[0::2] = head_a
    r_to_a[1::2] = tail_a
    r_from_a = np.empty(2 * n_arcs, dtype=np.int64)
    r_from_a[0::2] = tail_a
    r_from_a[1::2] = head_a
    r_cost_a = np.empty(2 * n_arcs)
    r_cost_a[0::2] = cost
    r_cost_a[1::2] = -np.asarray(cost, dtype=float)
    r_cap_a = np.empty(2 * n_arcs, dtype=np.int64)
    r_cap_a[0::2] = cap_fwd
    r_cap_a[1::2] = cap_bwd
    order_a = np.argsort(r_from_a, kind="stable").astype(np.int64)
    start_a = np.searchsorted(r_from_a[order_a], np.arange(n_nodes + 1)).astype(np.int64)

    cdef long[:] r_to = r_to_a
    cdef long[:] r_from = r_from_a
    cdef double[:] r_cost = r_cost_a
    cdef long[:] r_cap = r_cap_a
    cdef long[:] order = order_a
    cdef long[:] start = start_a
    cdef long[:] exc = np.array(excess, dtype=np.int64)
    cdef double[:] pot = np.zeros(n_nodes)
    cdef double[:] dist = np.empty(n_nodes)
    cdef long[:] pred = np.empty(n_nodes, dtype=np.int64)
    cdef unsigned char[:] done = np.empty(n_nodes, dtype=np.uint8)
    cdef long[:] settled = np.empty(n_nodes, dtype=np.int64)
    cdef double[:] hd = np.empty(2 * n_arcs + n_nodes + 1)
    cdef long[:] hv = np.empty(2 * n_arcs + n_nodes + 1, dtype=np.int64)
    cdef long hsize, n_settled, u, v, e, t, sink, src, amount, w
    cdef double d, pu, rc, nd, dt
    cdef bint any_source

    with nogil:
        while True:
            hsize = 0
            any_source = False
            for v in range(n_nodes):
                dist[v] = INFINITY
                pred[v] = -1
                done[v] = 0
            for v in range(n_nodes):
                if exc[v] > 0:
                    any_source = True
                    dist[v] = 0.0
                    _heap_push(hd, hv, &hsize, 0.0, v)
            if not any_source:
                break
            sink = -1
            n_settled = 0
            while hsize > 0:
                d = hd[0]
                u = hv[0]
                _heap_pop(hd, hv, &hsize)
                if done[u]:
                    continue
                done[u] = 1
                settled[n_settled] = u
                n_settled += 1
                if exc[u] < 0:
                    sink = u
                    break
                pu = pot[u]
                for t in range(start[u], start[u + 1]):
                    e = order[t]
                    if r_cap[e] <= 0:
                        continue
                    v = r_to[e]
                    if done[v]:
                        continue
                    rc = r_cost[e] + pu - pot[v]
                    if rc < 0.0:
                        rc = 0.0
                    nd = d + rc
                    if nd < dist[v]:
                        dist[v] = nd
                        pred[v] = e
                        _heap_push(hd, hv, &hsize, nd, v)
            if sink < 0:
                break
            dt = dist[sink]
            for t in range(n_settled):
                u = settled[t]
                pot[u] += dist[u]
            for u in range(n_nodes):
                if not done[u]:
                    pot[u] += dt
            amount = -exc[sink]
            v = sink
            while pred[v] >= 0:
                e = pred[v]
                if r_cap[e] < amount:
                    amount = r_cap[e]
                v = r_from[e]
            if exc[v] < amount:
                amount = exc[v]
            src = v
            w = sink
            while pred[w] >= 0:
                e = pred[w]
                r_cap[e] -= amount
                r_cap[e ^ 1] += amount
                w = r_from[e]
            exc[src] -= amount
            exc[sink] += amount

    final = np.asarray(r_cap_a)
    delta = np.asarray(cap_fwd, dtype=np.int64) - final[0::2]
    left = int(np.asarray(exc)[np.asarray(exc) > 0].sum())
    return delta, left
