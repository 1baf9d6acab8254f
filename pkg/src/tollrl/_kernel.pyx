# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled within-day propagation kernel.

Mirrors ``_kernel_py.propagate`` operation for operation; see that module
for the model description.
"""

import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free

cnp.import_array()


cdef struct Event:
    double time
    long bn
    long seq
    long z
    long k
    long t


cdef inline bint _less(Event* a, Event* b) noexcept nogil:
    if a.time != b.time:
        return a.time < b.time
    if a.bn != b.bn:
        return a.bn < b.bn
    return a.seq < b.seq


cdef inline void _push(Event* heap, long* size, Event ev) noexcept nogil:
    cdef long i = size[0]
    cdef long parent
    size[0] += 1
    heap[i] = ev
    while i > 0:
        parent = (i - 1) >> 1
        if _less(&heap[i], &heap[parent]):
            heap[i], heap[parent] = heap[parent], heap[i]
            i = parent
        else:
            break


cdef inline Event _pop(Event* heap, long* size) noexcept nogil:
    cdef Event top = heap[0]
    cdef long n, i, l, r, m
    size[0] -= 1
    n = size[0]
    if n > 0:
        heap[0] = heap[n]
        i = 0
        while True:
            l = 2 * i + 1
            r = l + 1
            m = i
            if l < n and _less(&heap[l], &heap[m]):
                m = l
            if r < n and _less(&heap[r], &heap[m]):
                m = r
            if m == i:
                break
            heap[i], heap[m] = heap[m], heap[i]
            i = m
    return top


def propagate(departures, tolls, mu, ptr, rows, seg, horizon):
    cdef double[:, ::1] dep = np.ascontiguousarray(departures, dtype=np.float64)
    cdef double[:, ::1] toll = np.ascontiguousarray(tolls, dtype=np.float64)
    cdef double[::1] mu_v = np.ascontiguousarray(mu, dtype=np.float64)
    cdef long long[::1] ptr_v = np.ascontiguousarray(ptr, dtype=np.int64)
    cdef long long[::1] rows_v = np.ascontiguousarray(rows, dtype=np.int64)
    cdef long long[::1] seg_v = np.ascontiguousarray(seg, dtype=np.int64)

    cdef long n_routes = dep.shape[0]
    cdef long n_bn = mu_v.shape[0]
    cdef long T = horizon
    cdef long last_slot = T - 1
    cdef long nnz = rows_v.shape[0]

    inflow_a = np.zeros((n_bn, T))
    queue_a = np.zeros((n_bn, T))
    paid_a = np.zeros((n_routes, T))
    arrival_a = np.zeros((n_routes, T))
    overflow_a = np.zeros((n_routes, T), dtype=np.uint8)
    entry_a = np.zeros((nnz, T))
    exit_a = np.zeros((nnz, T))
    cdef double[:, ::1] inflow = inflow_a
    cdef double[:, ::1] queue = queue_a
    cdef double[:, ::1] paid = paid_a
    cdef double[:, ::1] arr = arrival_a
    cdef cnp.uint8_t[:, ::1] over = overflow_a
    cdef double[:, ::1] entry = entry_a
    cdef double[:, ::1] exit_ = exit_a

    q_len_a = np.zeros(n_bn)
    q_time_a = np.zeros(n_bn)
    next_rec_a = np.zeros(n_bn, dtype=np.int64)
    cdef double[::1] q_len = q_len_a
    cdef double[::1] q_time = q_time_a
    cdef long long[::1] next_rec = next_rec_a

    cdef long cap = n_routes * T + 1
    cdef Event* heap = <Event*> malloc(cap * sizeof(Event))
    cdef Event* batch = <Event*> malloc(cap * sizeof(Event))
    if heap == NULL or batch == NULL:
        free(heap)
        free(batch)
        raise MemoryError()

    cdef long size = 0
    cdef long seq = 0
    cdef long z, t, k, b, base, n_hops, first, rec, slot, ex_slot, nb, j, pos
    cdef double y, q, qt, v, m, total, delay, out, price, m_b, y2
    cdef Event ev

    try:
        with nogil:
            for z in range(n_routes):
                base = ptr_v[z]
                n_hops = ptr_v[z + 1] - base
                first = seg_v[base + z]
                for t in range(T):
                    y = <double>(t + first)
                    if n_hops == 0:
                        arr[z, t] = y
                    else:
                        ev.time = y
                        ev.bn = rows_v[base]
                        ev.seq = seq
                        ev.z = z
                        ev.k = 0
                        ev.t = t
                        _push(heap, &size, ev)
                        seq += 1

            while size > 0:
                batch[0] = _pop(heap, &size)
                nb = 1
                y = batch[0].time
                b = batch[0].bn
                while size > 0 and heap[0].time == y and heap[0].bn == b:
                    batch[nb] = _pop(heap, &size)
                    nb += 1

                m_b = mu_v[b]
                q = q_len[b]
                qt = q_time[b]
                rec = next_rec[b]
                while rec < T and rec <= y:
                    v = q - m_b * (rec - qt)
                    queue[b, rec] = v if v > 0.0 else 0.0
                    rec += 1
                next_rec[b] = rec
                q = q - m_b * (y - qt)
                if q < 0.0:
                    q = 0.0

                slot = <long>y
                if slot > last_slot:
                    slot = last_slot
                total = 0.0
                for j in range(nb):
                    m = dep[batch[j].z, batch[j].t]
                    total += m
                    inflow[b, slot] += m
                delay = (q + total * 0.5) / m_b
                q_len[b] = q + total
                q_time[b] = y
                out = y + delay

                ex_slot = <long>out
                if ex_slot > last_slot:
                    ex_slot = last_slot
                price = toll[b, ex_slot]
                for j in range(nb):
                    z = batch[j].z
                    k = batch[j].k
                    t = batch[j].t
                    base = ptr_v[z]
                    pos = base + k
                    entry[pos, t] = y
                    exit_[pos, t] = out
                    paid[z, t] += price
                    y2 = out + seg_v[base + z + k + 1]
                    if k + 1 < ptr_v[z + 1] - base:
                        ev.time = y2
                        ev.bn = rows_v[pos + 1]
                        ev.seq = seq
                        ev.z = z
                        ev.k = k + 1
                        ev.t = t
                        _push(heap, &size, ev)
                        seq += 1
                    else:
                        arr[z, t] = y2

            for b in range(n_bn):
                q = q_len[b]
                qt = q_time[b]
                for rec in range(next_rec[b], T):
                    v = q - mu_v[b] * (rec - qt)
                    queue[b, rec] = v if v > 0.0 else 0.0

            for z in range(n_routes):
                for t in range(T):
                    if arr[z, t] > last_slot:
                        over[z, t] = 1
                        arr[z, t] = <double>last_slot
    finally:
        free(heap)
        free(batch)

    return inflow_a, queue_a, paid_a, arrival_a, overflow_a, entry_a, exit_a


def step_queue(double n_now, double inflow, double mu):
    cdef double v = n_now + inflow - mu
    return v if v > 0.0 else 0.0
