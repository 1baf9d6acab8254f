"""Pure-Python within-day propagation kernel (fallback for ``_kernel``).

Both kernels must stay arithmetically identical: same event order, same
operation order, so results agree bit-for-bit.
"""

import heapq

import numpy as np


def propagate(departures, tolls, mu, ptr, rows, seg, horizon):
    """Push every (route, departure slot) cohort through its bottlenecks.

    Times are 0-based slot coordinates. Each bottleneck is an exact fluid
    point queue served at ``mu`` per slot; a batch of mass ``m`` that reaches
    it at time ``y`` behind queue ``Q(y)`` is delayed by ``(Q + m/2) / mu``.
    Cohorts arriving at the same bottleneck at the same instant share one
    batch, so their delays are equal.

    Returns ``(inflow, queue, toll_paid, arrival, overflow, entry, exit)``.
    """
    departures = np.ascontiguousarray(departures, dtype=np.float64)
    tolls = np.ascontiguousarray(tolls, dtype=np.float64)
    n_routes = departures.shape[0]
    n_bn = mu.shape[0]
    T = int(horizon)
    last_slot = T - 1

    inflow = np.zeros((n_bn, T))
    queue = np.zeros((n_bn, T))
    toll_paid = np.zeros((n_routes, T))
    arrival = np.zeros((n_routes, T))
    overflow = np.zeros((n_routes, T), dtype=np.uint8)
    nnz = rows.shape[0]
    entry = np.zeros((nnz, T))
    exit_ = np.zeros((nnz, T))

    dep = departures.tolist()
    toll_l = tolls.tolist()
    mu_l = mu.tolist()
    ptr_l = ptr.tolist()
    rows_l = rows.tolist()
    seg_l = seg.tolist()

    q_len = [0.0] * n_bn
    q_time = [0.0] * n_bn
    next_rec = [0] * n_bn
    inflow_l = [[0.0] * T for _ in range(n_bn)]
    queue_l = [[0.0] * T for _ in range(n_bn)]
    paid = [[0.0] * T for _ in range(n_routes)]
    arr = [[0.0] * T for _ in range(n_routes)]

    heap = []
    seq = 0
    for z in range(n_routes):
        base = ptr_l[z]
        n_hops = ptr_l[z + 1] - base
        first = seg_l[base + z]
        for t in range(T):
            y = t + first
            if n_hops == 0:
                arr[z][t] = float(y)
            else:
                heap.append((float(y), rows_l[base], seq, z, 0, t))
                seq += 1
    heapq.heapify(heap)

    while heap:
        y, b, _, z0, k0, t0 = heapq.heappop(heap)
        batch = [(z0, k0, t0)]
        while heap and heap[0][0] == y and heap[0][1] == b:
            _, _, _, z1, k1, t1 = heapq.heappop(heap)
            batch.append((z1, k1, t1))

        m_b = mu_l[b]
        q = q_len[b]
        qt = q_time[b]
        rec = next_rec[b]
        while rec < T and rec <= y:
            v = q - m_b * (rec - qt)
            queue_l[b][rec] = v if v > 0.0 else 0.0
            rec += 1
        next_rec[b] = rec
        q = q - m_b * (y - qt)
        if q < 0.0:
            q = 0.0

        slot = int(y)
        if slot > last_slot:
            slot = last_slot
        total = 0.0
        for z, k, t in batch:
            m = dep[z][t]
            total += m
            inflow_l[b][slot] += m
        delay = (q + total * 0.5) / m_b
        q_len[b] = q + total
        q_time[b] = y
        out = y + delay

        ex_slot = int(out)
        if ex_slot > last_slot:
            ex_slot = last_slot
        price = toll_l[b][ex_slot]
        for z, k, t in batch:
            base = ptr_l[z]
            pos = base + k
            entry[pos, t] = y
            exit_[pos, t] = out
            paid[z][t] += price
            y2 = out + seg_l[base + z + k + 1]
            if k + 1 < ptr_l[z + 1] - base:
                heapq.heappush(heap, (y2, rows_l[pos + 1], seq, z, k + 1, t))
                seq += 1
            else:
                arr[z][t] = y2

    for b in range(n_bn):
        q = q_len[b]
        qt = q_time[b]
        for rec in range(next_rec[b], T):
            v = q - mu_l[b] * (rec - qt)
            queue_l[b][rec] = v if v > 0.0 else 0.0

    inflow[:] = inflow_l
    queue[:] = queue_l
    toll_paid[:] = paid
    arrival[:] = arr
    late = arrival > last_slot
    overflow[late] = 1
    arrival[late] = float(last_slot)
    return inflow, queue, toll_paid, arrival, overflow, entry, exit_


def step_queue(n_now, inflow, mu):
    v = n_now + inflow - mu
    return v if v > 0.0 else 0.0

