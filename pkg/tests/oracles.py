"""Independent reference computations used by the tests.

Everything here is written from the model equations in plain Python (lists,
``math``, ``fractions``/``mpmath`` where exactness matters) and shares no
code with the package.
"""

import math

import mpmath


def queue_step(n, a, mu):
    return max(0.0, n + a - mu)


def wait(n, mu):
    return n / mu


def discrete_queue(inflow, mu):
    """Start-of-slot queue lengths for per-slot inflows arriving at slot starts."""
    out, n = [], 0.0
    for a in inflow:
        out.append(n)
        n = queue_step(n, a, mu)
    return out


def logit_mp(costs, theta, dps=50):
    """Arbitrary-precision logit shares."""
    with mpmath.workdps(dps):
        e = [mpmath.exp(-mpmath.mpf(theta) * mpmath.mpf(c)) for c in costs]
        s = mpmath.fsum(e)
        return [float(x / s) for x in e]


def perceived(history, lam):
    """Exponentially weighted mean of ``history`` (oldest first) over the days present."""
    days = list(reversed(history))
    num = sum(lam ** k * c for k, c in enumerate(days))
    den = sum(lam ** k for k in range(len(days)))
    return num / den


def switching_active(wait_row, n, dw):
    """Direct moving-average evaluation with zero padding outside the day."""
    T = len(wait_row)
    out = []
    for t in range(T):
        s = 0.0
        for tp in range(t - n, t + n + 1):
            s += wait_row[tp] if 0 <= tp < T else 0.0
        out.append(not (s / (2 * n + 1) < dw))
    return out


def shared_reward(waits, norms):
    """Per-(bottleneck, slot) reward from nested lists of waits and per-bottleneck norms."""
    nI = len(waits)
    shared = sum((sum(w) / len(w)) / nm for w, nm in zip(waits, norms)) / nI
    return [[-(x / nm + shared) for x in w] for w, nm in zip(waits, norms)]


def generalized_cost(dep, arr, toll, alpha, beta, gamma, t_star):
    sched = beta * (t_star - arr) if arr < t_star else gamma * (arr - t_star)
    return toll + alpha * (arr - dep) + sched


def central_difference(f, x, h=1e-5):
    """Gradient of scalar ``f`` at list ``x`` by central differences."""
    g = []
    for k in range(len(x)):
        xp = list(x)
        xm = list(x)
        xp[k] += h
        xm[k] -= h
        g.append((f(xp) - f(xm)) / (2 * h))
    return g


def rel_err(a, b):
    return abs(a - b) / max(1e-8, abs(a), abs(b))


def spearman(x, y):
    """Spearman rank correlation without ties handling beyond average ranks."""
    def ranks(v):
        order = sorted(range(len(v)), key=lambda i: v[i])
        r = [0.0] * len(v)
        i = 0
        while i < len(order):
            j = i
            while j + 1 < len(order) and v[order[j + 1]] == v[order[i]]:
                j += 1
            for k in range(i, j + 1):
                r[order[k]] = (i + j) / 2 + 1
            i = j + 1
        return r
    rx, ry = ranks(x), ranks(y)
    mx, my = sum(rx) / len(rx), sum(ry) / len(ry)
    cov = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    vx = math.sqrt(sum((a - mx) ** 2 for a in rx))
    vy = math.sqrt(sum((b - my) ** 2 for b in ry))
    return cov / (vx * vy) if vx and vy else 0.0
