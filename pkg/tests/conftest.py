import os
import sys

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

import oracles  # noqa: E402
from tollrl.network import BehaviorParams, Bottleneck, Network, ODPair, Route  # noqa: E402
from tollrl.neural import AgentNet  # noqa: E402


def make_net(bottlenecks, routes, ods, **params):
    return Network(tuple(bottlenecks), tuple(routes), tuple(ods), BehaviorParams(**params))


def random_network(rng, max_bn=4, max_T=20, single_hop=False):
    """A random small network: up to ``max_bn`` bottlenecks, 1-3 ODs, 1-3 routes each."""
    n_bn = int(rng.integers(1, max_bn + 1))
    T = int(rng.integers(5, max_T + 1))
    bns = [Bottleneck(i + 1, float(rng.uniform(0.3, 3.0)), bool(rng.random() < 0.7))
           for i in range(n_bn)]
    routes, ods = [], []
    for o in range(int(rng.integers(1, 4))):
        ids = []
        for _ in range(int(rng.integers(1, 4))):
            hops = 1 if single_hop else int(rng.integers(0, min(3, n_bn) + 1))
            path = tuple(int(x) + 1 for x in rng.choice(n_bn, size=hops, replace=False))
            seg = tuple(int(x) for x in rng.integers(0, 3, size=hops + 1))
            routes.append(Route(len(routes) + 1, o + 1, path, seg))
            ids.append(len(routes))
        ods.append(ODPair(o + 1, float(rng.uniform(0, 30)), tuple(ids)))
    return make_net(bns, routes, ods, horizon=T, t_star=max(1, T // 2))


def _hops(net):
    ptr, rows, _ = net.route_layout
    for z in range(net.n_routes):
        for pos in range(ptr[z], ptr[z + 1]):
            yield z, pos, rows[pos]


def check_physics(net, rec):
    T = net.horizon
    # vehicles entering each bottleneck equal the departures routed through it
    expected = np.zeros(net.n_bottlenecks)
    for z, _, b in _hops(net):
        expected[b] += rec.departures[z].sum()
    tot = rec.inflow.sum(axis=1)
    assert np.allclose(tot, expected, rtol=1e-6, atol=1e-9)
    # every departing vehicle arrives (clamped ones included)
    assert np.all(rec.arrival >= np.arange(1, T + 1) - 1e-12)
    # FIFO at every bottleneck: exit order follows entry order
    per_b = {}
    for z, pos, b in _hops(net):
        for t in range(T):
            if rec.departures[z, t] > 0:
                per_b.setdefault(b, []).append((rec.entry[pos, t], rec.exit[pos, t]))
    for pairs in per_b.values():
        pairs.sort()
        exits = [e for _, e in pairs]
        for e0, e1 in zip(exits, exits[1:]):
            assert e1 >= e0 - 1e-6 * max(1.0, abs(e0))
    assert np.all(rec.queue_len >= 0)
    assert np.array_equal(rec.wait, rec.queue_len / net.capacities[:, None])


def random_net(rng, head=None):
    depth = int(rng.integers(1, 4))
    sizes = [int(x) for x in rng.integers(1, 6, size=depth + 1)]
    act = str(rng.choice(["relu", "tanh"]))
    head = head or str(rng.choice(["linear", "tanh"]))
    return AgentNet(sizes, act, head, float(rng.uniform(0.5, 2.0)), rng=rng, final_init=0.5)


def gradient_error(net, x, g):
    _, cache = net.forward(x, return_cache=True)
    grads, dx = net.backward(cache, g)
    worst = 0.0
    theta0 = net.flat.copy()

    def f_params(p):
        net.flat[:] = p
        return float(np.sum(g * net(x)))

    num = oracles.central_difference(f_params, theta0.tolist(), h=1e-6)
    net.flat[:] = theta0
    for a, b in zip(grads.flat, num):
        if abs(a) > 1e-7 or abs(b) > 1e-7:
            worst = max(worst, oracles.rel_err(a, b))
    num_x = oracles.central_difference(lambda v: float(np.sum(g * net(np.array(v)))),
                                       x.tolist(), h=1e-6)
    for a, b in zip(dx, num_x):
        if abs(a) > 1e-7 or abs(b) > 1e-7:
            worst = max(worst, oracles.rel_err(a, b))
    return worst


def max_gradient_error(rng, n_nets):
    """Worst relative error of analytic vs central-difference gradients over random nets."""
    worst = 0.0
    for _ in range(n_nets):
        net = random_net(rng)
        # keep relu pre-activations off their kink for a clean difference quotient
        while True:
            x = rng.normal(size=net.layer_sizes[0])
            _, (zs, _, _) = net.forward(x, return_cache=True)
            if all(np.abs(z).min() > 1e-3 for z in zs[:-1]):
                break
        g = rng.normal(size=net.layer_sizes[-1])
        worst = max(worst, gradient_error(net, x, g))
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance report ----------------------------------------------------------

_ACCEPTANCE: dict = {}


@pytest.fixture
def report():
    """``report(k, ok, detail)`` records one acceptance line and prints it."""
    def _report(k, ok, detail):
        line = f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE[k] = line
        print(line)
        return ok
    return _report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[k])
