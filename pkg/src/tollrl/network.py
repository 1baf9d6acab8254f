"""Static scenario description: bottlenecks, routes, OD pairs and traveler behavior."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class Bottleneck:
    id: int
    capacity_mu: float
    tolled: bool = False


@dataclass(frozen=True)
class Route:
    """A path from origin to destination through an ordered list of bottlenecks.

    ``segment_free_times[k]`` is the free-flow time (in slots) of the segment
    ending at bottleneck ``k``; the last entry reaches the destination.
    """

    id: int
    od_pair: int
    bottlenecks: tuple[int, ...]
    segment_free_times: tuple[int, ...]

    @property
    def free_time(self) -> int:
        return int(sum(self.segment_free_times))


@dataclass(frozen=True)
class ODPair:
    id: int
    demand: float
    routes: tuple[int, ...]


@dataclass(frozen=True)
class BehaviorParams:
    alpha: float = 1.0
    beta: float = 0.45
    gamma: float = 1.2
    theta: float = 0.05
    lambda_mem: float = 0.0
    t_mem: int = 1
    delta_br: float = 0.5
    t_star: int = 30
    horizon: int = 80
    # "inertial": logit re-choice with a delta_br bonus on the current choice;
    # "threshold": stay within delta_br of the best, otherwise re-draw by logit
    br_rule: str = "inertial"


@dataclass(frozen=True)
class Network:
    bottlenecks: tuple[Bottleneck, ...]
    routes: tuple[Route, ...]
    od_pairs: tuple[ODPair, ...]
    params: BehaviorParams = field(default_factory=BehaviorParams)
    name: str = ""

    # Dense index views used by the simulator. Ids are arbitrary integers
    # (link numbers for TNTP-derived networks); positions are array rows.

    @cached_property
    def bottleneck_index(self) -> dict[int, int]:
        return {b.id: k for k, b in enumerate(self.bottlenecks)}

    @cached_property
    def route_index(self) -> dict[int, int]:
        return {r.id: k for k, r in enumerate(self.routes)}

    @cached_property
    def capacities(self) -> np.ndarray:
        return np.array([b.capacity_mu for b in self.bottlenecks], dtype=np.float64)

    @cached_property
    def tolled(self) -> np.ndarray:
        """Row indices of the tolled bottlenecks (the set I), in declaration order."""
        return np.array([k for k, b in enumerate(self.bottlenecks) if b.tolled], dtype=np.int64)

    @cached_property
    def route_layout(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """CSR layout ``(ptr, bottleneck_rows, segment_times)``.

        Route ``z`` visits ``bottleneck_rows[ptr[z]:ptr[z+1]]``; its segment
        times live at ``segment_times[ptr[z] + z : ptr[z+1] + z + 1]``.
        """
        ptr = np.zeros(len(self.routes) + 1, dtype=np.int64)
        rows: list[int] = []
        seg: list[int] = []
        for z, r in enumerate(self.routes):
            rows.extend(self.bottleneck_index[b] for b in r.bottlenecks)
            seg.extend(int(s) for s in r.segment_free_times)
            ptr[z + 1] = len(rows)
        return ptr, np.array(rows, dtype=np.int64), np.array(seg, dtype=np.int64)

    @cached_property
    def od_routes(self) -> list[np.ndarray]:
        """Route row indices per OD pair, in OD declaration order."""
        return [np.array([self.route_index[r] for r in od.routes], dtype=np.int64)
                for od in self.od_pairs]

    @property
    def n_routes(self) -> int:
        return len(self.routes)

    @property
    def n_bottlenecks(self) -> int:
        return len(self.bottlenecks)

    @property
    def horizon(self) -> int:
        return self.params.horizon

    @property
    def total_demand(self) -> float:
        return float(sum(od.demand for od in self.od_pairs))

    def with_params(self, **changes) -> "Network":
        from dataclasses import replace
        return replace(self, params=replace(self.params, **changes))

    def with_demand_scale(self, factor: float) -> "Network":
        from dataclasses import replace
        ods = tuple(replace(od, demand=od.demand * factor) for od in self.od_pairs)
        return replace(self, od_pairs=ods)


def validate_network(net: Network) -> list[str]:
    """Return a list of human-readable invariant violations (empty if valid)."""
    problems: list[str] = []
    seen: set[int] = set()
    for b in net.bottlenecks:
        if b.id in seen:
            problems.append(f"duplicate bottleneck id {b.id}")
        seen.add(b.id)
        if not b.capacity_mu > 0:
            problems.append(f"bottleneck {b.id}: capacity_mu must be > 0, got {b.capacity_mu}")

    od_ids = {od.id for od in net.od_pairs}
    route_ids = {r.id for r in net.routes}
    if len(route_ids) != len(net.routes):
        problems.append("duplicate route ids")
    for r in net.routes:
        for b in r.bottlenecks:
            if b not in seen:
                problems.append(f"route {r.id}: unknown bottleneck id {b}")
        if len(r.segment_free_times) != len(r.bottlenecks) + 1:
            problems.append(f"route {r.id}: expected {len(r.bottlenecks) + 1} segment times, "
                            f"got {len(r.segment_free_times)}")
        if any((int(s) != s) or s < 0 for s in r.segment_free_times):
            problems.append(f"route {r.id}: segment free times must be non-negative integers")
        if r.od_pair not in od_ids:
            problems.append(f"route {r.id}: unknown OD pair {r.od_pair}")

    for od in net.od_pairs:
        if od.demand < 0:
            problems.append(f"OD {od.id}: negative demand {od.demand}")
        if not od.routes:
            problems.append(f"OD {od.id}: no routes")
        for z in od.routes:
            if z not in route_ids:
                problems.append(f"OD {od.id}: unknown route id {z}")

    p = net.params
    if not p.alpha > 0:
        problems.append("alpha must be > 0")
    if not p.beta >= 0:
        problems.append("beta must be >= 0")
    elif p.beta >= p.alpha:
        warnings.warn("beta >= alpha: the bottleneck model has no stable equilibrium", stacklevel=2)
    if not p.gamma > 0:
        problems.append("gamma must be > 0")
    if not p.theta > 0:
        problems.append("theta must be > 0")
    if not 0 <= p.lambda_mem < 1:
        problems.append("lambda_mem must lie in [0, 1)")
    if p.t_mem < 1:
        problems.append("t_mem must be >= 1")
    if p.br_rule not in ("inertial", "threshold"):
        problems.append(f"unknown br_rule {p.br_rule!r}")
    if not 1 <= p.t_star <= p.horizon:
        problems.append("t_star must lie in [1, horizon]")
    return problems
