"""Scenario files and the built-in scenarios.

A scenario file is JSON::

    {"format": "tollrl.scenario/1", "name": "...",
     "params": {BehaviorParams fields},
     "bottlenecks": [{"id": 1, "capacity_mu": 1.0, "tolled": true}, ...],
     "routes": [{"id": 1, "od_pair": 1, "bottlenecks": [1],
                 "segment_free_times": [2, 2]}, ...],
     "od_pairs": [{"id": 1, "demand": 150.0, "routes": [1, 2, 3]}, ...]}

Capacities are vehicles per slot, free-flow times are whole slots.
"""

from __future__ import annotations

import itertools
import json
import warnings
from dataclasses import asdict, dataclass, field, fields
from importlib import resources

import networkx as nx

from ..day_to_day import compute_baseline, init_state, run_to_convergence
from ..network import BehaviorParams, Bottleneck, Network, ODPair, Route, validate_network
from .tntp import TntpNetwork, load_tntp, load_trips

SCENARIO_FORMAT = "tollrl.scenario/1"
CALIBRATION_FORMAT = "tollrl.sioux-calibration/1"


class CalibrationWarning(UserWarning):
    pass


def _data_path(name):
    return resources.files("tollrl").joinpath("data", name)


# -- scenario files -----------------------------------------------------------------


def network_to_dict(net: Network) -> dict:
    return {
        "format": SCENARIO_FORMAT,
        "name": net.name,
        "params": asdict(net.params),
        "bottlenecks": [asdict(b) for b in net.bottlenecks],
        "routes": [{"id": r.id, "od_pair": r.od_pair, "bottlenecks": list(r.bottlenecks),
                    "segment_free_times": list(r.segment_free_times)} for r in net.routes],
        "od_pairs": [{"id": o.id, "demand": o.demand, "routes": list(o.routes)}
                     for o in net.od_pairs],
    }


def network_from_dict(doc: dict) -> Network:
    if doc.get("format") != SCENARIO_FORMAT:
        raise ValueError(f"unsupported scenario format {doc.get('format')!r}")
    known = {f.name for f in fields(BehaviorParams)}
    unknown = set(doc.get("params", {})) - known
    if unknown:
        raise ValueError(f"unknown behavior parameters {sorted(unknown)}")
    try:
        net = Network(
            bottlenecks=tuple(Bottleneck(int(b["id"]), float(b["capacity_mu"]),
                                         bool(b.get("tolled", False))) for b in doc["bottlenecks"]),
            routes=tuple(Route(int(r["id"]), int(r["od_pair"]), tuple(int(x) for x in r["bottlenecks"]),
                               tuple(int(x) for x in r["segment_free_times"]))
                         for r in doc["routes"]),
            od_pairs=tuple(ODPair(int(o["id"]), float(o["demand"]), tuple(int(x) for x in o["routes"]))
                           for o in doc["od_pairs"]),
            params=BehaviorParams(**doc.get("params", {})),
            name=doc.get("name", ""),
        )
    except KeyError as exc:
        raise ValueError(f"scenario is missing field {exc}") from None
    problems = validate_network(net)
    if problems:
        raise ValueError("invalid scenario: " + "; ".join(problems))
    return net


def load_scenario(path) -> Network:
    with open(path, encoding="utf-8") as fh:
        return network_from_dict(json.load(fh))


def save_scenario(net: Network, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(network_to_dict(net), fh, indent=1)
        fh.write("\n")


def build_scenario_parallel() -> Network:
    """One OD pair over three single-bottleneck routes, every bottleneck tolled."""
    with _data_path("parallel.json").open(encoding="utf-8") as fh:
        return network_from_dict(json.load(fh))


def build_scenario_single() -> Network:
    """One OD pair, one route, one tolled bottleneck."""
    with _data_path("single.json").open(encoding="utf-8") as fh:
        return network_from_dict(json.load(fh))


# -- Sioux Falls --------------------------------------------------------------------


@dataclass
class SiouxCalibration:
    demand_scale: float
    capacity_scale: float
    tolled_links: list
    target_congested: list
    bottleneck_links: list
    capacity_factors: dict = field(default_factory=dict)
    k_routes: int = 3
    time_per_slot: float = 1.0
    params: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, doc: dict) -> "SiouxCalibration":
        if doc.get("format") != CALIBRATION_FORMAT:
            raise ValueError(f"unsupported calibration format {doc.get('format')!r}")
        body = {k: v for k, v in doc.items() if k not in ("format", "notes")}
        body["capacity_factors"] = {int(k): float(v)
                                    for k, v in body.get("capacity_factors", {}).items()}
        return cls(**body)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["capacity_factors"] = {str(k): v for k, v in self.capacity_factors.items()}
        return {"format": CALIBRATION_FORMAT, **d}

    def scaled(self, demand_factor: float) -> "SiouxCalibration":
        d = self.to_dict()
        d["demand_scale"] = self.demand_scale * demand_factor
        return SiouxCalibration.from_dict(d)


def load_calibration(path=None) -> SiouxCalibration:
    if path is None:
        with _data_path("sioux_calibration.json").open(encoding="utf-8") as fh:
            return SiouxCalibration.from_dict(json.load(fh))
    with open(path, encoding="utf-8") as fh:
        return SiouxCalibration.from_dict(json.load(fh))


def enumerate_routes(tntp: TntpNetwork, origin: int, dest: int, k: int) -> list[list[int]]:
    """The ``k`` shortest loop-free paths by free-flow time, as 1-based link numbers."""
    g = nx.DiGraph()
    for n, link in enumerate(tntp.links, 1):
        g.add_edge(link.init_node, link.term_node, weight=link.free_flow_time, link=n)
    paths = itertools.islice(nx.shortest_simple_paths(g, origin, dest, weight="weight"), k)
    return [[g[a][b]["link"] for a, b in zip(p[:-1], p[1:])] for p in paths]


def build_scenario_sioux(tntp: TntpNetwork | None = None, trips: dict | None = None,
                         calib: SiouxCalibration | None = None, check: bool = True) -> Network:
    """Sioux Falls with point queues on the calibrated links.

    Each link's free-flow time is rounded to whole slots
    (``round(fft / time_per_slot)``) and summed along the segment between
    consecutive queues. Capacities become ``capacity * capacity_scale *
    factor`` vehicles per slot. With ``check`` the zero-toll equilibrium is
    computed and a :class:`CalibrationWarning` is issued when its congested
    links differ from ``calib.target_congested``.
    """
    tntp = tntp or load_tntp(_data_path("SiouxFalls_net.tntp"))
    trips = trips if trips is not None else load_trips(_data_path("SiouxFalls_trips.tntp"))
    calib = calib or load_calibration()
    queued = set(calib.bottleneck_links)
    tolled = set(calib.tolled_links)
    if not tolled <= queued:
        raise ValueError("every tolled link must carry a bottleneck")
    for n in queued:
        if not 1 <= n <= tntp.n_links:
            raise ValueError(f"bottleneck link {n} not in network")
    bottlenecks = tuple(
        Bottleneck(n, link.capacity * calib.capacity_scale * calib.capacity_factors.get(n, 1.0),
                   n in tolled)
        for n, link in enumerate(tntp.links, 1) if n in queued)

    def slots(n):
        return int(round(tntp.link(n).free_flow_time / calib.time_per_slot))

    routes, ods = [], []
    for (o, d), flow in sorted(trips.items()):
        if o == d or flow <= 0:
            continue
        od_id = len(ods) + 1
        ids = []
        for path in enumerate_routes(tntp, o, d, calib.k_routes):
            rows, seg, acc = [], [], 0
            for n in path:
                acc += slots(n)
                if n in queued:
                    rows.append(n)
                    seg.append(acc)
                    acc = 0
            seg.append(acc)
            routes.append(Route(len(routes) + 1, od_id, tuple(rows), tuple(seg)))
            ids.append(len(routes))
        ods.append(ODPair(od_id, flow * calib.demand_scale, tuple(ids)))
    net = Network(bottlenecks, tuple(routes), tuple(ods), BehaviorParams(**calib.params),
                  name="sioux_falls")
    problems = validate_network(net)
    if problems:
        raise ValueError("invalid Sioux Falls scenario: " + "; ".join(problems))
    if check:
        check_calibration(net, calib)
    return net


def check_calibration(net: Network, calib: SiouxCalibration, max_days: int = 500) -> list[int]:
    """Congested links of the zero-toll equilibrium; warns on a target mismatch."""
    res = run_to_convergence(init_state(net), net, max_days=max_days)
    congested = compute_baseline(net, res.state).congested_ids(net)
    target = sorted(calib.target_congested)
    if not res.converged:
        warnings.warn("zero-toll dynamics did not converge during calibration check",
                      CalibrationWarning, stacklevel=2)
    if congested != target:
        warnings.warn(f"congested links {congested} differ from calibration target {target}",
                      CalibrationWarning, stacklevel=2)
    return congested


SCENARIOS = {
    "parallel": build_scenario_parallel,
    "single": build_scenario_single,
    "sioux": build_scenario_sioux,
}


def get_scenario(ref: str) -> Network:
    """A built-in scenario by name, or a scenario file by path."""
    if ref in SCENARIOS:
        return SCENARIOS[ref]()
    return load_scenario(ref)
