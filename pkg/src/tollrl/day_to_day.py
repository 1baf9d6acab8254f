"""Day-to-day evolution of departure-time and route choice.

Each day the realized costs feed an exponentially weighted memory; the
perceived costs drive a multinomial logit over (route, departure slot)
alternatives, and bounded rationality keeps travelers whose current choice
is within ``delta_br`` of the best alternative.
"""

from __future__ import annotations

import io
import json
import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .network import BehaviorParams, Network
from .within_day import DayRecord, simulate_day

log = logging.getLogger(__name__)

ZERO_WAIT_TOL = 1e-9
CONVERGENCE_STREAK = 5


class NotInitialized(RuntimeError):
    pass


class DegenerateChoice(ValueError):
    pass


@dataclass
class CostMemory:
    """Last ``t_mem`` days of realized cost arrays, newest last."""

    t_mem: int
    history: deque = field(default_factory=deque)

    def push(self, cost: np.ndarray) -> None:
        self.history.append(np.array(cost, dtype=np.float64, copy=True))
        while len(self.history) > self.t_mem:
            self.history.popleft()

    def copy(self) -> "CostMemory":
        return CostMemory(self.t_mem, deque(c.copy() for c in self.history))


def perceived_costs(memory: CostMemory, params: BehaviorParams) -> np.ndarray:
    """Exponentially weighted average of remembered costs.

    Before the memory is full, the weights and their normalizer cover the
    days actually remembered. ``lambda_mem == 0`` returns yesterday's cost.
    """
    if not memory.history:
        raise NotInitialized("cost memory is empty")
    lam = params.lambda_mem
    if lam == 0.0:
        return memory.history[-1].copy()
    days = list(reversed(memory.history))[: params.t_mem]
    weights = lam ** np.arange(len(days))
    acc = np.zeros_like(days[0])
    for w, c in zip(weights, days):
        acc += w * c
    return acc / weights.sum()


def logit_shares(perceived: np.ndarray, theta: float, od_routes: np.ndarray) -> np.ndarray:
    """Choice probabilities over all (route, slot) alternatives of one OD pair.

    ``perceived`` is the full ``[route, slot]`` array; the result has shape
    ``[len(od_routes), slot]`` and sums to one.
    """
    c = perceived[od_routes]
    x = -theta * c
    if not np.isfinite(x).any() or np.isnan(x).any():
        raise DegenerateChoice("no alternative has a finite perceived cost")
    x = x - x[np.isfinite(x)].max()
    e = np.exp(x)
    return e / e.sum()


def apply_bounded_rationality(prev: np.ndarray, perceived: np.ndarray, shares: np.ndarray,
                              delta_br: float) -> np.ndarray:
    """Keep cohorts within ``delta_br`` of the best alternative; re-choose the rest.

    All arrays are over one OD pair's alternatives. Movers are spread over
    every alternative (their own included) in proportion to ``shares``.
    """
    gap = perceived - perceived.min()
    stay = gap <= delta_br
    kept = np.where(stay, prev, 0.0)
    moving = prev.sum() - kept.sum()
    return kept + moving * shares


def apply_inertial_choice(prev: np.ndarray, perceived: np.ndarray, theta: float,
                          delta_br: float) -> np.ndarray:
    """Logit re-choice in which each traveler's current alternative gets a ``delta_br`` bonus.

    A traveler on ``a'`` keeps it with probability
    ``e(a') / (e(a') + r * (E - e(a')))`` and switches to ``a`` with
    probability ``r * e(a) / (same)``, where ``e = exp(-theta * c)``,
    ``E = sum(e)`` and ``r = exp(-theta * delta_br)``. ``delta_br = 0`` is
    pure logit; ``delta_br -> inf`` freezes every traveler.
    """
    x = -theta * perceived
    if not np.isfinite(x).any() or np.isnan(x).any():
        raise DegenerateChoice("no alternative has a finite perceived cost")
    x = x - x[np.isfinite(x)].max()
    e = np.exp(x)
    total = e.sum()
    r = np.exp(-theta * delta_br)
    denom = r * (total - e) + e
    ok = denom > 0
    inv = np.divide(1.0, denom, out=np.zeros_like(denom), where=ok)
    stay = np.where(ok, e * inv, 1.0)
    leave_scaled = prev * inv
    return prev * stay + r * e * (leave_scaled.sum() - leave_scaled)


@dataclass
class EvolutionState:
    departures: np.ndarray
    memory: CostMemory
    day: int = 0
    last_record: DayRecord | None = None
    wait_history: list = field(default_factory=list)

    def copy(self) -> "EvolutionState":
        return EvolutionState(self.departures.copy(), self.memory.copy(), self.day,
                              self.last_record, list(self.wait_history))


def _choose(net: Network, perceived: np.ndarray, prev: np.ndarray | None) -> np.ndarray:
    p = net.params
    out = np.zeros_like(perceived)
    for od, rows in zip(net.od_pairs, net.od_routes):
        if od.demand == 0:
            continue
        shares = logit_shares(perceived, p.theta, rows)
        if prev is None:
            out[rows] = od.demand * shares
        elif p.br_rule == "threshold":
            out[rows] = apply_bounded_rationality(prev[rows], perceived[rows], shares, p.delta_br)
        else:
            out[rows] = apply_inertial_choice(prev[rows], perceived[rows], p.theta, p.delta_br)
    return out


def init_state(net: Network) -> EvolutionState:
    """Day-0 state: costs of an empty network, departures by pure logit on them."""
    T = net.horizon
    empty = simulate_day(net, np.zeros((net.n_routes, T)))
    memory = CostMemory(net.params.t_mem)
    memory.push(empty.cost)
    departures = _choose(net, perceived_costs(memory, net.params), None)
    return EvolutionState(departures, memory)


def evolve_one_day(state: EvolutionState, net: Network,
                   tolls: np.ndarray | None = None) -> tuple[np.ndarray, DayRecord]:
    """Simulate today with the current departures, then choose tomorrow's.

    Mutates ``state`` and returns ``(next departures, today's record)``.
    """
    if not state.memory.history:
        raise NotInitialized("state has no cost memory; use init_state()")
    record = simulate_day(net, state.departures, tolls)
    state.memory.push(record.cost)
    perceived = perceived_costs(state.memory, net.params)
    state.departures = _choose(net, perceived, state.departures)
    state.day += 1
    state.last_record = record
    state.wait_history.append(record.total_wait)
    return state.departures, record


@dataclass
class ConvergenceResult:
    converged: bool
    days_used: int
    state: EvolutionState


def run_to_convergence(state: EvolutionState, net: Network, tolls: np.ndarray | None = None,
                       eps: float = 1e-3, max_days: int = 2000, on_day=None) -> ConvergenceResult:
    """Iterate until total waiting time settles.

    Converged means the relative day-over-day change of total waiting time
    stayed below ``eps`` for five consecutive days, or departures reached an
    exact fixed point. ``on_day(day, record)`` is called after every day.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    streak = 0
    prev_wait = None
    for day in range(1, max_days + 1):
        before = state.departures.copy()
        after, record = evolve_one_day(state, net, tolls)
        if on_day is not None:
            on_day(day, record)
        w = record.total_wait
        if np.array_equal(before, after):
            return ConvergenceResult(True, day, state)
        if prev_wait is not None:
            denom = max(abs(prev_wait), 1e-12)
            rel = abs(w - prev_wait) / denom if (w or prev_wait) else 0.0
            streak = streak + 1 if rel < eps else 0
            if streak >= CONVERGENCE_STREAK:
                return ConvergenceResult(True, day, state)
        prev_wait = w
    log.warning("day-to-day dynamics did not converge in %d days", max_days)
    return ConvergenceResult(False, max_days, state)


@dataclass
class BaselineStats:
    w0_sum: np.ndarray
    nz_count: np.ndarray
    norm: np.ndarray
    usable: np.ndarray
    total_wait: float = 0.0
    total_travel_time: float = 0.0

    def congested_ids(self, net: Network) -> list[int]:
        return [b.id for b, u in zip(net.bottlenecks, self.usable) if u]


def baseline_from_waits(wait: np.ndarray) -> BaselineStats:
    wait = np.asarray(wait, dtype=np.float64)
    w0_sum = wait.sum(axis=1)
    nz = (wait > ZERO_WAIT_TOL).sum(axis=1)
    usable = nz > 0
    norm = np.where(usable, w0_sum / np.maximum(nz, 1), np.nan)
    return BaselineStats(w0_sum, nz, norm, usable, float(w0_sum.sum()))


def compute_baseline(net: Network, state: EvolutionState) -> BaselineStats:
    """Normalizers from the zero-toll converged state's most recent day."""
    if state.last_record is None:
        raise NotInitialized("state has not simulated any day yet")
    rec = state.last_record
    stats = baseline_from_waits(rec.wait)
    stats.total_travel_time = rec.total_travel_time
    return stats


# -- checkpoints -------------------------------------------------------------

STATE_FORMAT = "tollrl.state/1"


def save_state(state: EvolutionState, path) -> None:
    """Write departures, memory and day index to a versioned ``.npz``."""
    arrays = {"departures": state.departures, "wait_history": np.asarray(state.wait_history)}
    for k, c in enumerate(state.memory.history):
        arrays[f"memory_{k}"] = c
    meta = {"format": STATE_FORMAT, "day": state.day, "t_mem": state.memory.t_mem,
            "n_memory": len(state.memory.history)}
    buf = io.BytesIO()
    np.savez(buf, meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_state(path) -> EvolutionState:
    """Inverse of :func:`save_state`; ``last_record`` is not persisted."""
    with np.load(path) as z:
        meta = json.loads(z["meta"].tobytes().decode())
        if meta.get("format") != STATE_FORMAT:
            raise ValueError(f"unsupported state format {meta.get('format')!r}")
        memory = CostMemory(meta["t_mem"])
        for k in range(meta["n_memory"]):
            memory.history.append(z[f"memory_{k}"].copy())
        state = EvolutionState(z["departures"].copy(), memory, meta["day"],
                               wait_history=z["wait_history"].tolist())
    return state


def od_totals(net: Network, departures: np.ndarray) -> np.ndarray:
    return np.array([departures[rows].sum() for rows in net.od_routes])


__all__ = [
    "BaselineStats", "CostMemory", "ConvergenceResult", "DegenerateChoice", "EvolutionState",
    "NotInitialized", "apply_bounded_rationality", "apply_inertial_choice", "baseline_from_waits",
    "compute_baseline", "evolve_one_day", "init_state", "load_state", "logit_shares",
    "od_totals", "perceived_costs", "run_to_convergence", "save_state",
]
