"""One day of traffic: cohorts through point-queue bottlenecks, then generalized costs.

Slots are numbered ``1..T`` in the model; arrays are 0-based, so array
column ``k`` is slot ``k + 1``. Arrival times are reported in slot units
(1-based, real valued).
"""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from . import _kernel_py
from .network import Network

log = logging.getLogger(__name__)

if os.environ.get("TOLLRL_PURE_PYTHON"):
    _kernel = _kernel_py
else:
    try:
        from . import _kernel  # type: ignore[attr-defined]
    except ImportError:  # extension not built
        _kernel = _kernel_py

BACKEND = "compiled" if _kernel is not _kernel_py else "python"


class InvalidCapacity(ValueError):
    pass


def step_queue(n_now: float, inflow: float, mu: float) -> float:
    """One unit-slot step of the point queue: ``max(0, N + a - mu)``."""
    return _kernel.step_queue(float(n_now), float(inflow), float(mu))


def waiting_time(n: float, mu: float) -> float:
    if mu <= 0:
        raise InvalidCapacity(f"capacity must be positive, got {mu}")
    return n / mu


@dataclass
class DayRecord:
    inflow: np.ndarray          # [bottleneck, slot]
    queue_len: np.ndarray       # [bottleneck, slot], start of slot
    wait: np.ndarray            # [bottleneck, slot]
    toll: np.ndarray            # [bottleneck, slot], indexed by exit slot
    departures: np.ndarray      # [route, departure slot]
    cost: np.ndarray            # [route, departure slot]
    arrival: np.ndarray         # [route, departure slot], 1-based slot time
    toll_paid: np.ndarray       # [route, departure slot]
    overflow: np.ndarray        # [route, departure slot] bool
    entry: np.ndarray = field(repr=False)   # [route hop, departure slot], 1-based
    exit: np.ndarray = field(repr=False)    # [route hop, departure slot], 1-based

    @property
    def total_wait(self) -> float:
        """Sum of the slot-sampled waiting time over all bottlenecks and slots."""
        return float(self.wait.sum())

    @property
    def total_travel_time(self) -> float:
        """Vehicle-slots spent between origin and destination."""
        T = self.departures.shape[1]
        dep_time = np.arange(1, T + 1, dtype=np.float64)
        return float((self.departures * (self.arrival - dep_time)).sum())

    @property
    def overflowed(self) -> bool:
        return bool(self.overflow.any())


def simulate_day(net: Network, departures: np.ndarray, toll: np.ndarray | None = None,
                 *, backend=None) -> DayRecord:
    """Propagate the day's departures and evaluate the generalized cost.

    ``departures[z, k]`` is the cohort leaving on route ``z`` at slot ``k+1``;
    ``toll[i, k]`` is charged to vehicles leaving bottleneck ``i`` during slot
    ``k+1``. Costs are stored at the cohort's departure slot.
    """
    T = net.horizon
    departures = np.asarray(departures, dtype=np.float64)
    if toll is None:
        toll = np.zeros((net.n_bottlenecks, T))
    toll = np.asarray(toll, dtype=np.float64)
    if departures.shape != (net.n_routes, T):
        raise ValueError(f"departures shape {departures.shape} != {(net.n_routes, T)}")
    if toll.shape != (net.n_bottlenecks, T):
        raise ValueError(f"toll shape {toll.shape} != {(net.n_bottlenecks, T)}")
    if (departures < 0).any():
        raise ValueError("departures must be non-negative")

    kernel = backend or _kernel
    ptr, rows, seg = net.route_layout
    mu = net.capacities
    inflow, queue, paid, arrival0, overflow, entry, exit_ = kernel.propagate(
        departures, toll, mu, ptr, rows, seg, T)

    arrival = arrival0 + 1.0
    p = net.params
    dep_time = np.arange(1, T + 1, dtype=np.float64)
    schedule = np.where(arrival < p.t_star, p.beta * (p.t_star - arrival),
                        p.gamma * (arrival - p.t_star))
    cost = paid + p.alpha * (arrival - dep_time) + schedule

    if overflow.any():
        log.debug("%d cohorts clamped at the horizon", int(overflow.sum()))

    return DayRecord(
        inflow=inflow,
        queue_len=queue,
        wait=queue / mu[:, None],
        toll=toll.copy(),
        departures=departures.copy(),
        cost=cost,
        arrival=arrival,
        toll_paid=paid,
        overflow=overflow.astype(bool),
        entry=entry + 1.0,
        exit=exit_ + 1.0,
    )


DAY_CSV_COLUMNS = ("day", "bottleneck", "slot", "inflow", "queue", "wait", "toll")


def write_day_csv(path, records, net: Network, first_day: int = 0, append: bool = False) -> None:
    """Columnar per-(day, bottleneck, slot) dump used for plotting."""
    new = not append or not os.path.exists(path)
    with open(path, "a" if append else "w", newline="") as fh:
        w = csv.writer(fh)
        if new:
            w.writerow(DAY_CSV_COLUMNS)
        for d, rec in enumerate(records, start=first_day):
            for i, b in enumerate(net.bottlenecks):
                for k in range(rec.wait.shape[1]):
                    w.writerow((d, b.id, k + 1, repr(float(rec.inflow[i, k])),
                                repr(float(rec.queue_len[i, k])), repr(float(rec.wait[i, k])),
                                repr(float(rec.toll[i, k]))))
