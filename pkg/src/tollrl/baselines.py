"""Comparison methods: centralized DDPG over piecewise-linear schedules, and
fully distributed DDPG with purely local rewards."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .controller import (ControlConfig, ControlScenario, DistributedMethod, build_states,
                         local_reward)
from .day_to_day import ZERO_WAIT_TOL, BaselineStats
from .ddpg import LearnerConfig
from .network import Network
from .within_day import DayRecord

DEFAULT_K = 8


class PiecewiseToll:
    """Toll schedule by linear interpolation between ``K`` slot breakpoints.

    Breakpoints are 1-based slot positions; outside the first/last breakpoint
    the end values are held constant.
    """

    def __init__(self, breakpoints, values, floor: float = 0.0):
        bp = np.asarray(breakpoints, dtype=np.float64)
        vals = np.asarray(values, dtype=np.float64)
        if bp.ndim != 1 or bp.shape != vals.shape or len(bp) == 0:
            raise ValueError("breakpoints and values must be equal-length 1-D arrays")
        if np.any(np.diff(bp) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if bp[0] < 1:
            raise ValueError("breakpoints must be slot positions >= 1")
        if np.any(vals < floor):
            raise ValueError("values below the toll floor")
        self.breakpoints = bp
        self.values = vals
        self.floor = floor

    @classmethod
    def uniform(cls, horizon: int, k: int = DEFAULT_K, floor: float = 0.0) -> "PiecewiseToll":
        if k < 1 or k > horizon:
            raise ValueError("need 1 <= K <= horizon")
        bp = np.unique(np.round(np.linspace(1, horizon, k)))
        if len(bp) != k:
            raise ValueError("breakpoints collapse after rounding to slots")
        return cls(bp, np.full(k, float(floor)), floor)

    def __call__(self, slots) -> np.ndarray:
        return np.interp(np.asarray(slots, dtype=np.float64), self.breakpoints, self.values)

    def schedule(self, horizon: int) -> np.ndarray:
        """Tolls for slots ``1..horizon`` as a 0-based array."""
        return self(np.arange(1, horizon + 1))

    def adjust(self, delta) -> None:
        self.values = np.maximum(self.values + np.asarray(delta, dtype=np.float64), self.floor)


def congested_pairs(baseline: BaselineStats, wait0: np.ndarray, net: Network) -> np.ndarray:
    """Boolean ``[n_tolled, T]`` mask of zero-toll congested pairs."""
    return np.asarray(wait0)[net.tolled] > ZERO_WAIT_TOL


def fully_distributed_reward(day: DayRecord, baseline: BaselineStats, net: Network) -> np.ndarray:
    return local_reward(day, baseline, net)


def centralized_reward(day: DayRecord, baseline: BaselineStats, net: Network) -> float:
    rows = net.tolled
    return -float(np.sum(day.wait[rows].mean(axis=1) / baseline.norm[rows]))


def global_state(day: DayRecord, baseline: BaselineStats, tolls, net: Network,
                 mask: np.ndarray) -> np.ndarray:
    """Per-pair states of the masked pairs, flattened in (bottleneck, slot, component) order."""
    return build_states(day, baseline, tolls, net)[mask].ravel()


def centralized_step(learner, state: np.ndarray, schedules: list, cfg: ControlConfig,
                     explore: bool, net: Network) -> tuple[np.ndarray, np.ndarray]:
    """Act once on the global state and rebuild all tolls from the adjusted schedules.

    Returns ``(action vector, full toll matrix)``.
    """
    k = len(schedules[0].values)
    if state.shape != (learner.state_dim,):
        raise ValueError(f"state has shape {state.shape}, learner expects ({learner.state_dim},)")
    if learner.action_dim != k * len(schedules):
        raise ValueError("learner action size does not match schedules")
    action = learner.act(state, explore)
    if np.any(np.abs(action) > cfg.G):
        raise ValueError(f"action magnitude exceeds G={cfg.G}")
    tolls = np.zeros((net.n_bottlenecks, net.horizon))
    for i, (row, sched) in enumerate(zip(net.tolled, schedules)):
        sched.adjust(action[i * k:(i + 1) * k])
        tolls[row] = sched.schedule(net.horizon)
    return action, tolls


class CentralizedMethod:
    """One learner sees every congested pair and moves every schedule value at once."""

    name = "centralized"

    def __init__(self, scenario: ControlScenario, cfg: ControlConfig, lcfg: LearnerConfig,
                 seed, k: int = DEFAULT_K):
        self.scenario = scenario
        self.cfg = cfg
        self.k = k
        net = scenario.net
        self.mask = congested_pairs(scenario.baseline, scenario.snapshot.last_record.wait, net)
        self.learner = lcfg.build(3 * int(self.mask.sum()), k * len(net.tolled), cfg.G, seed)
        self.base_noise = self.learner.noise_std
        self.schedules = []

    def begin_cycle(self, record, tolls) -> None:
        net = self.scenario.net
        self.schedules = [PiecewiseToll.uniform(net.horizon, self.k, self.cfg.toll_floor)
                          for _ in net.tolled]

    def _state(self, record, tolls):
        sc = self.scenario
        return global_state(record, sc.baseline, tolls, sc.net, self.mask)

    def decide(self, record, tolls, explore):
        s = self._state(record, tolls)
        action, new_tolls = centralized_step(self.learner, s, self.schedules, self.cfg, explore,
                                             self.scenario.net)
        return new_tolls, (s, action)

    def observe(self, pending, record, tolls, done):
        s, action = pending
        sc = self.scenario
        r = centralized_reward(record, sc.baseline, sc.net)
        s2 = self._state(record, tolls)
        self.learner.replay.add_many(s[None], action[None], np.array([r]), s2[None],
                                     np.array([float(done)]))
        n = int(self.mask.sum()) if self.cfg.updates_per_day is None else self.cfg.updates_per_day
        losses = [info["critic_loss"] for info in (self.learner.train_step() for _ in range(n))
                  if info is not None]
        return (float(np.mean(losses)) if losses else float("nan")), int(self.mask.sum())

    def set_noise_scale(self, scale):
        self.learner.noise_std = self.base_noise * scale

    def all_finite(self):
        return self.learner.all_finite()

    def save(self, directory):
        self.learner.save(directory)

    def load(self, directory):
        self.learner.load(directory)
        self.base_noise = self.learner.noise_std


def build_centralized(scenario, cfg, lcfg, seed):
    return CentralizedMethod(scenario, replace(cfg, switching=False), lcfg, seed)


def build_fully_distributed(scenario, cfg, lcfg, seed):
    cfg = replace(cfg, reward="local", switching=False)
    return DistributedMethod.build(scenario, cfg, lcfg, seed, name="distributed")


def build_dp_ddpg(scenario, cfg, lcfg, seed):
    cfg = replace(cfg, reward="shared", switching=True)
    return DistributedMethod.build(scenario, cfg, lcfg, seed, name="dp_ddpg")


METHODS = {
    "dp_ddpg": build_dp_ddpg,
    "distributed": build_fully_distributed,
    "centralized": build_centralized,
}
