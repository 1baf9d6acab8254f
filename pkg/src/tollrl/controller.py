"""Distributed pricing: one policy applied at every (tolled bottleneck, slot) pair.

A day's record is turned into a ``[n_tolled, T, 3]`` state tensor; the
policy proposes a toll increment per pair, travelers respond over the next
day, and the normalized waits of that day become the reward. Training runs
in cycles that each restart from the zero-toll converged snapshot while the
learner carries over.
"""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .day_to_day import (BaselineStats, EvolutionState, compute_baseline, evolve_one_day,
                         init_state, run_to_convergence)
from .ddpg import DdpgLearner, LearnerConfig
from .network import Network
from .within_day import DayRecord

log = logging.getLogger(__name__)

STATE_DIM = 3


class ConfigurationError(ValueError):
    pass


@dataclass
class ControlConfig:
    G: float = 1.5
    n_window: int = 1
    dw: float = 0.05
    cycle_days: int = 40
    cycles_per_set: int = 15
    sets: int = 1
    toll_floor: float = 0.0
    # None: one learner update per stored transition
    updates_per_day: int | None = None
    reward: str = "shared"          # "shared" or "local"
    switching: bool = True
    learner_mode: str = "shared"    # "shared" or "per_pair"
    noise_decay: float = 1.0        # exploration std multiplier applied once per cycle

    def validate(self) -> None:
        if not self.G > 0:
            raise ConfigurationError("G must be positive")
        if self.n_window < 0 or int(self.n_window) != self.n_window:
            raise ConfigurationError("n_window must be a non-negative integer")
        if not self.dw >= 0:
            raise ConfigurationError("dw must be non-negative")
        if self.cycle_days < 1 or self.cycles_per_set < 1 or self.sets < 1:
            raise ConfigurationError("cycle_days, cycles_per_set and sets must be >= 1")
        if self.updates_per_day is not None and self.updates_per_day < 0:
            raise ConfigurationError("updates_per_day must be >= 0")
        if self.reward not in ("shared", "local"):
            raise ConfigurationError(f"unknown reward {self.reward!r}")
        if self.learner_mode not in ("shared", "per_pair"):
            raise ConfigurationError(f"unknown learner_mode {self.learner_mode!r}")
        if not 0 < self.noise_decay <= 1:
            raise ConfigurationError("noise_decay must lie in (0, 1]")


@dataclass
class SlotAgentView:
    bottleneck: int
    slot: int
    active: bool
    state: np.ndarray


# -- per-pair algebra -----------------------------------------------------------


def build_states(day: DayRecord, baseline: BaselineStats, tolls: np.ndarray,
                 net: Network) -> np.ndarray:
    """``[n_tolled, T, 3]``: relative inflow excess, normalized wait, centered normalized toll."""
    rows = net.tolled
    norm = baseline.norm[rows]
    if not np.all(np.isfinite(norm) & (norm > 0)):
        raise ConfigurationError("a tolled bottleneck has no zero-toll congestion to normalize by")
    mu = net.capacities[rows][:, None]
    a = day.inflow[rows]
    w = day.wait[rows]
    tau = np.asarray(tolls, dtype=np.float64)[rows]
    s = np.empty((len(rows), a.shape[1], STATE_DIM))
    s[..., 0] = (a - mu) / mu
    s[..., 1] = w / norm[:, None]
    s[..., 2] = (tau - tau.mean(axis=1, keepdims=True)) / norm[:, None]
    return s


def slot_views(states: np.ndarray, active: np.ndarray, net: Network) -> list[SlotAgentView]:
    ids = [net.bottlenecks[r].id for r in net.tolled]
    return [SlotAgentView(ids[i], t + 1, bool(active[i, t]), states[i, t])
            for i in range(states.shape[0]) for t in range(states.shape[1])]


def apply_actions(tolls: np.ndarray, actions: np.ndarray, active: np.ndarray, floor: float,
                  G: float, rows: np.ndarray) -> np.ndarray:
    """Return a copy of ``tolls`` with ``actions`` added on active tolled pairs, floored."""
    actions = np.asarray(actions, dtype=np.float64)
    if np.any(np.abs(actions) > G):
        raise ValueError(f"action magnitude exceeds G={G}")
    out = np.array(tolls, dtype=np.float64, copy=True)
    block = out[rows]
    block = np.where(active, np.maximum(block + actions, floor), block)
    out[rows] = block
    return out


def shared_term(day: DayRecord, baseline: BaselineStats, net: Network) -> float:
    rows = net.tolled
    return float(np.mean(day.wait[rows].mean(axis=1) / baseline.norm[rows]))


def local_reward(day: DayRecord, baseline: BaselineStats, net: Network) -> np.ndarray:
    rows = net.tolled
    return -(day.wait[rows] / baseline.norm[rows][:, None])


def shared_reward(day: DayRecord, baseline: BaselineStats, net: Network) -> np.ndarray:
    """Local normalized wait plus the mean normalized wait of all tolled bottlenecks, negated."""
    return local_reward(day, baseline, net) - shared_term(day, baseline, net)


def switching_mask(wait: np.ndarray, n_window: int, dw: float) -> np.ndarray:
    """True where the centered moving average of ``wait`` reaches ``dw``.

    Slots beyond either end of the day count as zero wait. The window is
    summed left to right, then divided by ``2n + 1``.
    """
    wait = np.asarray(wait, dtype=np.float64)
    n = int(n_window)
    T = wait.shape[-1]
    padded = np.zeros(wait.shape[:-1] + (T + 2 * n,))
    padded[..., n:n + T] = wait
    acc = np.zeros_like(wait)
    for k in range(2 * n + 1):
        acc += padded[..., k:k + T]
    return acc / (2 * n + 1) >= dw


# -- scenario snapshot ----------------------------------------------------------


@dataclass
class ControlScenario:
    """A network, its zero-toll converged state and the normalizers derived from it."""

    net: Network
    snapshot: EvolutionState
    baseline: BaselineStats
    converged: bool = True

    @classmethod
    def prepare(cls, net: Network, eps: float = 1e-3, max_days: int = 2000) -> "ControlScenario":
        res = run_to_convergence(init_state(net), net, eps=eps, max_days=max_days)
        baseline = compute_baseline(net, res.state)
        if not res.converged:
            log.warning("zero-toll dynamics of %r did not converge", net.name)
        rows = net.tolled
        if len(rows) == 0:
            raise ConfigurationError("scenario has no tolled bottleneck")
        bad = [net.bottlenecks[r].id for r in rows if not baseline.usable[r]]
        if bad:
            raise ConfigurationError(f"tolled bottlenecks {bad} carry no zero-toll queue")
        return cls(net, res.state, baseline, res.converged)

    def reset(self) -> EvolutionState:
        return self.snapshot.copy()


# -- agents ---------------------------------------------------------------------


class SharedAgent:
    """One learner serving every pair; all transitions go to one replay buffer."""

    def __init__(self, learner: DdpgLearner):
        self.learner = learner
        self.base_noise = learner.noise_std

    def act(self, keys, states, explore):
        if len(states) == 0:
            return np.zeros(0)
        return self.learner.act(states, explore)[:, 0]

    def store(self, keys, s, a, r, s2, done):
        n = len(r)
        if n:
            self.learner.replay.add_many(s, a[:, None], r, s2, np.full(n, float(done)), keys)

    def train(self, k):
        losses = []
        for _ in range(k):
            info = self.learner.train_step()
            if info is not None:
                losses.append(info["critic_loss"])
        return float(np.mean(losses)) if losses else float("nan")

    def set_noise_scale(self, scale):
        self.learner.noise_std = self.base_noise * scale

    def all_finite(self):
        return self.learner.all_finite()

    def save(self, directory):
        self.learner.save(directory)

    def load(self, directory):
        self.learner.load(directory)
        self.base_noise = self.learner.noise_std


class PerPairAgent:
    """An independent learner per (tolled bottleneck, slot), created on first use."""

    def __init__(self, factory, seed: int):
        self.factory = factory
        self.seed = int(seed)
        self.learners: dict[tuple, DdpgLearner] = {}
        self.scale = 1.0
        self._touched: set = set()

    def _get(self, key):
        key = tuple(int(x) for x in key)
        if key not in self.learners:
            lr = self.factory([self.seed, *key])
            lr._base_noise = lr.noise_std
            lr.noise_std = lr._base_noise * self.scale
            self.learners[key] = lr
        return self.learners[key]

    def act(self, keys, states, explore):
        return np.array([self._get(k).act(s, explore)[0] for k, s in zip(keys, states)])

    def store(self, keys, s, a, r, s2, done):
        for j, k in enumerate(keys):
            lr = self._get(k)
            lr.replay.add_many(s[j:j + 1], a[j:j + 1, None], r[j:j + 1], s2[j:j + 1],
                               np.array([float(done)]))
            self._touched.add(tuple(int(x) for x in k))

    def train(self, k):
        # one update per learner that stored a transition today; k is ignored
        losses = []
        for key in sorted(self._touched):
            info = self.learners[key].train_step()
            if info is not None:
                losses.append(info["critic_loss"])
        self._touched.clear()
        return float(np.mean(losses)) if losses else float("nan")

    def set_noise_scale(self, scale):
        self.scale = scale
        for lr in self.learners.values():
            lr.noise_std = lr._base_noise * scale

    def all_finite(self):
        return all(lr.all_finite() for lr in self.learners.values())

    def save(self, directory):
        for (i, t), lr in sorted(self.learners.items()):
            lr.save(os.path.join(directory, f"pair_{i}_{t}"))

    def load(self, directory):
        for name in sorted(os.listdir(directory)):
            if name.startswith("pair_"):
                _, i, t = name.split("_")
                self._get((int(i), int(t))).load(os.path.join(directory, name))


# -- methods --------------------------------------------------------------------


class DistributedMethod:
    """Per-pair tolling driven by one agent; covers DP-DDPG and the fully distributed variant."""

    def __init__(self, scenario: ControlScenario, cfg: ControlConfig, agent, name="dp_ddpg"):
        self.scenario = scenario
        self.cfg = cfg
        self.agent = agent
        self.name = name
        self.rows = scenario.net.tolled

    @classmethod
    def build(cls, scenario, cfg: ControlConfig, lcfg: LearnerConfig, seed, name=None):
        if cfg.learner_mode == "shared":
            agent = SharedAgent(lcfg.build(STATE_DIM, 1, cfg.G, seed))
        else:
            agent = PerPairAgent(lambda ss: lcfg.build(STATE_DIM, 1, cfg.G, ss), seed)
        if name is None:
            name = "dp_ddpg" if cfg.reward == "shared" and cfg.switching else "distributed"
        return cls(scenario, cfg, agent, name)

    def begin_cycle(self, record: DayRecord, tolls: np.ndarray) -> None:
        pass

    def decide(self, record: DayRecord, tolls: np.ndarray, explore: bool):
        net, base, cfg = self.scenario.net, self.scenario.baseline, self.cfg
        s = build_states(record, base, tolls, net)
        if cfg.switching:
            active = switching_mask(record.wait[self.rows], cfg.n_window, cfg.dw)
        else:
            active = np.ones(s.shape[:2], dtype=bool)
        keys = np.argwhere(active)
        actions = np.zeros(active.shape)
        if len(keys):
            actions[active] = self.agent.act(keys, s[active], explore)
        new_tolls = apply_actions(tolls, actions, active, cfg.toll_floor, cfg.G, self.rows)
        return new_tolls, (s, active, keys, actions)

    def observe(self, pending, record: DayRecord, tolls: np.ndarray, done: bool) -> tuple:
        s, active, keys, actions = pending
        net, base = self.scenario.net, self.scenario.baseline
        reward = shared_reward if self.cfg.reward == "shared" else local_reward
        r = reward(record, base, net)
        s2 = build_states(record, base, tolls, net)
        self.agent.store(keys, s[active], actions[active], r[active], s2[active], done)
        k = len(keys) if self.cfg.updates_per_day is None else self.cfg.updates_per_day
        return self.agent.train(k), int(active.sum())

    def set_noise_scale(self, scale):
        self.agent.set_noise_scale(scale)

    def all_finite(self):
        return self.agent.all_finite()

    def save(self, directory):
        self.agent.save(directory)

    def load(self, directory):
        self.agent.load(directory)


# -- cycles ---------------------------------------------------------------------


@dataclass
class DayLog:
    day: int
    total_travel_time: float
    total_wait: float
    wait_by_bottleneck: np.ndarray
    tolls: np.ndarray           # [n_tolled, T]
    n_active: int = 0
    critic_loss: float = float("nan")


@dataclass
class CycleLog:
    days: list = field(default_factory=list)

    def __len__(self):
        return len(self.days)

    @property
    def total_wait(self) -> np.ndarray:
        return np.array([d.total_wait for d in self.days])

    @property
    def total_travel_time(self) -> np.ndarray:
        return np.array([d.total_travel_time for d in self.days])

    def final_wait(self, tail: int = 5) -> float:
        """Mean total wait over the last ``tail`` days."""
        return float(self.total_wait[-tail:].mean())


def run_cycle(scenario: ControlScenario, method, cfg: ControlConfig, explore: bool = True,
              learn: bool = True) -> CycleLog:
    """One cycle from the zero-toll converged snapshot.

    Day ``j``'s record yields the states and actions; the updated tolls are in
    force on day ``j + 1``, whose outcome provides reward and next state.
    """
    net = scenario.net
    state = scenario.reset()
    record = state.last_record
    tolls = np.zeros((net.n_bottlenecks, net.horizon))
    method.begin_cycle(record, tolls)
    out = CycleLog()
    for day in range(cfg.cycle_days):
        done = day == cfg.cycle_days - 1
        tolls, pending = method.decide(record, tolls, explore)
        _, record = evolve_one_day(state, net, tolls)
        loss, n_active = float("nan"), 0
        if learn:
            loss, n_active = method.observe(pending, record, tolls, done)
        out.days.append(DayLog(day + 1, record.total_travel_time, record.total_wait,
                               record.wait.sum(axis=1), tolls[net.tolled].copy(),
                               n_active, loss))
    if learn and not method.all_finite():
        raise FloatingPointError("learner parameters became non-finite")
    return out


def evaluate(scenario: ControlScenario, method, cfg: ControlConfig) -> CycleLog:
    """A greedy cycle: no exploration noise, no learning."""
    return run_cycle(scenario, method, cfg, explore=False, learn=False)


# -- training -------------------------------------------------------------------

METRIC_PREFIX = ("method", "phase", "set", "cycle", "day", "total_travel_time", "total_wait")
TOLL_COLUMNS = ("method", "phase", "set", "cycle", "day", "bottleneck", "slot", "toll")


def metric_columns(net: Network) -> tuple:
    return METRIC_PREFIX + tuple(f"wait_{b.id}" for b in net.bottlenecks)


class MetricWriter:
    """Appends cycle logs to a metrics CSV and, optionally, a toll-schedule CSV."""

    def __init__(self, net: Network, metrics_path, tolls_path=None):
        self.net = net
        self.metrics_path = metrics_path
        self.tolls_path = tolls_path
        for path, cols in ((metrics_path, metric_columns(net)), (tolls_path, TOLL_COLUMNS)):
            if path is not None and not os.path.exists(path):
                with open(path, "w", newline="") as fh:
                    csv.writer(fh).writerow(cols)

    def write(self, log_: CycleLog, method: str, phase: str, set_idx: int, cycle: int) -> None:
        ids = [self.net.bottlenecks[r].id for r in self.net.tolled]
        try:
            with open(self.metrics_path, "a", newline="") as fh:
                w = csv.writer(fh)
                for d in log_.days:
                    w.writerow([method, phase, set_idx, cycle, d.day, repr(d.total_travel_time),
                                repr(d.total_wait), *(repr(float(x)) for x in d.wait_by_bottleneck)])
            if self.tolls_path is None:
                return
            with open(self.tolls_path, "a", newline="") as fh:
                w = csv.writer(fh)
                for d in log_.days:
                    for i, bid in enumerate(ids):
                        for t, v in enumerate(d.tolls[i]):
                            w.writerow([method, phase, set_idx, cycle, d.day, bid, t + 1,
                                        repr(float(v))])
        except OSError as exc:
            raise OSError(f"writing metrics for set {set_idx} cycle {cycle}: {exc}") from exc


@dataclass
class SetResult:
    cycles: list
    evaluation: CycleLog
    method: object = None


@dataclass
class TrainingResult:
    sets: list

    def final_waits(self, tail: int = 5) -> np.ndarray:
        return np.array([s.evaluation.final_wait(tail) for s in self.sets])


def run_training(scenario: ControlScenario, cfg: ControlConfig, lcfg: LearnerConfig,
                 seed: int = 0, out_dir=None, method_factory=None, write_tolls: bool = True,
                 checkpoints: bool = True) -> TrainingResult:
    """``sets`` x ``cycles_per_set`` training cycles with a fresh method per set.

    ``method_factory(scenario, cfg, lcfg, seed)`` builds the method; the
    default is :meth:`DistributedMethod.build`. Each set ends with a greedy
    evaluation cycle. With ``out_dir`` set, metrics/toll CSVs and per-cycle
    checkpoints are written there.
    """
    cfg.validate()
    factory = method_factory or DistributedMethod.build
    writer = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        writer = MetricWriter(scenario.net, os.path.join(out_dir, "metrics.csv"),
                              os.path.join(out_dir, "tolls.csv") if write_tolls else None)
    set_seeds = np.random.SeedSequence(seed).spawn(cfg.sets)
    results = []
    for s_idx, ss in enumerate(set_seeds):
        method = factory(scenario, cfg, lcfg, int(ss.generate_state(1)[0]))
        cycles = []
        for c in range(cfg.cycles_per_set):
            method.set_noise_scale(cfg.noise_decay ** c)
            clog = run_cycle(scenario, method, cfg)
            cycles.append(clog)
            log.info("%s set %d cycle %d: final wait %.4g", method.name, s_idx, c,
                     clog.total_wait[-1])
            if writer is not None:
                writer.write(clog, method.name, "train", s_idx, c)
                if checkpoints:
                    method.save(os.path.join(out_dir, "checkpoints", method.name,
                                             f"set_{s_idx}", f"cycle_{c}"))
        ev = evaluate(scenario, method, cfg)
        if writer is not None:
            writer.write(ev, method.name, "eval", s_idx, cfg.cycles_per_set)
        results.append(SetResult(cycles, ev, method))
    return TrainingResult(results)


def config_dict(cfg: ControlConfig) -> dict:
    return asdict(cfg)
