"""Deterministic policy gradient learner with replay and target networks."""

from __future__ import annotations

import json
import logging
import os
import pickle
from dataclasses import dataclass

import numpy as np

from .neural import AgentNet, make_optimizer, net_from_bytes, net_to_bytes

log = logging.getLogger(__name__)


@dataclass
class Transition:
    key: tuple
    s: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray
    done: bool


class ReplayBuffer:
    """Fixed-capacity ring of transitions with seeded uniform sampling."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int, seed=None):
        self.capacity = int(capacity)
        self.s = np.zeros((capacity, state_dim))
        self.a = np.zeros((capacity, action_dim))
        self.r = np.zeros(capacity)
        self.s2 = np.zeros((capacity, state_dim))
        self.d = np.zeros(capacity)
        self.keys = np.zeros((capacity, 2), dtype=np.int64)
        self.size = 0
        self.pos = 0
        self.rng = np.random.default_rng(seed)

    def __len__(self):
        return self.size

    def add(self, t: Transition) -> None:
        self.add_many(np.asarray(t.s)[None], np.asarray(t.a, dtype=float).reshape(1, -1),
                      np.array([t.r]), np.asarray(t.s_next)[None], np.array([float(t.done)]),
                      np.asarray(t.key, dtype=np.int64).reshape(1, -1) if t.key else None)

    def add_many(self, s, a, r, s2, d, keys=None) -> None:
        n = len(r)
        if not (np.isfinite(s).all() and np.isfinite(a).all() and np.isfinite(r).all()
                and np.isfinite(s2).all()):
            raise ValueError("non-finite transition")
        if n > self.capacity:
            s, a, r, s2, d = s[-self.capacity:], a[-self.capacity:], r[-self.capacity:], \
                s2[-self.capacity:], d[-self.capacity:]
            keys = None if keys is None else keys[-self.capacity:]
            n = self.capacity
        idx = (self.pos + np.arange(n)) % self.capacity
        self.s[idx] = s
        self.a[idx] = np.asarray(a).reshape(n, -1)
        self.r[idx] = r
        self.s2[idx] = s2
        self.d[idx] = d
        if keys is not None:
            self.keys[idx] = keys
        self.pos = int((self.pos + n) % self.capacity)
        self.size = min(self.size + n, self.capacity)

    def sample(self, n: int):
        idx = self.rng.integers(0, self.size, size=n)
        return self.s[idx], self.a[idx], self.r[idx], self.s2[idx], self.d[idx]


class DdpgLearner:
    """Actor, critic, their target copies, optimizers, replay and exploration noise."""

    def __init__(self, state_dim: int, action_dim: int = 1, G: float = 1.5,
                 hidden=(64, 64), lr_actor=1e-3, lr_critic=1e-2, gamma_rl=0.99,
                 tau_soft=0.01, noise_std=None, optimizer="adam", batch_size=64,
                 capacity=100_000, seed=0, actor_final_init=1e-3, activation="relu"):
        if not 0 < tau_soft <= 1:
            raise ValueError("tau_soft must lie in (0, 1]")
        if not 0 <= gamma_rl < 1:
            raise ValueError("gamma_rl must lie in [0, 1)")
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.G = float(G)
        self.gamma_rl = gamma_rl
        self.tau_soft = tau_soft
        self.noise_std = 0.1 * self.G if noise_std is None else float(noise_std)
        self.batch_size = batch_size
        seeds = np.random.SeedSequence(seed).spawn(4)
        init_rng = np.random.default_rng(seeds[0])
        self.actor = AgentNet([state_dim, *hidden, action_dim], activation, "tanh", self.G,
                              rng=init_rng, final_init=actor_final_init)
        self.critic = AgentNet([state_dim + action_dim, *hidden, 1], activation, "linear",
                               rng=init_rng)
        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()
        self.actor_opt = make_optimizer(optimizer, lr_actor)
        self.critic_opt = make_optimizer(optimizer, lr_critic)
        self.noise_rng = np.random.default_rng(seeds[1])
        self.replay = ReplayBuffer(capacity, state_dim, action_dim, seed=seeds[2])
        self.updates = 0

    # -- acting -------------------------------------------------------------

    def act(self, s, explore: bool = False) -> np.ndarray:
        s = np.asarray(s, dtype=np.float64)
        if not np.isfinite(s).all():
            raise ValueError("non-finite state")
        a = self.actor(s)
        if explore:
            a = a + self.noise_rng.normal(0.0, self.noise_std, size=a.shape)
            a = np.clip(a, -self.G, self.G)
        return a

    # -- learning -----------------------------------------------------------

    def update(self, batch) -> dict:
        """One critic regression step and one actor ascent step on ``batch``."""
        s, a, r, s2, d = (np.asarray(x, dtype=np.float64) for x in batch)
        n = len(r)
        if n == 0:
            raise ValueError("empty batch")
        a = a.reshape(n, self.action_dim)

        a2 = self.actor_target(s2)
        q2 = self.critic_target(np.hstack([s2, a2]))[:, 0]
        y = r + self.gamma_rl * (1.0 - d) * q2

        q, cache = self.critic(np.hstack([s, a]), return_cache=True)
        err = q[:, 0] - y
        critic_loss = float(np.mean(err * err))
        if not np.isfinite(critic_loss):
            log.warning("rejected update: non-finite critic loss")
            return {"critic_loss": critic_loss, "actor_objective": float("nan"), "rejected": True}
        grads, _ = self.critic.backward(cache, (2.0 / n) * err[:, None])
        ok_c = self.critic_opt.step(self.critic, grads)

        mu, a_cache = self.actor(s, return_cache=True)
        qa, c_cache = self.critic(np.hstack([s, mu]), return_cache=True)
        objective = float(qa.mean())
        _, dq_dx = self.critic.backward(c_cache, np.full((n, 1), 1.0 / n), param_grads=False)
        dq_da = dq_dx[:, self.state_dim:]
        a_grads, _ = self.actor.backward(a_cache, -dq_da)
        ok_a = self.actor_opt.step(self.actor, a_grads) if np.isfinite(objective) else False

        self.updates += 1
        return {"critic_loss": critic_loss, "actor_objective": objective,
                "rejected": not (ok_c and ok_a)}

    def soft_update(self) -> None:
        tau = self.tau_soft
        for online, target in ((self.actor, self.actor_target), (self.critic, self.critic_target)):
            if tau == 1.0:
                target.flat[...] = online.flat
            else:
                target.flat *= 1.0 - tau
                target.flat += tau * online.flat

    def train_step(self) -> dict | None:
        """Sample a minibatch from replay, update, then move the targets."""
        if len(self.replay) < self.batch_size:
            return None
        info = self.update(self.replay.sample(self.batch_size))
        self.soft_update()
        return info

    def all_finite(self) -> bool:
        return all(net.is_finite() for net in
                   (self.actor, self.critic, self.actor_target, self.critic_target))

    # -- checkpoints --------------------------------------------------------

    def save(self, directory) -> None:
        """Write the four networks, optimizer state and RNG states to ``directory``."""
        os.makedirs(directory, exist_ok=True)
        for name in ("actor", "critic", "actor_target", "critic_target"):
            with open(os.path.join(directory, f"{name}.net"), "wb") as fh:
                fh.write(net_to_bytes(getattr(self, name)))
        with open(os.path.join(directory, "optim.pkl"), "wb") as fh:
            pickle.dump({"actor": self.actor_opt.state(), "critic": self.critic_opt.state()}, fh)
        meta = {
            "format": "tollrl.ddpg/1",
            "G": self.G, "gamma_rl": self.gamma_rl, "tau_soft": self.tau_soft,
            "noise_std": self.noise_std, "batch_size": self.batch_size, "updates": self.updates,
            "noise_rng": self.noise_rng.bit_generator.state,
            "replay_rng": self.replay.rng.bit_generator.state,
        }
        with open(os.path.join(directory, "learner.json"), "w") as fh:
            json.dump(meta, fh, sort_keys=True, indent=1)
        np.savez(os.path.join(directory, "replay.npz"), s=self.replay.s[:self.replay.size],
                 a=self.replay.a[:self.replay.size], r=self.replay.r[:self.replay.size],
                 s2=self.replay.s2[:self.replay.size], d=self.replay.d[:self.replay.size],
                 pos=self.replay.pos, capacity=self.replay.capacity)

    def load(self, directory) -> None:
        for name in ("actor", "critic", "actor_target", "critic_target"):
            with open(os.path.join(directory, f"{name}.net"), "rb") as fh:
                setattr(self, name, net_from_bytes(fh.read()))
        with open(os.path.join(directory, "optim.pkl"), "rb") as fh:
            st = pickle.load(fh)
        self.actor_opt.load_state(st["actor"])
        self.critic_opt.load_state(st["critic"])
        with open(os.path.join(directory, "learner.json")) as fh:
            meta = json.load(fh)
        self.noise_std = meta["noise_std"]
        self.updates = meta["updates"]
        self.noise_rng.bit_generator.state = meta["noise_rng"]
        self.replay.rng.bit_generator.state = meta["replay_rng"]
        with np.load(os.path.join(directory, "replay.npz")) as z:
            n = len(z["r"])
            self.replay.s[:n], self.replay.a[:n], self.replay.r[:n] = z["s"], z["a"], z["r"]
            self.replay.s2[:n], self.replay.d[:n] = z["s2"], z["d"]
            self.replay.size = n
            self.replay.pos = int(z["pos"])


@dataclass
class LearnerConfig:
    """Hyperparameters shared by every learner a controller builds."""

    lr_actor: float = 1e-3
    lr_critic: float = 1e-2
    gamma_rl: float = 0.99
    tau_soft: float = 0.01
    noise_std: float | None = None
    batch_size: int = 64
    capacity: int = 100_000
    hidden: tuple = (64, 64)
    optimizer: str = "adam"
    activation: str = "relu"
    actor_final_init: float = 1e-3

    def build(self, state_dim: int, action_dim: int, G: float, seed) -> DdpgLearner:
        return DdpgLearner(state_dim, action_dim, G=G, hidden=tuple(self.hidden),
                           lr_actor=self.lr_actor, lr_critic=self.lr_critic,
                           gamma_rl=self.gamma_rl, tau_soft=self.tau_soft,
                           noise_std=self.noise_std, optimizer=self.optimizer,
                           batch_size=self.batch_size, capacity=self.capacity, seed=seed,
                           actor_final_init=self.actor_final_init, activation=self.activation)
