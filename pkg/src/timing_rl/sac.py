"""Soft actor-critic: replay buffer, twin critics with lagged targets, learned temperature."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .nn import (Adam, MlpParams, adam_update, flat_grads, head_gradient, init_mlp, mlp_backward,
                 mlp_forward, mlp_from_arrays, mlp_to_arrays, sample_head, squashed_gaussian)

ACTION_LOW, ACTION_HIGH = -3.0, 2.0


def to_physical(a, low: float = ACTION_LOW, high: float = ACTION_HIGH):
    """Affine map of a squashed action in [-1, 1] onto [low, high]."""
    return low + 0.5 * (np.asarray(a) + 1.0) * (high - low)


class ReplayBuffer:
    """Ring buffer with uniform sampling.  Storage grows on demand up to ``capacity``."""

    def __init__(self, capacity: int, obs_dim: int, act_dim: int, extra: tuple = (), next_obs_dim: int | None = None):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.obs_dim, self.act_dim = obs_dim, act_dim
        self.next_obs_dim = obs_dim if next_obs_dim is None else next_obs_dim
        self.extra = tuple(extra)
        self.size = 0
        self.ptr = 0
        self._alloc = 0
        self.data = {}
        self._grow(min(self.capacity, 1024))

    def _shapes(self):
        shapes = {"s": (self.obs_dim,), "a": (self.act_dim,), "r": (), "s2": (self.next_obs_dim,), "done": ()}
        shapes.update({k: () for k in self.extra})
        return shapes

    def _grow(self, n: int):
        for k, shp in self._shapes().items():
            new = np.zeros((n,) + shp)
            if k in self.data:
                new[: self._alloc] = self.data[k]
            self.data[k] = new
        self._alloc = n

    def __len__(self):
        return self.size

    def add(self, s, a, r, s2, done, **extra):
        if self.ptr >= self._alloc:
            self._grow(min(self.capacity, 2 * self._alloc))
        i = self.ptr
        self.data["s"][i] = s
        self.data["a"][i] = a
        self.data["r"][i] = r
        self.data["s2"][i] = s2
        self.data["done"][i] = float(done)
        for k in self.extra:
            self.data[k][i] = extra[k]
        self.ptr = (self.ptr + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample_indices(self, batch: int, rng: np.random.Generator) -> np.ndarray:
        if self.size < batch:
            raise ValueError(f"buffer holds {self.size} transitions, fewer than batch {batch}")
        return rng.integers(0, self.size, size=batch)

    def sample(self, batch: int, rng: np.random.Generator) -> dict:
        idx = self.sample_indices(batch, rng)
        return {k: v[idx] for k, v in self.data.items()}

    def state_arrays(self) -> dict:
        out = {f"buffer.{k}": v[: self.size] for k, v in self.data.items()}
        out["buffer.meta"] = np.array([self.size, self.ptr, self.capacity], dtype=float)
        return out


@dataclass
class SacConfig:
    hidden: tuple = (256, 256)
    lr: float = 3e-4
    gamma: float = 0.99
    tau: float = 0.005
    init_alpha: float = 1.0
    target_entropy: float | None = None
    policy_out_scale: float = 1e-2


class SacAgent:
    """Actor, twin critics and their targets, plus log-temperature."""

    def __init__(self, obs_dim: int, act_dim: int, seed: int, cfg: SacConfig | None = None):
        self.cfg = cfg or SacConfig()
        self.obs_dim, self.act_dim = obs_dim, act_dim
        self.rng = np.random.Generator(np.random.PCG64(seed))
        h = list(self.cfg.hidden)
        self.actor = init_mlp([obs_dim] + h + [2 * act_dim], self.rng, out_scale=self.cfg.policy_out_scale)
        self.q1 = init_mlp([obs_dim + act_dim] + h + [1], self.rng)
        self.q2 = init_mlp([obs_dim + act_dim] + h + [1], self.rng)
        self.q1_target = self.q1.copy()
        self.q2_target = self.q2.copy()
        self.log_alpha = np.array([math.log(self.cfg.init_alpha)])
        self.target_entropy = -float(act_dim) if self.cfg.target_entropy is None else self.cfg.target_entropy
        self.actor_opt = Adam(lr=self.cfg.lr)
        self.critic_opt = Adam(lr=self.cfg.lr)
        self.alpha_opt = Adam(lr=self.cfg.lr)
        self.updates = 0

    @property
    def alpha(self) -> float:
        return float(math.exp(self.log_alpha[0]))

    # -- acting --------------------------------------------------------------

    def policy_head(self, obs) -> np.ndarray:
        return mlp_forward(self.actor, obs)

    def act(self, obs, deterministic: bool = False, rng: np.random.Generator | None = None):
        """Squashed action in (-1, 1)^act_dim (unit range; see ``to_physical``)."""
        head = self.policy_head(obs)
        n = self.act_dim
        noise = None if deterministic else (rng or self.rng).standard_normal(n)
        action, _ = squashed_gaussian(head[:n], head[n:], noise)
        return action

    def q_values(self, obs, action, target: bool = False):
        x = np.concatenate([np.atleast_2d(obs), np.atleast_2d(action)], axis=1)
        n1, n2 = (self.q1_target, self.q2_target) if target else (self.q1, self.q2)
        return mlp_forward(n1, x)[:, 0], mlp_forward(n2, x)[:, 0]

    # -- learning ------------------------------------------------------------

    def target_values(self, batch: dict, discount) -> np.ndarray:
        """y = r + discount * (1 - done) * (min target Q(s', a') - alpha log pi(a'|s'))."""
        s2 = batch["s2"]
        head = mlp_forward(self.actor, s2)
        smp = sample_head(head, self.rng.standard_normal((len(s2), self.act_dim)))
        q1t, q2t = self.q_values(s2, smp.action, target=True)
        soft = np.minimum(q1t, q2t) - self.alpha * smp.log_prob
        return batch["r"] + discount * (1.0 - batch["done"]) * soft

    def update(self, batch: dict, discount=None) -> dict:
        """One critic, actor and temperature step, then the soft target update."""
        gamma = self.cfg.gamma if discount is None else discount
        stats = {"critic_loss": critic_update(self, batch, gamma)}
        stats.update(actor_update(self, batch))
        stats["alpha"] = temperature_update(self, stats.pop("_log_prob"))
        soft_update(self, self.cfg.tau)
        self.updates += 1
        if not self.all_finite():
            raise FloatingPointError(f"non-finite parameters after update {self.updates}")
        return stats

    def all_finite(self) -> bool:
        return (self.actor.all_finite() and self.q1.all_finite() and self.q2.all_finite()
                and self.q1_target.all_finite() and self.q2_target.all_finite()
                and bool(np.isfinite(self.log_alpha).all()))

    # -- persistence ---------------------------------------------------------

    def state_arrays(self, prefix: str = "") -> dict:
        out = {}
        for name in ("actor", "q1", "q2", "q1_target", "q2_target"):
            out.update(mlp_to_arrays(prefix + name, getattr(self, name)))
        out[prefix + "log_alpha"] = self.log_alpha
        for name in ("actor_opt", "critic_opt", "alpha_opt"):
            opt = getattr(self, name)
            out[f"{prefix}{name}.step"] = np.array([opt.step], dtype=float)
            for i, a in enumerate(opt.state_arrays()):
                out[f"{prefix}{name}.{i}"] = a
        return out

    def load_arrays(self, arrays: dict, prefix: str = ""):
        for name in ("actor", "q1", "q2", "q1_target", "q2_target"):
            setattr(self, name, mlp_from_arrays(prefix + name, arrays))
        self.log_alpha = arrays[prefix + "log_alpha"].copy()
        for name in ("actor_opt", "critic_opt", "alpha_opt"):
            opt = getattr(self, name)
            key = f"{prefix}{name}.step"
            if key not in arrays:
                continue
            opt.step = int(arrays[key][0])
            moments = []
            i = 0
            while f"{prefix}{name}.{i}" in arrays:
                moments.append(arrays[f"{prefix}{name}.{i}"].copy())
                i += 1
            half = len(moments) // 2
            opt.m, opt.v = moments[:half], moments[half:]


def critic_update(net: SacAgent, batch: dict, gamma) -> float:
    y = net.target_values(batch, gamma)
    x = np.concatenate([batch["s"], batch["a"]], axis=1)
    n = len(y)
    grads = []
    loss = 0.0
    for q in (net.q1, net.q2):
        pred, cache = mlp_forward(q, x, cache=True)
        err = pred[:, 0] - y
        loss += float(np.mean(err * err))
        g, _ = mlp_backward(q, cache, (2.0 / n) * err[:, None])
        grads += flat_grads(g)
    adam_update(net.q1.arrays() + net.q2.arrays(), grads, net.critic_opt)
    return loss


def actor_update(net: SacAgent, batch: dict) -> dict:
    """Minimise E[alpha log pi(a|s) - min(Q1, Q2)(s, a)] with a reparameterised."""
    s = batch["s"]
    n = len(s)
    head, cache = mlp_forward(net.actor, s, cache=True)
    smp = sample_head(head, net.rng.standard_normal((n, net.act_dim)))
    x = np.concatenate([s, smp.action], axis=1)
    q1, c1 = mlp_forward(net.q1, x, cache=True)
    q2, c2 = mlp_forward(net.q2, x, cache=True)
    use1 = (q1[:, 0] <= q2[:, 0])[:, None]
    _, gx1 = mlp_backward(net.q1, c1, np.where(use1, -1.0 / n, 0.0), param_grads=False)
    _, gx2 = mlp_backward(net.q2, c2, np.where(use1, 0.0, -1.0 / n), param_grads=False)
    d_action = (gx1 + gx2)[:, net.obs_dim:]
    alpha = net.alpha
    d_logp = np.full(n, alpha / n)
    g_head = head_gradient(smp, d_action, d_logp)
    grads, _ = mlp_backward(net.actor, cache, g_head)
    adam_update(net.actor.arrays(), flat_grads(grads), net.actor_opt)
    q_min = np.minimum(q1[:, 0], q2[:, 0])
    return {
        "actor_loss": float(np.mean(alpha * smp.log_prob - q_min)),
        "entropy": float(-np.mean(smp.log_prob)),
        "_log_prob": smp.log_prob,
    }


def temperature_update(net: SacAgent, log_prob) -> float:
    """Gradient step on log alpha for the loss -log_alpha * (log pi + target entropy)."""
    grad = -float(np.mean(np.asarray(log_prob) + net.target_entropy))
    adam_update([net.log_alpha], [np.array([grad])], net.alpha_opt)
    return net.alpha


def soft_update(net: SacAgent, tau: float) -> None:
    for online, target in ((net.q1, net.q1_target), (net.q2, net.q2_target)):
        for a, b in zip(online.arrays(), target.arrays()):
            b *= 1.0 - tau
            b += tau * a
