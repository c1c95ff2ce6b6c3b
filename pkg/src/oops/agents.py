"""Off-policy learners trained on proxy rewards.

``ReplayBuffer`` stores transitions with the reward computed when their
episode ended; rewards are never rewritten. ``TabularQAgent`` handles the
gridworld, ``ActorCritic`` is a single-critic deterministic actor-critic on
one-hidden-layer ReLU networks with hand-written backpropagation and Adam.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .exceptions import DataError, DimensionError, DivergenceError, InputError

CHECKPOINT_VERSION = 1


class ReplayBuffer:
    """FIFO ring buffer of ``(s, a, s', r, done, episode_id)`` rows."""

    def __init__(self, capacity: int = 1_000_000):
        if capacity < 1:
            raise InputError("capacity must be positive")
        self.capacity = int(capacity)
        self._size = 0
        self._next = 0
        self._arrays = None

    def __len__(self):
        return self._size

    def _allocate(self, s_dim, a_dim, n):
        cap = min(self.capacity, max(1024, n))
        self._arrays = {
            "s": np.zeros((cap, s_dim)),
            "a": np.zeros((cap, a_dim)),
            "s2": np.zeros((cap, s_dim)),
            "r": np.zeros(cap),
            "done": np.zeros(cap, dtype=bool),
            "episode": np.zeros(cap, dtype=np.int64),
        }

    def _grow(self, needed):
        cur = len(self._arrays["r"])
        if cur >= self.capacity or needed <= cur:
            return
        new = min(self.capacity, max(needed, 2 * cur))
        for k, arr in self._arrays.items():
            grown = np.zeros((new,) + arr.shape[1:], dtype=arr.dtype)
            grown[:cur] = arr
            self._arrays[k] = grown

    def add(self, s, a, s2, r, done, episode_id=0):
        s = np.atleast_1d(np.asarray(s, dtype=np.float64))
        a = np.atleast_1d(np.asarray(a, dtype=np.float64))
        if self._arrays is None:
            self._allocate(s.shape[0], a.shape[0], 1)
        self._grow(self._size + 1)
        i = self._next
        arrs = self._arrays
        arrs["s"][i] = s
        arrs["a"][i] = a
        arrs["s2"][i] = s2
        arrs["r"][i] = r
        arrs["done"][i] = done
        arrs["episode"][i] = episode_id
        storage = len(arrs["r"])
        self._next = (i + 1) % self.capacity if storage >= self.capacity else i + 1
        self._size = min(self._size + 1, self.capacity)

    def push_episode(self, trajectory, rewards, terminal: bool, episode_id: int = 0):
        """Store every transition of ``trajectory`` with its reward.

        ``rewards`` has one entry per transition; ``done`` is set on the last
        transition only when the episode ended in a terminal state (not a
        horizon cut).
        """
        rewards = np.asarray(getattr(rewards, "rewards", rewards), dtype=np.float64)
        states = trajectory.states
        actions = trajectory.actions
        n = states.shape[0] - 1
        if actions is None or actions.shape[0] != n:
            raise DimensionError("trajectory needs one action per transition")
        if rewards.shape[0] != n:
            raise DimensionError(f"{rewards.shape[0]} rewards for {n} transitions")
        for t in range(n):
            self.add(states[t], actions[t], states[t + 1], rewards[t],
                     terminal and t == n - 1, episode_id)

    def get(self, i: int) -> dict:
        if not 0 <= i < self._size:
            raise IndexError(i)
        return {k: v[i].copy() if v.ndim > 1 else v[i] for k, v in self._arrays.items()}

    def sample(self, batch_size: int, rng) -> dict:
        idx = rng.integers(0, self._size, size=batch_size)
        return {k: v[idx] for k, v in self._arrays.items()}


# --- tabular Q-learning ------------------------------------------------------


@dataclass(frozen=True)
class TabularQConfig:
    alpha: float = 0.1
    gamma: float = 0.99
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_fraction: float = 0.5
    updates_per_step: int = 4

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise InputError("alpha must lie in (0, 1]")
        if not 0 <= self.gamma < 1:
            raise InputError("gamma must lie in [0, 1)")

    def epsilon(self, step: int, total_steps: int) -> float:
        horizon = max(1.0, self.eps_fraction * total_steps)
        frac = min(1.0, step / horizon)
        return self.eps_start + frac * (self.eps_end - self.eps_start)


def tabular_q_update(q, s, a, s2, r, done, alpha, gamma):
    """Sequential Q-learning updates over a batch, in place; returns ``q``."""
    s = np.atleast_1d(s)
    a = np.atleast_1d(a)
    s2 = np.atleast_1d(s2)
    r = np.atleast_1d(r)
    done = np.atleast_1d(done)
    n_s, n_a = q.shape
    if np.any((s < 0) | (s >= n_s) | (s2 < 0) | (s2 >= n_s) | (a < 0) | (a >= n_a)):
        raise IndexError("state or action index outside the Q table")
    for i in range(len(s)):
        boot = 0.0 if done[i] else gamma * q[s2[i]].max()
        q[s[i], a[i]] += alpha * (r[i] + boot - q[s[i], a[i]])
    return q


class TabularQAgent:
    def __init__(self, n_states: int, n_actions: int, config: TabularQConfig = TabularQConfig()):
        self.config = config
        self.q = np.zeros((n_states, n_actions))

    def act(self, state_index: int, explore: bool = False, rng=None, epsilon: float = 0.0) -> int:
        if explore and rng is not None and rng.random() < epsilon:
            return int(rng.integers(self.q.shape[1]))
        return int(np.argmax(self.q[state_index]))  # argmax: first index on ties

    def update(self, batch) -> None:
        tabular_q_update(self.q, batch["s"], batch["a"], batch["s2"], batch["r"], batch["done"],
                         self.config.alpha, self.config.gamma)

    def state_dict(self) -> dict:
        return {"q": self.q}

    def load_state_dict(self, d: dict) -> None:
        self.q = np.array(d["q"], dtype=np.float64)


# --- actor-critic ------------------------------------------------------------


@dataclass(frozen=True)
class ActorCriticConfig:
    actor_hidden: int = 64
    critic_hidden: int = 64
    tau: float = 3e-3
    exploration_noise: float = 0.2
    actor_lr: float = 3e-4
    critic_lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 256
    gamma: float = 0.99
    start_steps: int = 1000
    state_scale: float = 1.0

    def __post_init__(self):
        if self.actor_hidden < 1 or self.critic_hidden < 1 or self.batch_size < 1:
            raise InputError("network widths and batch size must be positive")
        if not 0 < self.tau < 1:
            raise InputError("tau must lie in (0, 1)")
        if self.actor_lr <= 0 or self.critic_lr <= 0:
            raise InputError("learning rates must be positive")


def init_mlp(rng, n_in: int, n_hidden: int, n_out: int) -> dict:
    """Weights uniform in +-1/sqrt(fan_in)."""
    b1 = 1.0 / np.sqrt(n_in)
    b2 = 1.0 / np.sqrt(n_hidden)
    return {
        "W1": rng.uniform(-b1, b1, size=(n_in, n_hidden)),
        "b1": rng.uniform(-b1, b1, size=n_hidden),
        "W2": rng.uniform(-b2, b2, size=(n_hidden, n_out)),
        "b2": rng.uniform(-b2, b2, size=n_out),
    }


def actor_forward(actor: dict, s: np.ndarray):
    z1 = s @ actor["W1"] + actor["b1"]
    h = np.maximum(z1, 0.0)
    out = np.tanh(h @ actor["W2"] + actor["b2"])
    return out, (s, z1, h, out)


def critic_forward(critic: dict, s: np.ndarray, a: np.ndarray):
    x = np.concatenate([s, a], axis=1)
    z1 = x @ critic["W1"] + critic["b1"]
    h = np.maximum(z1, 0.0)
    q = (h @ critic["W2"] + critic["b2"])[:, 0]
    return q, (x, z1, h)


def _critic_backward(critic: dict, cache, dq: np.ndarray):
    """Gradients of ``sum(dq * q)`` w.r.t. critic params and its input."""
    x, z1, h = cache
    dq = dq[:, None]
    grads = {"W2": h.T @ dq, "b2": dq.sum(axis=0)}
    dz1 = (dq @ critic["W2"].T) * (z1 > 0)
    grads["W1"] = x.T @ dz1
    grads["b1"] = dz1.sum(axis=0)
    dx = dz1 @ critic["W1"].T
    return grads, dx


def critic_loss_and_grads(critic, target_actor, target_critic, batch, gamma):
    """Mean squared TD error toward ``r + gamma (1-done) Q'(s', mu'(s'))``."""
    a2, _ = actor_forward(target_actor, batch["s2"])
    q2, _ = critic_forward(target_critic, batch["s2"], a2)
    y = batch["r"] + gamma * (1.0 - batch["done"].astype(np.float64)) * q2
    q, cache = critic_forward(critic, batch["s"], batch["a"])
    err = q - y
    loss = float(np.mean(err**2))
    grads, _ = _critic_backward(critic, cache, 2.0 * err / err.shape[0])
    return loss, grads


def actor_loss_and_grads(actor, critic, s):
    """``-mean Q(s, mu(s))`` and its gradient w.r.t. actor params."""
    a, (s_in, z1, h, out) = actor_forward(actor, s)
    q, cache = critic_forward(critic, s, a)
    loss = -float(np.mean(q))
    _, dx = _critic_backward(critic, cache, -np.ones_like(q) / q.shape[0])
    da = dx[:, s.shape[1]:]
    dpre = da * (1.0 - out**2)
    grads = {"W2": h.T @ dpre, "b2": dpre.sum(axis=0)}
    dz1 = (dpre @ actor["W2"].T) * (z1 > 0)
    grads["W1"] = s_in.T @ dz1
    grads["b1"] = dz1.sum(axis=0)
    return loss, grads


class Adam:
    def __init__(self, params: dict, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for k, g in grads.items():
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)

    def state_dict(self, prefix: str) -> dict:
        out = {f"{prefix}.t": np.array(self.t)}
        out.update({f"{prefix}.m.{k}": v for k, v in self.m.items()})
        out.update({f"{prefix}.v.{k}": v for k, v in self.v.items()})
        return out

    def load_state_dict(self, d: dict, prefix: str) -> None:
        self.t = int(d[f"{prefix}.t"])
        for k in self.m:
            self.m[k] = np.array(d[f"{prefix}.m.{k}"])
            self.v[k] = np.array(d[f"{prefix}.v.{k}"])


def soft_update(target: dict, source: dict, tau: float) -> None:
    for k in target:
        target[k] = (1.0 - tau) * target[k] + tau * source[k]


class ActorCritic:
    """Deterministic actor-critic (single critic, target networks)."""

    def __init__(self, state_dim: int, action_dim: int, config: ActorCriticConfig = ActorCriticConfig(), seed=0):
        self.config = config
        self.state_dim = state_dim
        self.action_dim = action_dim
        rng = np.random.default_rng(seed)
        self.actor = init_mlp(rng, state_dim, config.actor_hidden, action_dim)
        self.critic = init_mlp(rng, state_dim + action_dim, config.critic_hidden, 1)
        self.target_actor = {k: v.copy() for k, v in self.actor.items()}
        self.target_critic = {k: v.copy() for k, v in self.critic.items()}
        self.actor_opt = Adam(self.actor, config.actor_lr, config.beta1, config.beta2, config.adam_eps)
        self.critic_opt = Adam(self.critic, config.critic_lr, config.beta1, config.beta2, config.adam_eps)

    def _scale(self, s):
        return np.asarray(s, dtype=np.float64) * self.config.state_scale

    def act(self, state, explore: bool = False, rng=None) -> np.ndarray:
        s = self._scale(state).reshape(1, -1)
        a, _ = actor_forward(self.actor, s)
        a = a[0]
        if explore and rng is not None:
            a = a + rng.normal(0.0, self.config.exploration_noise, size=a.shape)
        return np.clip(a, -1.0, 1.0)

    def update(self, batch) -> dict:
        cfg = self.config
        batch = dict(batch, s=self._scale(batch["s"]), s2=self._scale(batch["s2"]))
        with np.errstate(invalid="ignore", over="ignore"):
            c_loss, c_grads = critic_loss_and_grads(
                self.critic, self.target_actor, self.target_critic, batch, cfg.gamma
            )
        if not np.isfinite(c_loss):
            raise DivergenceError("critic loss is not finite", {"critic_loss": c_loss})
        self.critic_opt.step(self.critic, c_grads)
        with np.errstate(invalid="ignore", over="ignore"):
            a_loss, a_grads = actor_loss_and_grads(self.actor, self.critic, batch["s"])
        if not np.isfinite(a_loss):
            raise DivergenceError("actor loss is not finite", {"actor_loss": a_loss})
        self.actor_opt.step(self.actor, a_grads)
        soft_update(self.target_critic, self.critic, cfg.tau)
        soft_update(self.target_actor, self.actor, cfg.tau)
        return {"critic_loss": c_loss, "actor_loss": a_loss}

    def state_dict(self) -> dict:
        out = {}
        for name in ("actor", "critic", "target_actor", "target_critic"):
            out.update({f"{name}.{k}": v for k, v in getattr(self, name).items()})
        out.update(self.actor_opt.state_dict("actor_opt"))
        out.update(self.critic_opt.state_dict("critic_opt"))
        return out

    def load_state_dict(self, d: dict) -> None:
        for name in ("actor", "critic", "target_actor", "target_critic"):
            net = getattr(self, name)
            for k in net:
                net[k] = np.array(d[f"{name}.{k}"], dtype=np.float64)
        self.actor_opt.load_state_dict(d, "actor_opt")
        self.critic_opt.load_state_dict(d, "critic_opt")


# --- checkpoints -------------------------------------------------------------
#
# A checkpoint is an uncompressed ``.npz`` archive. The entry ``__version__``
# holds CHECKPOINT_VERSION, ``__kind__`` names the agent class and
# ``__config__`` its config as a JSON string; every other entry is one
# float64 parameter array keyed ``<group>.<name>``.


def save_checkpoint(path, agent) -> Path:
    import json

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "__version__": np.array(CHECKPOINT_VERSION),
        "__kind__": np.array(type(agent).__name__),
        "__config__": np.array(json.dumps(asdict(agent.config), sort_keys=True)),
    }
    if isinstance(agent, ActorCritic):
        meta["__dims__"] = np.array([agent.state_dim, agent.action_dim])
    with path.open("wb") as fh:
        np.savez(fh, **meta, **agent.state_dict())
    return path


def load_checkpoint(path):
    import json

    path = Path(path)
    if not path.is_file():
        raise DataError(f"checkpoint not found: {path}")
    with np.load(path, allow_pickle=False) as data:
        d = {k: data[k] for k in data.files}
    version = int(d.pop("__version__", -1))
    if version != CHECKPOINT_VERSION:
        raise DataError(f"unsupported checkpoint version {version}")
    kind = str(d.pop("__kind__"))
    config = json.loads(str(d.pop("__config__")))
    if kind == "ActorCritic":
        s_dim, a_dim = (int(x) for x in d.pop("__dims__"))
        agent = ActorCritic(s_dim, a_dim, ActorCriticConfig(**config))
    elif kind == "TabularQAgent":
        q = d["q"]
        agent = TabularQAgent(q.shape[0], q.shape[1], TabularQConfig(**config))
    else:
        raise DataError(f"unknown checkpoint kind {kind!r}")
    agent.load_state_dict(d)
    return agent
