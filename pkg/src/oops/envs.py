"""Desk-scale environments with hidden true rewards and scripted experts."""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Union

import numpy as np

from .exceptions import DataError, EpisodeFinishedError, InputError
from .ot_core import Trajectory

UP, DOWN, LEFT, RIGHT = range(4)
_MOVES = {UP: (-1, 0), DOWN: (1, 0), LEFT: (0, -1), RIGHT: (0, 1)}


class PointMassEnv:
    """2-d point mass with velocity state ``(x, y, vx, vy)``.

    The true reward is the negative distance to the goal after each step.
    Episodes end at the horizon or once the mass is within ``goal_radius``
    of the goal.
    """

    state_dim = 4
    action_dim = 2
    discrete = False
    arena = 5.0
    max_speed = 2.0
    start_center = (-4.0, -4.0)
    start_spread = 0.5

    def __init__(self, goal=(-3.0, -3.0), dt=0.1, horizon=50, goal_radius=0.1):
        self.goal = np.asarray(goal, dtype=np.float64)
        self.dt = float(dt)
        self.horizon = int(horizon)
        self.goal_radius = float(goal_radius)
        self.action_low = -np.ones(2)
        self.action_high = np.ones(2)
        self._state = None
        self._t = 0
        self._done = True
        self.is_terminal = False

    def reset(self, seed=None) -> np.ndarray:
        rng = np.random.default_rng(seed)
        pos = np.asarray(self.start_center) + rng.uniform(
            -self.start_spread, self.start_spread, size=2
        )
        self._state = np.concatenate([pos, np.zeros(2)])
        self.is_terminal = False
        self._t = 0
        self._done = False
        return self._state.copy()

    def step(self, action):
        if self._done:
            raise EpisodeFinishedError("episode finished; call reset()")
        a = np.clip(np.asarray(action, dtype=np.float64).ravel(), -1.0, 1.0)
        x, v = self._state[:2], self._state[2:]
        v = np.clip(v + a * self.dt, -self.max_speed, self.max_speed)
        x = np.clip(x + v * self.dt, -self.arena, self.arena)
        self._state = np.concatenate([x, v])
        self._t += 1
        dist = float(np.linalg.norm(x - self.goal))
        self.is_terminal = dist < self.goal_radius
        self._done = self._t >= self.horizon or self.is_terminal
        return self._state.copy(), -dist, self._done

    def random_action(self, rng):
        return rng.uniform(-1.0, 1.0, size=2)


class GridWorldEnv:
    """N x N grid with walls; reward -1 per step until the goal is entered.

    States are exposed as ``(row / (N-1), col / (N-1))`` so that transport
    costs live in a normalized metric space; ``cell_index`` recovers the
    integer cell for tabular learners.
    """

    state_dim = 2
    n_actions = 4
    discrete = True

    def __init__(self, size=8, goal=None, walls=(), horizon=64, start=(0, 0)):
        self.size = int(size)
        self.start = tuple(start)
        self.goal = tuple(goal) if goal is not None else (self.size - 1, self.size - 1)
        self.walls = frozenset(tuple(w) for w in walls)
        self.horizon = int(horizon)
        for cell in (self.start, self.goal):
            if cell in self.walls or not self._inside(cell):
                raise InputError(f"cell {cell} must be a free in-grid cell")
        self.action_dim = self.n_actions
        self._cell = None
        self._t = 0
        self._done = True
        self.is_terminal = False

    @property
    def n_states(self) -> int:
        return self.size * self.size

    def _inside(self, cell) -> bool:
        return 0 <= cell[0] < self.size and 0 <= cell[1] < self.size

    def embed(self, cell) -> np.ndarray:
        scale = max(self.size - 1, 1)
        return np.array([cell[0] / scale, cell[1] / scale], dtype=np.float64)

    def cell_index(self, state) -> int:
        scale = max(self.size - 1, 1)
        r, c = (int(round(v * scale)) for v in np.asarray(state)[:2])
        return r * self.size + c

    def cell_indices(self, states) -> np.ndarray:
        scale = max(self.size - 1, 1)
        rc = np.rint(np.asarray(states)[:, :2] * scale).astype(np.intp)
        return rc[:, 0] * self.size + rc[:, 1]

    def reset(self, seed=None) -> np.ndarray:
        self._cell = self.start
        self.is_terminal = False
        self._t = 0
        self._done = False
        return self.embed(self._cell)

    def _move(self, cell, action):
        dr, dc = _MOVES[int(action)]
        nxt = (cell[0] + dr, cell[1] + dc)
        if not self._inside(nxt) or nxt in self.walls:
            return cell
        return nxt

    def step(self, action):
        if self._done:
            raise EpisodeFinishedError("episode finished; call reset()")
        if int(action) not in _MOVES:
            raise InputError(f"invalid action {action!r}")
        self._cell = self._move(self._cell, action)
        self._t += 1
        at_goal = self._cell == self.goal
        self.is_terminal = at_goal
        self._done = at_goal or self._t >= self.horizon
        return self.embed(self._cell), (0.0 if at_goal else -1.0), self._done

    def random_action(self, rng):
        return int(rng.integers(self.n_actions))

    def shortest_path_action(self, cell) -> int:
        """Lowest-index action that decreases the BFS distance to the goal."""
        dist = self._goal_distances()
        best = None
        for a in range(self.n_actions):
            nxt = self._move(cell, a)
            d = dist.get(nxt)
            if d is not None and (best is None or d < best[1]):
                best = (a, d)
        return best[0] if best is not None else UP

    def _goal_distances(self) -> dict:
        cache = getattr(self, "_dist_cache", None)
        if cache is not None:
            return cache
        dist = {self.goal: 0}
        queue = deque([self.goal])
        while queue:
            cell = queue.popleft()
            for dr, dc in _MOVES.values():
                prev = (cell[0] + dr, cell[1] + dc)
                if self._inside(prev) and prev not in self.walls and prev not in dist:
                    dist[prev] = dist[cell] + 1
                    queue.append(prev)
        self._dist_cache = dist
        return dist

    def one_hot(self, action) -> np.ndarray:
        out = np.zeros(self.n_actions)
        out[int(action)] = 1.0
        return out


class ObservationOnlyEnv:
    """Learner-facing view of an environment: ``step`` hides the true reward.

    The true return of the current episode is kept on the wrapper for
    evaluation code and is never passed to a learner.
    """

    def __init__(self, env):
        self._env = env
        self._true_return = 0.0

    def __getattr__(self, name):
        if name in ("step", "_env", "_true_return"):
            raise AttributeError(name)
        return getattr(self._env, name)

    def reset(self, seed=None):
        self._true_return = 0.0
        return self._env.reset(seed)

    def step(self, action):
        state, reward, done = self._env.step(action)
        self._true_return += reward
        return state, done

    def hidden_true_return(self) -> float:
        return self._true_return


@dataclass(frozen=True)
class ExpertPolicySpec:
    """Scripted expert plus action noise of scale ``noise_std``."""

    kind: str = "auto"
    noise_std: float = 0.0
    kp: float = 1.0
    kd: float = 0.8

    def __post_init__(self):
        if self.noise_std < 0:
            raise InputError("noise_std must be nonnegative")
        if self.kind not in ("auto", "pd-controller", "shortest-path"):
            raise InputError(f"unknown expert kind {self.kind!r}")


def make_env(env_id: str, **kwargs):
    if env_id == "pointmass":
        return PointMassEnv(**kwargs)
    if env_id == "gridworld":
        return GridWorldEnv(**kwargs)
    raise InputError(f"unknown environment {env_id!r}")


def expert_action(env, state, spec: ExpertPolicySpec, rng):
    if env.discrete:
        cell_idx = env.cell_index(state)
        cell = divmod(cell_idx, env.size)
        if spec.noise_std > 0 and rng.random() < min(spec.noise_std, 1.0):
            return env.random_action(rng)
        return env.shortest_path_action(cell)
    x, v = state[:2], state[2:]
    a = spec.kp * (env.goal - x) - spec.kd * v
    if spec.noise_std > 0:
        a = a + rng.normal(0.0, spec.noise_std, size=a.shape)
    return np.clip(a, -1.0, 1.0)


def expert_rollout(env, spec: ExpertPolicySpec = ExpertPolicySpec(), seed=0, traj_id=0) -> Trajectory:
    """Roll out the scripted expert; records states, action vectors and return."""
    rng = np.random.default_rng([int(seed), 1])
    state = env.reset(seed)
    states, actions = [state], []
    ret = 0.0
    done = False
    while not done:
        a = expert_action(env, state, spec, rng)
        state, r, done = env.step(a)
        states.append(state)
        actions.append(env.one_hot(a) if env.discrete else np.asarray(a, dtype=np.float64))
        ret += r
    return Trajectory(np.array(states), np.array(actions), id=traj_id, true_return=ret)


def generate_experts(env, spec: ExpertPolicySpec, count: int, seed: int = 0) -> list:
    return [expert_rollout(env, spec, seed=seed + i, traj_id=i) for i in range(count)]


# --- JSONL trajectory files --------------------------------------------------


def write_trajectories(path: Union[str, Path], trajectories: Iterable[Trajectory]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for tau in trajectories:
            fh.write(json.dumps(tau.to_dict(), separators=(",", ":")) + "\n")


def read_trajectories(path: Union[str, Path], limit: Optional[int] = None) -> list:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"trajectory file not found: {path}")
    out = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(Trajectory.from_dict(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise DataError(f"{path}:{lineno}: bad trajectory record ({exc})") from exc
            if limit is not None and len(out) >= limit:
                break
    if not out:
        raise DataError(f"no trajectories in {path}")
    return out
