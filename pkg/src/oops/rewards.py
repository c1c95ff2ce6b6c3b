"""Per-timestep imitation rewards from an optimal transport coupling.

Given a learner episode and expert state trajectories, the reward of step
``t`` is minus the cost that the coupling moves out of learner atom ``t``:

    r_t = -scale * sum_j C[t, j] * P[t, j]

so the episode's reward sum is exactly minus the (scaled) transport cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import linprog
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import DimensionError, InputError, UnsupportedInstanceError
from .ot_core import (
    Coupling,
    DistanceMetricSpec,
    SinkhornConfig,
    SolverSpec,
    Trajectory,
    atomize,
    canonical_mode,
    cost_matrix,
    exact_w1,
    solve,
    transport_cost,
)

IDENTITY_TOL = 1e-9


@dataclass
class ExpertDataset:
    trajectories: list
    env_id: str = ""
    expert_tag: str = ""

    def __post_init__(self):
        self.trajectories = list(self.trajectories)
        if not self.trajectories:
            raise InputError("expert dataset is empty")
        dims = {t.state_dim for t in self.trajectories}
        if len(dims) != 1:
            raise DimensionError(f"expert trajectories disagree on state dim: {sorted(dims)}")

    def __len__(self):
        return len(self.trajectories)

    def __getitem__(self, i):
        return self.trajectories[i]

    @property
    def state_dim(self) -> int:
        return self.trajectories[0].state_dim

    def subset(self, k: int) -> "ExpertDataset":
        """First ``k`` trajectories in file order."""
        return ExpertDataset(self.trajectories[:k], self.env_id, self.expert_tag)

    @property
    def mean_return(self) -> float:
        rets = [t.true_return for t in self.trajectories if t.true_return is not None]
        return float(np.mean(rets)) if rets else float("nan")


@dataclass(frozen=True)
class RewardConfig:
    mode: str = "ss"
    metric: DistanceMetricSpec = field(default_factory=DistanceMetricSpec)
    solver: SolverSpec = field(default_factory=SolverSpec)
    expert_selection: str = "closest"
    reward_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "mode", canonical_mode(self.mode))
        if self.expert_selection not in ("closest", "average"):
            raise InputError(f"unknown expert selection {self.expert_selection!r}")
        if not self.reward_scale > 0:
            raise InputError("reward_scale must be positive")


@dataclass(frozen=True, eq=False)
class RewardTable:
    """Proxy rewards for one learner episode.

    ``distance_value`` is the unscaled transport cost under ``coupling``;
    ``-sum(rewards) == reward_scale * distance_value`` up to round-off.
    """

    rewards: np.ndarray
    matched_expert_id: int
    distance_value: float
    coupling_residual: float
    reward_scale: float = 1.0
    coupling: Optional[Coupling] = None
    expert_distances: tuple = ()

    @property
    def proxy_return(self) -> float:
        return float(np.sum(self.rewards))

    def identity_gap(self) -> float:
        return abs(self.proxy_return + self.reward_scale * self.distance_value)


@dataclass(frozen=True, eq=False)
class _Match:
    cost: np.ndarray
    coupling: Coupling
    value: float


def _match(tau_pi: Trajectory, tau_e: Trajectory, cfg: RewardConfig) -> _Match:
    mu = atomize(tau_pi, cfg.mode)
    nu = atomize(tau_e, cfg.mode)
    C = cost_matrix(mu, nu, cfg.metric)
    P = solve(C, mu.weights, nu.weights, cfg.solver)
    return _Match(C, P, transport_cost(C, P))


def _as_dataset(experts) -> ExpertDataset:
    if isinstance(experts, ExpertDataset):
        return experts
    if isinstance(experts, Trajectory):
        return ExpertDataset([experts])
    return ExpertDataset(list(experts))


def _step_rewards(match: _Match, scale: float) -> np.ndarray:
    return -scale * np.sum(match.cost * match.coupling.matrix, axis=1)


def select_expert(tau_pi: Trajectory, experts, cfg: RewardConfig = RewardConfig()):
    """Index and distance of the closest expert (lowest index on ties)."""
    experts = _as_dataset(experts)
    values = [_match(tau_pi, tau_e, cfg).value for tau_e in experts]
    idx = int(np.argmin(values))
    value = values[idx]
    return idx, (math.sqrt(value) if cfg.metric.p == 2 else value)


def episode_rewards(tau_pi: Trajectory, experts, cfg: RewardConfig = RewardConfig()) -> RewardTable:
    """Reward table of one learner episode against the expert dataset.

    ``closest`` takes the rewards of the minimum-cost expert; ``average``
    averages the reward tables of all experts (``distance_value`` is then the
    mean cost and ``coupling`` the closest expert's plan).
    """
    experts = _as_dataset(experts)
    matches = [_match(tau_pi, tau_e, cfg) for tau_e in experts]
    values = np.array([m.value for m in matches])
    idx = int(np.argmin(values))
    best = matches[idx]
    if cfg.expert_selection == "closest" or len(matches) == 1:
        rewards = _step_rewards(best, cfg.reward_scale)
        distance = best.value
        residual = best.coupling.residual
    else:
        rewards = np.mean([_step_rewards(m, cfg.reward_scale) for m in matches], axis=0)
        distance = float(np.mean(values))
        residual = max(m.coupling.residual for m in matches)
    return RewardTable(
        rewards=rewards,
        matched_expert_id=int(experts[idx].id),
        distance_value=float(distance),
        coupling_residual=float(residual),
        reward_scale=cfg.reward_scale,
        coupling=best.coupling,
        expert_distances=tuple(float(v) for v in values),
    )


def optimal_cost(C: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    """Minimum transport cost; assignment when square-uniform, LP otherwise."""
    try:
        return exact_w1(C, a, b)[1]
    except UnsupportedInstanceError:
        pass
    n, m = C.shape
    A_eq = np.vstack([np.kron(np.eye(n), np.ones((1, m))), np.kron(np.ones((1, n)), np.eye(m))])
    res = linprog(C.ravel(), A_eq=A_eq, b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs")
    if not res.success:
        raise InputError(f"transport LP failed: {res.message}")
    return float(res.fun)


def stale_bound_check(
    tau_new: Trajectory,
    stale: Coupling,
    tau_e: Trajectory,
    cfg: RewardConfig = RewardConfig(),
):
    """Check that the optimal cost of ``tau_new`` is bounded by a stale plan.

    ``stale`` is any coupling computed earlier for the same expert (for a
    different learner episode). Returns ``(lhs, rhs, holds)`` with ``lhs`` the
    optimal cost and ``rhs`` the cost of moving ``tau_new``'s atoms with the
    stale plan.
    """
    mu = atomize(tau_new, cfg.mode)
    nu = atomize(tau_e, cfg.mode)
    C = cost_matrix(mu, nu, cfg.metric)
    if C.shape != stale.shape:
        raise DimensionError(f"stale coupling {stale.shape} does not fit cost {C.shape}")
    lhs = optimal_cost(C, mu.weights, nu.weights)
    rhs = transport_cost(C, stale)
    return lhs, rhs, bool(lhs <= rhs + IDENTITY_TOL)


class OOPSRewarder(BaseEstimator):
    """Estimator wrapper: ``fit`` on expert trajectories, ``predict`` rewards.

    ``predict`` takes the state sequence of one learner episode (shape
    ``(T+1, state_dim)``) and returns the ``T`` per-transition rewards.
    ``score`` returns the proxy return, i.e. minus the scaled transport cost.

    Parameters
    ----------
    mode : {"ss", "s", "sa"}
        Atoms: transitions, states or state-action pairs.
    metric : {"sqrt-euclidean", "euclidean", "cosine"}
    p : {1, 2}
    solver : {"sinkhorn", "greedy", "exact"}
    lam : float
        Entropic regularization of the Sinkhorn solver.
    max_iter : int
    tol : float
        Marginal tolerance of the Sinkhorn solver.
    expert_selection : {"closest", "average"}
    reward_scale : float
    """

    def __init__(
        self,
        mode="ss",
        metric="sqrt-euclidean",
        p=1,
        solver="sinkhorn",
        lam=0.05,
        max_iter=20000,
        tol=1e-9,
        expert_selection="closest",
        reward_scale=1.0,
    ):
        self.mode = mode
        self.metric = metric
        self.p = p
        self.solver = solver
        self.lam = lam
        self.max_iter = max_iter
        self.tol = tol
        self.expert_selection = expert_selection
        self.reward_scale = reward_scale

    def _config(self) -> RewardConfig:
        return RewardConfig(
            mode=self.mode,
            metric=DistanceMetricSpec(self.metric, self.p),
            solver=SolverSpec(self.solver, SinkhornConfig(self.lam, self.max_iter, self.tol)),
            expert_selection=self.expert_selection,
            reward_scale=self.reward_scale,
        )

    def fit(self, X, y=None):
        """Store expert trajectories (Trajectory objects or state arrays)."""
        trajs = []
        for i, item in enumerate(X):
            if isinstance(item, Trajectory):
                trajs.append(item)
            else:
                trajs.append(Trajectory(check_array(item, ensure_min_samples=1), id=i))
        self.config_ = self._config()
        self.experts_ = ExpertDataset(trajs)
        self.n_features_in_ = self.experts_.state_dim
        return self

    def _trajectory(self, X, actions=None) -> Trajectory:
        check_is_fitted(self, "experts_")
        if isinstance(X, Trajectory):
            return X
        states = check_array(X, ensure_min_samples=1)
        if states.shape[1] != self.n_features_in_:
            raise DimensionError(
                f"X has {states.shape[1]} features, expected {self.n_features_in_}"
            )
        return Trajectory(states, actions)

    def reward_table(self, X, actions=None) -> RewardTable:
        return episode_rewards(self._trajectory(X, actions), self.experts_, self.config_)

    def predict(self, X, actions=None) -> np.ndarray:
        return self.reward_table(X, actions).rewards

    def transform(self, X, actions=None) -> np.ndarray:
        """Alias of ``predict`` returning a column vector."""
        return self.predict(X, actions)[:, None]

    def score(self, X, y=None) -> float:
        return self.reward_table(X).proxy_return

    def with_params(self, **params) -> "OOPSRewarder":
        """Refit copy with some parameters changed (same expert data)."""
        clone = type(self)(**{**self.get_params(), **params})
        return clone.fit(self.experts_.trajectories)

