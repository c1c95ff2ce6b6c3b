"""Training loop and analysis experiments.

``train`` runs the imitation loop: roll out with exploration, turn the
finished episode into proxy rewards against the expert trajectories, store
the transitions, and keep updating the learner from the replay buffer. The
other entry points reproduce the analyses: reward calibration under expert
noise, solver comparison, distances in the three occupancy spaces and
one-axis ablations.
"""

from __future__ import annotations

import csv
import io
import logging
import time
import warnings
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .agents import ActorCritic, ReplayBuffer, TabularQAgent, load_checkpoint, save_checkpoint
from .config import RunConfig
from .envs import (
    ExpertPolicySpec,
    ObservationOnlyEnv,
    expert_action,
    expert_rollout,
    generate_experts,
    make_env,
    read_trajectories,
    write_trajectories,
)
from .exceptions import DataError, DivergenceError, InputError
from .ot_core import (
    DistanceMetricSpec,
    SinkhornConfig,
    Trajectory,
    atomize,
    cost_matrix,
    greedy_coupling,
    sinkhorn,
    transport_cost,
)
from .rewards import (
    IDENTITY_TOL,
    ExpertDataset,
    RewardConfig,
    episode_rewards,
    optimal_cost,
)

log = logging.getLogger(__name__)

METRICS_HEADER = [
    "step",
    "true_return_mean",
    "true_return_std",
    "proxy_return_mean",
    "sinkhorn_distance",
    "wall_clock_s",
]
EPISODES_HEADER = ["episode", "step", "length", "proxy_return", "distance_value", "identity_gap", "matched_expert"]
CALIBRATION_HEADER = ["noise_std", "true_return_mean", "proxy_return_mean"]
SWEEP_HEADER = ["solver", "lambda", "mean_distance"]
ABLATION_HEADER = ["axis", "value", "normalized_return_mean", "normalized_return_std", "percent_difference"]
OCCUPANCY_HEADER = ["policy", "s", "ss", "sa"]

DEFAULT_NOISE_GRID = tuple(round(0.1 * i, 10) for i in range(16))
DEFAULT_LAMBDA_GRID = tuple(float(x) for x in np.logspace(-3, 0, 16))


def _fmt(x) -> str:
    if x is None or x == "":
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([row[h] if isinstance(row[h], str) else _fmt(row[h]) for h in header])


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([row[h] if isinstance(row[h], str) else _fmt(row[h]) for h in header])
    return buf.getvalue()


# --- rollouts ----------------------------------------------------------------


def load_experts(cfg: RunConfig, env=None) -> ExpertDataset:
    """Expert file (first ``n_experts`` lines) or freshly scripted experts."""
    if cfg.experts:
        trajs = read_trajectories(cfg.experts, limit=cfg.n_experts)
        if len(trajs) < cfg.n_experts:
            raise DataError(f"{cfg.experts} holds {len(trajs)} trajectories, {cfg.n_experts} requested")
        tag = str(cfg.experts)
    else:
        env = env or make_env(cfg.env, **cfg.env_kwargs)
        trajs = generate_experts(env, ExpertPolicySpec(), cfg.n_experts, seed=cfg.expert_seed)
        tag = "scripted"
    ds = ExpertDataset(trajs, env_id=cfg.env, expert_tag=tag)
    if env is not None and ds.state_dim != env.state_dim:
        raise DataError(f"expert state dim {ds.state_dim} does not match env {env.state_dim}")
    return ds


def rollout(env, policy: Callable, seed=None, max_steps=None):
    """Run ``policy(state) -> action`` for one episode on a raw env.

    Returns the trajectory (with action vectors), the true return and whether
    the episode ended in a terminal state.
    """
    state = env.reset(seed)
    states, actions = [state], []
    ret = 0.0
    done = False
    while not done and (max_steps is None or len(actions) < max_steps):
        a = policy(state)
        state, r, done = env.step(a)
        states.append(state)
        actions.append(env.one_hot(a) if env.discrete else np.asarray(a, dtype=np.float64))
        ret += r
    acts = np.array(actions) if actions else None
    return Trajectory(np.array(states), acts, true_return=ret), ret, env.is_terminal


def expert_policy(env, noise_std=0.0, seed=0):
    rng = np.random.default_rng([int(seed), 1])
    spec = ExpertPolicySpec(noise_std=noise_std)
    return lambda s: expert_action(env, s, spec, rng)


def random_policy(env, seed=0):
    rng = np.random.default_rng([int(seed), 3])
    return lambda s: env.random_action(rng)


def agent_policy(env, agent):
    if env.discrete:
        return lambda s: agent.act(env.cell_index(s))
    return lambda s: agent.act(s)


def reference_returns(env, seeds) -> tuple:
    """Mean true return of the clean scripted expert and of a random policy."""
    exp = [rollout(env, expert_policy(env, 0.0, s), s)[1] for s in seeds]
    rnd = [rollout(env, random_policy(env, s), s)[1] for s in seeds]
    return float(np.mean(exp)), float(np.mean(rnd))


def normalized_score(ret, expert_return, random_return) -> float:
    """0 for the random policy, 1 for the expert."""
    denom = expert_return - random_return
    if abs(denom) < 1e-12:
        return float("nan")
    return (np.asarray(ret) - random_return) / denom


def transition_rewards(table, mode: str, n_transitions: int) -> np.ndarray:
    """Per-transition rewards; state atoms give the first state's reward to step 0."""
    r = np.asarray(table.rewards, dtype=np.float64)
    if mode == "s":
        out = r[1:].copy()
        out[0] += r[0]
        return out
    if r.shape[0] != n_transitions:
        raise InputError(f"{r.shape[0]} rewards for {n_transitions} transitions")
    return r


# --- training ----------------------------------------------------------------


@dataclass
class RunResult:
    config: RunConfig
    metrics: list
    episodes: list
    agent: object
    experts: ExpertDataset
    expert_return: float
    random_return: float
    status: str = "ok"
    run_dir: Optional[Path] = None
    error: Optional[str] = None
    eval_trajectories: list = field(default_factory=list)

    @property
    def final_return(self) -> float:
        return self.metrics[-1]["true_return_mean"]

    @property
    def final_normalized(self) -> float:
        return float(normalized_score(self.final_return, self.expert_return, self.random_return))

    @property
    def best_normalized(self) -> float:
        """Highest normalized eval score over all checkpoints of the run."""
        return float(max(normalized_score(m["true_return_mean"], self.expert_return, self.random_return)
                         for m in self.metrics))

    @property
    def identity_violations(self) -> int:
        return sum(1 for e in self.episodes if e["identity_gap"] > IDENTITY_TOL)

    def metrics_csv(self) -> str:
        return csv_text(METRICS_HEADER, self.metrics)


def _eval_seeds(cfg: RunConfig):
    return [int(x) for x in np.random.default_rng([cfg.seed, 2]).integers(0, 2**31 - 1, size=cfg.eval_episodes)]


def evaluate(env, policy, seeds, experts, reward_cfg) -> tuple:
    returns, proxies, dists, trajs = [], [], [], []
    for s in seeds:
        tau, ret, _ = rollout(env, policy, s)
        table = episode_rewards(tau, experts, reward_cfg)
        returns.append(ret)
        proxies.append(table.proxy_return)
        dists.append(table.distance_value)
        trajs.append(tau)
    return returns, proxies, dists, trajs


def _run_dir(out_dir, seed) -> Path:
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S%fZ")
    d = Path(out_dir) / f"{stamp}_seed{seed}"
    n = 1
    while d.exists():
        d = Path(out_dir) / f"{stamp}_seed{seed}_{n}"
        n += 1
    d.mkdir(parents=True)
    return d


def train(cfg: RunConfig, out_dir=None) -> RunResult:
    """Run the imitation loop described by ``cfg``.

    Files are written only when ``out_dir`` is given: a fresh run directory
    holding ``config.snapshot``, ``metrics.csv``, ``episodes.csv``,
    ``timing.csv``, ``checkpoints/`` and ``trajectories/``. A diverging
    learner ends the run with ``status == "failed"``; metrics gathered so far
    are kept.
    """
    t0 = time.perf_counter()
    env = make_env(cfg.env, **cfg.env_kwargs)
    eval_env = make_env(cfg.env, **cfg.env_kwargs)
    learner_env = ObservationOnlyEnv(env)
    experts = load_experts(cfg, env)
    reward_cfg = cfg.reward.build()
    rng = np.random.default_rng([cfg.seed, 0])
    eval_seeds = _eval_seeds(cfg)
    expert_ret, random_ret = reference_returns(eval_env, eval_seeds)
    if env.discrete:
        agent = TabularQAgent(env.n_states, env.n_actions, cfg.tabular)
    else:
        agent = ActorCritic(env.state_dim, env.action_dim, cfg.actor_critic,
                            seed=int(rng.integers(2**31 - 1)))
    buffer = ReplayBuffer()
    total = cfg.steps
    metrics, episodes, timing = [], [], []
    run_dir = _run_dir(out_dir, cfg.seed) if out_dir is not None else None
    if run_dir is not None:
        (run_dir / "config.snapshot").write_text(cfg.to_json() + "\n", encoding="utf-8")
        if cfg.save_trajectories:
            write_trajectories(run_dir / "trajectories" / "experts.jsonl", experts.trajectories)

    last_eval = []

    def do_eval(step):
        returns, proxies, dists, trajs = evaluate(
            eval_env, agent_policy(eval_env, agent), eval_seeds, experts, reward_cfg
        )
        last_eval[:] = trajs
        wall = time.perf_counter() - t0
        metrics.append({
            "step": step,
            "true_return_mean": float(np.mean(returns)),
            "true_return_std": float(np.std(returns)),
            "proxy_return_mean": float(np.mean(proxies)),
            "sinkhorn_distance": float(np.mean(dists)),
            "wall_clock_s": wall if cfg.log_wall_clock else "",
        })
        timing.append({"step": step, "wall_clock_s": wall})

    status, error = "ok", None
    step = 0
    episode = 0
    try:
        do_eval(0)
        while step < total:
            step, episode = _train_episode(cfg, env, learner_env, agent, buffer, experts,
                                           reward_cfg, rng, step, episode, total, episodes, do_eval)
    except DivergenceError as exc:
        status, error = "failed", f"{exc} {exc.diagnostics}"
        log.warning("run diverged at step %d: %s", step, error)

    result = RunResult(cfg, metrics, episodes, agent, experts, expert_ret, random_ret,
                       status, run_dir, error, list(last_eval))
    if run_dir is not None:
        _write_run(result, timing)
    return result


def _train_episode(cfg, env, learner_env, agent, buffer, experts, reward_cfg, rng,
                   step, episode, total, episodes, do_eval):
    discrete = env.discrete
    state = learner_env.reset(int(rng.integers(2**31 - 1)))
    states, actions, true_rewards = [state], [], []
    done = False
    while not done and step < total:
        if discrete:
            eps = cfg.tabular.epsilon(step, total)
            a = agent.act(env.cell_index(state), explore=True, rng=rng, epsilon=eps)
        elif step < cfg.actor_critic.start_steps:
            a = env.random_action(rng)
        else:
            a = agent.act(state, explore=True, rng=rng)
        if cfg.reward_source == "true":
            # oracle mode: learner is trained on the hidden task reward
            state, r, done = env.step(a)
            true_rewards.append(r)
        else:
            state, done = learner_env.step(a)
        states.append(state)
        actions.append(env.one_hot(a) if discrete else np.asarray(a, dtype=np.float64))
        step += 1
        _learn(cfg, env, agent, buffer, rng)
        if step % cfg.eval_interval == 0:
            do_eval(step)
    tau = Trajectory(np.array(states), np.array(actions), id=episode)
    table = episode_rewards(tau, experts, reward_cfg)
    if cfg.reward_source == "true":
        rewards = np.array(true_rewards)
    else:
        rewards = transition_rewards(table, reward_cfg.mode, len(actions))
    buffer.push_episode(tau, rewards, terminal=env.is_terminal, episode_id=episode)
    episodes.append({
        "episode": episode,
        "step": step,
        "length": len(actions),
        "proxy_return": table.proxy_return,
        "distance_value": table.distance_value,
        "identity_gap": table.identity_gap(),
        "matched_expert": table.matched_expert_id,
    })
    return step, episode + 1


def _learn(cfg, env, agent, buffer, rng):
    if env.discrete:
        if len(buffer) == 0:
            return
        for _ in range(cfg.tabular.updates_per_step):
            b = buffer.sample(1, rng)
            agent.update({
                "s": env.cell_indices(b["s"]),
                "a": np.argmax(b["a"], axis=1),
                "s2": env.cell_indices(b["s2"]),
                "r": b["r"],
                "done": b["done"],
            })
    elif len(buffer) >= cfg.actor_critic.batch_size:
        agent.update(buffer.sample(cfg.actor_critic.batch_size, rng))


def _write_run(result: RunResult, timing) -> None:
    d = result.run_dir
    write_csv(d / "metrics.csv", METRICS_HEADER, result.metrics)
    write_csv(d / "episodes.csv", EPISODES_HEADER, result.episodes)
    write_csv(d / "timing.csv", ["step", "wall_clock_s"], timing)
    save_checkpoint(d / "checkpoints" / "final.npz", result.agent)
    if result.config.save_trajectories and result.eval_trajectories:
        write_trajectories(d / "trajectories" / "final_eval.jsonl", result.eval_trajectories)
    (d / "status").write_text(
        result.status + ("" if result.error is None else f"\n{result.error}") + "\n", encoding="utf-8"
    )


# --- calibration ------------------------------------------------------------


@dataclass
class CalibrationResult:
    rows: list
    spearman: float
    pearson: float

    def csv(self) -> str:
        return csv_text(CALIBRATION_HEADER, self.rows)


def calibrate(
    env_id: str = "pointmass",
    noise_grid: Sequence[float] = DEFAULT_NOISE_GRID,
    episodes_per_level: int = 5,
    reward_cfg: RewardConfig = RewardConfig(),
    n_experts: int = 1,
    expert_seed: int = 1000,
    experts: Optional[ExpertDataset] = None,
    env_kwargs: Optional[dict] = None,
) -> CalibrationResult:
    """Proxy vs true return of noisy experts across a grid of noise levels.

    Each level rolls out the scripted expert with Gaussian action noise (or
    random-action probability on the grid) from the same start seeds as the
    clean expert data, so the noise-free level reproduces those starts.
    """
    env = make_env(env_id, **(env_kwargs or {}))
    if experts is None:
        experts = ExpertDataset(generate_experts(env, ExpertPolicySpec(), n_experts, seed=expert_seed))
    rows = []
    for noise in noise_grid:
        trues, proxies = [], []
        for k in range(episodes_per_level):
            seed = expert_seed + k
            tau = expert_rollout(env, ExpertPolicySpec(noise_std=float(noise)), seed=seed)
            trues.append(tau.true_return)
            proxies.append(episode_rewards(tau, experts, reward_cfg).proxy_return)
        rows.append({
            "noise_std": float(noise),
            "true_return_mean": float(np.mean(trues)),
            "proxy_return_mean": float(np.mean(proxies)),
        })
    t = [r["true_return_mean"] for r in rows]
    p = [r["proxy_return_mean"] for r in rows]
    if len(rows) > 1:
        spearman = float(stats.spearmanr(t, p).statistic)
        pearson = float(stats.pearsonr(t, p).statistic)
    else:
        spearman = pearson = float("nan")
    return CalibrationResult(rows, spearman, pearson)


# --- solver sweep -----------------------------------------------------------


@dataclass
class SweepResult:
    rows: list
    per_pair: dict

    def csv(self) -> str:
        return csv_text(SWEEP_HEADER, self.rows)


def solver_sweep(
    pairs: Sequence[tuple],
    lambda_grid: Sequence[float] = DEFAULT_LAMBDA_GRID,
    reward_cfg: RewardConfig = RewardConfig(),
) -> SweepResult:
    """Transport cost of each solver on each ``(learner, expert)`` pair.

    ``per_pair`` maps ``"exact"``, ``"greedy"`` and ``("sinkhorn", lam)`` to
    arrays of per-pair costs; ``rows`` holds their means.
    """
    if not pairs:
        raise InputError("solver sweep needs at least one trajectory pair")
    per_pair = {"exact": [], "greedy": []}
    for lam in lambda_grid:
        per_pair[("sinkhorn", float(lam))] = []
    base = reward_cfg.solver.sinkhorn
    for tau_pi, tau_e in pairs:
        mu = atomize(tau_pi, reward_cfg.mode)
        nu = atomize(tau_e, reward_cfg.mode)
        C = cost_matrix(mu, nu, reward_cfg.metric)
        per_pair["exact"].append(optimal_cost(C, mu.weights, nu.weights))
        per_pair["greedy"].append(transport_cost(C, greedy_coupling(C, mu.weights, nu.weights)))
        for lam in lambda_grid:
            cfg = SinkhornConfig(float(lam), base.max_iterations, base.marginal_tolerance)
            per_pair[("sinkhorn", float(lam))].append(
                transport_cost(C, sinkhorn(C, mu.weights, nu.weights, cfg))
            )
    per_pair = {k: np.array(v) for k, v in per_pair.items()}
    rows = [{"solver": "sinkhorn", "lambda": float(lam), "mean_distance": float(per_pair[("sinkhorn", float(lam))].mean())}
            for lam in lambda_grid]
    rows.append({"solver": "greedy", "lambda": "", "mean_distance": float(per_pair["greedy"].mean())})
    rows.append({"solver": "exact", "lambda": "", "mean_distance": float(per_pair["exact"].mean())})
    return SweepResult(rows, per_pair)


def rollout_pairs(env_id="pointmass", n_pairs=100, seed=0, max_noise=1.5, env_kwargs=None) -> list:
    """``(noisy expert rollout, clean expert rollout)`` pairs with random noise."""
    env = make_env(env_id, **(env_kwargs or {}))
    rng = np.random.default_rng([seed, 4])
    pairs = []
    for k in range(n_pairs):
        noise = float(rng.uniform(0.0, max_noise))
        s1, s2 = (int(x) for x in rng.integers(0, 2**31 - 1, size=2))
        learner = expert_rollout(env, ExpertPolicySpec(noise_std=noise), seed=s1)
        expert = expert_rollout(env, ExpertPolicySpec(), seed=s2)
        pairs.append((learner, expert))
    return pairs


# --- occupancy-space evaluation --------------------------------------------


def occupancy_eval(
    env,
    policy: Callable,
    experts: ExpertDataset,
    metric: DistanceMetricSpec = DistanceMetricSpec(),
    episodes: int = 10,
    seed: int = 0,
) -> dict:
    """Mean optimal transport distance to the experts in (s), (s,s'), (s,a).

    Each of ``episodes`` policy rollouts is compared with every expert
    trajectory and the results averaged. The ``sa`` entry is left out, with a
    warning, when expert actions are missing.
    """
    seeds = [int(x) for x in np.random.default_rng([seed, 5]).integers(0, 2**31 - 1, size=episodes)]
    trajs = [rollout(env, policy, s)[0] for s in seeds]
    modes = ["s", "ss"]
    if all(t.actions is not None for t in experts.trajectories):
        modes.append("sa")
    else:
        warnings.warn("experts carry no actions; (s,a) distance omitted", stacklevel=2)
    out = {}
    for mode in modes:
        vals = []
        for tau in trajs:
            mu = atomize(tau, mode)
            for tau_e in experts.trajectories:
                nu = atomize(tau_e, mode)
                v = optimal_cost(cost_matrix(mu, nu, metric), mu.weights, nu.weights)
                vals.append(np.sqrt(v) if metric.p == 2 else v)
        out[mode] = float(np.mean(vals))
    return out


def occupancy_eval_checkpoint(checkpoint, cfg: RunConfig, metric=DistanceMetricSpec(), episodes=10, seed=0) -> dict:
    env = make_env(cfg.env, **cfg.env_kwargs)
    agent = load_checkpoint(checkpoint)
    experts = load_experts(cfg, env)
    return occupancy_eval(env, agent_policy(env, agent), experts, metric, episodes, seed)


# --- ablations ----------------------------------------------------------------

ABLATION_AXES = {
    "occupancy": "reward.mode",
    "solver": "reward.solver",
    "lambda": "reward.lam",
    "metric": None,
}

METRIC_VARIANTS = {
    "W1-sqrt-euclidean": ("sqrt-euclidean", 1),
    "W1-euclidean": ("euclidean", 1),
    "W2-euclidean": ("euclidean", 2),
    "W1-cosine": ("cosine", 1),
}


def ablation_variant(cfg: RunConfig, axis: str, value) -> RunConfig:
    if axis not in ABLATION_AXES:
        raise InputError(f"unknown ablation axis {axis!r}")
    if axis == "metric":
        if value not in METRIC_VARIANTS:
            raise InputError(f"unknown metric variant {value!r}; pick from {sorted(METRIC_VARIANTS)}")
        base, p = METRIC_VARIANTS[value]
        return cfg.replace(**{"reward.metric": base, "reward.p": p})
    if axis == "lambda":
        value = float(value)
    return cfg.replace(**{ABLATION_AXES[axis]: value})


def _current_value(cfg: RunConfig, axis: str):
    r = cfg.reward
    return {
        "occupancy": r.mode,
        "solver": r.solver,
        "lambda": float(r.lam),
        "metric": f"W{r.p}-{r.metric}",
    }[axis]


@dataclass
class AblationResult:
    rows: list
    runs: dict

    def csv(self) -> str:
        return csv_text(ABLATION_HEADER, self.rows)


def ablation_grid(base: RunConfig, axis: str, values: Sequence, seeds: Sequence[int] = (0,)) -> AblationResult:
    """Final normalized return per axis value and its percent difference from the default.

    The default is the value ``base`` already has on that axis; it is run
    as well when missing from ``values`` (but only listed if requested).
    """
    default = _current_value(base, axis)
    values = list(values)
    norm = (lambda v: float(v)) if axis == "lambda" else (lambda v: v)
    to_run = list(values)
    if norm(default) not in [norm(v) for v in values]:
        to_run.append(default)
    runs, scores = {}, {}
    for v in to_run:
        cfg_v = ablation_variant(base, axis, v)
        results = [train(cfg_v.replace(seed=s)) for s in seeds]
        runs[norm(v)] = results
        scores[norm(v)] = np.array([r.final_normalized for r in results])
    ref = scores[norm(default)].mean()
    rows = []
    for v in values:
        sc = scores[norm(v)]
        rows.append({
            "axis": axis,
            "value": str(v),
            "normalized_return_mean": float(sc.mean()),
            "normalized_return_std": float(sc.std()),
            "percent_difference": float(100.0 * (sc.mean() - ref) / abs(ref)) if ref != 0 else float("nan"),
        })
    return AblationResult(rows, runs)


# --- estimator facade ----------------------------------------------------------


class OOPSImitator(BaseEstimator):
    """Imitate state-only expert trajectories on a desk-scale environment.

    ``fit(X)`` takes a list of expert trajectories (``Trajectory`` objects or
    ``(T+1, state_dim)`` arrays) and trains the learner with proxy rewards.
    ``predict`` maps states to greedy actions and ``score`` returns the
    expert-normalized true return of the trained policy.
    """

    def __init__(self, env="gridworld", total_steps=None, lam=0.05, solver="sinkhorn",
                 mode="ss", metric="sqrt-euclidean", p=1, eval_interval=5000,
                 eval_episodes=10, seed=0):
        self.env = env
        self.total_steps = total_steps
        self.lam = lam
        self.solver = solver
        self.mode = mode
        self.metric = metric
        self.p = p
        self.eval_interval = eval_interval
        self.eval_episodes = eval_episodes
        self.seed = seed

    def _run_config(self) -> RunConfig:
        return RunConfig(env=self.env, total_steps=self.total_steps, eval_interval=self.eval_interval,
                         eval_episodes=self.eval_episodes, seed=self.seed).replace(**{
                             "reward.lam": self.lam, "reward.solver": self.solver,
                             "reward.mode": self.mode, "reward.metric": self.metric, "reward.p": self.p,
                         })

    def fit(self, X, y=None):
        trajs = [x if isinstance(x, Trajectory) else Trajectory(check_array(x), id=i)
                 for i, x in enumerate(X)]
        cfg = self._run_config()
        env = make_env(cfg.env, **cfg.env_kwargs)
        experts = ExpertDataset(trajs, env_id=cfg.env)
        if experts.state_dim != env.state_dim:
            raise InputError(f"expert states have {experts.state_dim} features, env has {env.state_dim}")
        self.result_ = _train_with_experts(cfg, experts)
        self.agent_ = self.result_.agent
        self.env_ = env
        self.n_features_in_ = env.state_dim
        return self

    def predict(self, X):
        check_is_fitted(self, "agent_")
        X = check_array(X)
        policy = agent_policy(self.env_, self.agent_)
        return np.array([policy(x) for x in X])

    def score(self, X=None, y=None) -> float:
        check_is_fitted(self, "result_")
        return self.result_.final_normalized


def _train_with_experts(cfg: RunConfig, experts: ExpertDataset) -> RunResult:
    import tempfile

    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "experts.jsonl"
        write_trajectories(path, experts.trajectories)
        return train(cfg.replace(experts=str(path), n_experts=len(experts)))
