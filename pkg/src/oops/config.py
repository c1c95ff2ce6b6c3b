"""Run configuration: dataclasses, JSON loading and dotted-key overrides.

Precedence is defaults < config file < ``--set`` overrides. Unknown keys are
rejected at every level.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from .agents import ActorCriticConfig, TabularQConfig
from .exceptions import ConfigError, DataError, OOPSError
from .ot_core import DistanceMetricSpec, SinkhornConfig, SolverSpec
from .rewards import RewardConfig

DEFAULT_STEPS = {"gridworld": 200_000, "pointmass": 100_000}


@dataclass(frozen=True)
class RewardSettings:
    """Flat, file-friendly view of ``RewardConfig``."""

    mode: str = "ss"
    metric: str = "sqrt-euclidean"
    p: int = 1
    solver: str = "sinkhorn"
    lam: float = 0.05
    max_iterations: int = 20000
    marginal_tolerance: float = 1e-9
    expert_selection: str = "closest"
    reward_scale: float = 1.0

    def __post_init__(self):
        self.build()

    def build(self) -> RewardConfig:
        return RewardConfig(
            mode=self.mode,
            metric=DistanceMetricSpec(self.metric, self.p),
            solver=SolverSpec(
                self.solver, SinkhornConfig(self.lam, self.max_iterations, self.marginal_tolerance)
            ),
            expert_selection=self.expert_selection,
            reward_scale=self.reward_scale,
        )


@dataclass(frozen=True)
class RunConfig:
    env: str = "gridworld"
    env_kwargs: dict = field(default_factory=dict)
    experts: Optional[str] = None
    n_experts: int = 1
    expert_seed: int = 1000
    reward: RewardSettings = field(default_factory=RewardSettings)
    reward_source: str = "oops"
    tabular: TabularQConfig = field(default_factory=TabularQConfig)
    actor_critic: ActorCriticConfig = field(default_factory=lambda: ActorCriticConfig(state_scale=0.2))
    total_steps: Optional[int] = None
    eval_interval: int = 5000
    eval_episodes: int = 10
    seed: int = 0
    log_wall_clock: bool = False
    save_trajectories: bool = True

    def __post_init__(self):
        if self.env not in DEFAULT_STEPS:
            raise ConfigError(f"unknown env {self.env!r}")
        if self.reward_source not in ("oops", "true"):
            raise ConfigError("reward_source must be 'oops' or 'true'")
        if self.n_experts < 1 or self.eval_interval < 1 or self.eval_episodes < 1:
            raise ConfigError("n_experts, eval_interval and eval_episodes must be positive")
        if self.total_steps is not None and self.total_steps < 0:
            raise ConfigError("total_steps must be nonnegative")

    @property
    def steps(self) -> int:
        return DEFAULT_STEPS[self.env] if self.total_steps is None else int(self.total_steps)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def replace(self, **changes) -> "RunConfig":
        """Copy with dotted-key changes, e.g. ``replace(**{"reward.lam": 0.5})``."""
        d = self.to_dict()
        for key, value in changes.items():
            set_dotted(d, key, value)
        return from_dict(RunConfig, d)


def _build(cls, data, path=""):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join((path + k) for k in unknown)}")
    kwargs = {}
    for name, value in data.items():
        f = fields[name]
        sub = _nested_type(f)
        kwargs[name] = _build(sub, value, f"{path}{name}.") if sub is not None else value
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (OOPSError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path or 'config'}: {exc}") from exc


_NESTED = {
    "reward": RewardSettings,
    "tabular": TabularQConfig,
    "actor_critic": ActorCriticConfig,
}


def _nested_type(f):
    return _NESTED.get(f.name)


def from_dict(cls, data: dict):
    return _build(cls, data)


def parse_value(text: str):
    """JSON literal if it parses, otherwise the raw string."""
    try:
        return json.loads(text)
    except (ValueError, TypeError):
        return text


def set_dotted(d: dict, key: str, value) -> None:
    parts = key.split(".")
    cur = d
    for p in parts[:-1]:
        if p not in cur or not isinstance(cur[p], dict):
            raise ConfigError(f"unknown config key: {key}")
        cur = cur[p]
    leaf = parts[-1]
    if leaf not in cur and not (len(parts) > 1 and parts[-2] == "env_kwargs"):
        raise ConfigError(f"unknown config key: {key}")
    cur[leaf] = value


def load_config(
    path: Optional[Union[str, Path]] = None, overrides=(), base: Optional[dict] = None
) -> RunConfig:
    """Layer defaults, an optional JSON file and ``key=value`` overrides."""
    d = RunConfig().to_dict()
    if base:
        for k, v in base.items():
            set_dotted(d, k, v)
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise DataError(f"config file not found: {p}")
        try:
            file_data = json.loads(p.read_text(encoding="utf-8"))
        except ValueError as exc:
            raise ConfigError(f"{p}: invalid JSON ({exc})") from exc
        _merge(d, file_data, "")
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        set_dotted(d, key.strip(), parse_value(raw.strip()))
    return from_dict(RunConfig, d)


def _merge(dst: dict, src: dict, path: str) -> None:
    if not isinstance(src, dict):
        raise ConfigError(f"{path or 'config'}: expected an object")
    for k, v in src.items():
        if k not in dst:
            raise ConfigError(f"unknown config key: {path}{k}")
        if isinstance(dst[k], dict) and isinstance(v, dict) and k != "env_kwargs":
            _merge(dst[k], v, f"{path}{k}.")
        else:
            dst[k] = v
