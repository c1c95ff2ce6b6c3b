"""Central finite-difference oracle for the actor-critic gradients."""

import numpy as np

from oops.agents import actor_loss_and_grads, critic_loss_and_grads, init_mlp

H = 1e-5
REL_TOL = 1e-4
# Denominator floor: entries whose gradients are both below this are compared
# on an absolute scale, where FD round-off (~1e-11) dominates.
FLOOR = 1e-6


def _numeric(params, key, loss_fn):
    grad = np.zeros_like(params[key])
    it = np.nditer(params[key], flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = params[key][idx]
        params[key][idx] = old + H
        up = loss_fn()
        params[key][idx] = old - H
        down = loss_fn()
        params[key][idx] = old
        grad[idx] = (up - down) / (2 * H)
    return grad


def max_relative_error(analytic, numeric) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), FLOOR)
    return float(np.max(np.abs(analytic - numeric) / denom))


def random_problem(seed, s_dim=3, a_dim=2, hidden=8, batch=6):
    rng = np.random.default_rng(seed)
    actor = init_mlp(rng, s_dim, hidden, a_dim)
    critic = init_mlp(rng, s_dim + a_dim, hidden, 1)
    t_actor = init_mlp(rng, s_dim, hidden, a_dim)
    t_critic = init_mlp(rng, s_dim + a_dim, hidden, 1)
    batch = {
        "s": rng.normal(size=(batch, s_dim)),
        "a": rng.uniform(-1, 1, size=(batch, a_dim)),
        "s2": rng.normal(size=(batch, s_dim)),
        "r": rng.normal(size=batch),
        "done": rng.random(batch) < 0.3,
    }
    return actor, critic, t_actor, t_critic, batch


def check_seed(seed) -> dict:
    """Max relative error per parameter for the critic and actor losses."""
    actor, critic, t_actor, t_critic, batch = random_problem(seed)
    gamma = 0.99
    out = {}
    _, c_grads = critic_loss_and_grads(critic, t_actor, t_critic, batch, gamma)
    for k in critic:
        num = _numeric(critic, k, lambda: critic_loss_and_grads(critic, t_actor, t_critic, batch, gamma)[0])
        out[f"critic.{k}"] = max_relative_error(c_grads[k], num)
    _, a_grads = actor_loss_and_grads(actor, critic, batch["s"])
    for k in actor:
        num = _numeric(actor, k, lambda: actor_loss_and_grads(actor, critic, batch["s"])[0])
        out[f"actor.{k}"] = max_relative_error(a_grads[k], num)
    return out
