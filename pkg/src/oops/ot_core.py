"""Discrete optimal transport between trajectory measures.

Trajectories are turned into uniform discrete measures (``atomize``), compared
through a ground cost (``cost_matrix``) and coupled by one of three solvers:
log-domain Sinkhorn, a greedy in-order matcher, or an exact assignment solver
for the equal-size uniform case. ``brute_force_w1`` enumerates permutations
and exists to check ``exact_w1``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .exceptions import (
    DimensionError,
    InputError,
    MissingActionsError,
    SizeError,
    UnsupportedInstanceError,
)

STATE = "s"
TRANSITION = "ss"
STATE_ACTION = "sa"
ATOMIZATIONS = (STATE, TRANSITION, STATE_ACTION)

_MODE_ALIASES = {
    "s": STATE,
    "state": STATE,
    "(s)": STATE,
    "ss": TRANSITION,
    "s,s'": TRANSITION,
    "(s,s')": TRANSITION,
    "transition": TRANSITION,
    "sa": STATE_ACTION,
    "s,a": STATE_ACTION,
    "(s,a)": STATE_ACTION,
    "state-action": STATE_ACTION,
}

SOLVERS = ("sinkhorn", "greedy", "exact")

_ZERO_NORM = 1e-12
_EXACT_TOL = 1e-12
BRUTE_FORCE_MAX_N = 8


def canonical_mode(mode: str) -> str:
    """Map user-facing atomization names onto ``"s"``, ``"ss"`` or ``"sa"``."""
    try:
        return _MODE_ALIASES[str(mode).replace(" ", "")]
    except KeyError:
        raise InputError(f"unknown atomization mode {mode!r}") from None


def _as_finite_2d(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be a 2-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States (T+1 rows) and optional actions (T rows) of one episode."""

    states: np.ndarray
    actions: Optional[np.ndarray] = None
    id: int = 0
    true_return: Optional[float] = None

    def __post_init__(self):
        states = _as_finite_2d(self.states, "states")
        if states.shape[0] == 0:
            raise InputError("trajectory needs at least one state")
        object.__setattr__(self, "states", states)
        if self.actions is not None:
            actions = _as_finite_2d(self.actions, "actions")
            if actions.shape[0] != states.shape[0] - 1:
                raise DimensionError(
                    f"expected {states.shape[0] - 1} actions, got {actions.shape[0]}"
                )
            object.__setattr__(self, "actions", actions)

    @property
    def horizon(self) -> int:
        return self.states.shape[0] - 1

    @property
    def state_dim(self) -> int:
        return self.states.shape[1]

    def to_dict(self) -> dict:
        out = {"id": int(self.id), "states": self.states.tolist()}
        if self.actions is not None:
            out["actions"] = self.actions.tolist()
        if self.true_return is not None:
            out["true_return"] = float(self.true_return)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "Trajectory":
        return cls(
            states=d["states"],
            actions=d.get("actions"),
            id=int(d.get("id", 0)),
            true_return=d.get("true_return"),
        )


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = _as_finite_2d(self.atoms, "atoms")
        weights = np.asarray(self.weights, dtype=np.float64).ravel()
        if weights.shape[0] != atoms.shape[0]:
            raise DimensionError("one weight per atom required")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise InputError("weights must be nonnegative and sum to 1")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    def __len__(self):
        return self.atoms.shape[0]

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]


@dataclass(frozen=True)
class DistanceMetricSpec:
    """Ground distance ``base`` raised to the transport order ``p``.

    Only the combinations used in the ablations are allowed: cosine with
    ``p=1`` and ``p=2`` with plain euclidean.
    """

    base: str = "sqrt-euclidean"
    p: int = 1

    def __post_init__(self):
        if self.base not in ("euclidean", "sqrt-euclidean", "cosine"):
            raise InputError(f"unknown distance base {self.base!r}")
        if self.p not in (1, 2):
            raise InputError("p must be 1 or 2")
        if self.p == 2 and self.base != "euclidean":
            raise InputError("p=2 is only defined with the euclidean base")

    @property
    def label(self) -> str:
        return f"W{self.p}-{self.base}"


@dataclass(frozen=True)
class SinkhornConfig:
    lam: float = 0.05
    max_iterations: int = 20000
    marginal_tolerance: float = 1e-9

    def __post_init__(self):
        if not self.lam > 0:
            raise InputError("lambda must be positive")
        if self.max_iterations < 1:
            raise InputError("max_iterations must be >= 1")
        if not self.marginal_tolerance > 0:
            raise InputError("marginal_tolerance must be positive")


@dataclass(frozen=True)
class SolverSpec:
    """Which coupling solver to run; ``sinkhorn`` carries its config."""

    name: str = "sinkhorn"
    sinkhorn: SinkhornConfig = field(default_factory=SinkhornConfig)

    def __post_init__(self):
        if self.name not in SOLVERS:
            raise InputError(f"unknown solver {self.name!r}")


@dataclass(frozen=True, eq=False)
class Coupling:
    matrix: np.ndarray
    a: np.ndarray
    b: np.ndarray
    solver: str
    residual: float
    iterations: int = 0

    @property
    def shape(self):
        return self.matrix.shape


def atomize(trajectory: Trajectory, mode: str = TRANSITION) -> DiscreteMeasure:
    """Uniform discrete measure over the atoms of ``trajectory``.

    ``"s"`` gives one atom per state, ``"ss"`` one ``[s_i, s_{i+1}]`` atom per
    transition and ``"sa"`` one ``[s_i, a_i]`` atom per step. A single-state
    trajectory has no transitions; it is treated as the one stationary
    transition ``[s_0, s_0]``.
    """
    mode = canonical_mode(mode)
    s = trajectory.states
    if mode == STATE:
        atoms = s
    elif mode == TRANSITION:
        atoms = np.hstack([s[:-1], s[1:]]) if len(s) > 1 else np.hstack([s, s])
    else:
        if trajectory.actions is None:
            raise MissingActionsError("state-action atoms need recorded actions")
        if len(s) < 2:
            raise InputError("state-action atoms need at least one step")
        atoms = np.hstack([s[:-1], trajectory.actions])
    n = atoms.shape[0]
    return DiscreteMeasure(atoms, np.full(n, 1.0 / n))


def _check_vec_pair(x, y):
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise DimensionError(f"length mismatch: {x.shape[0]} vs {y.shape[0]}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise InputError("non-finite vector entries")
    return x, y


def pairwise_distance(x, y, spec: DistanceMetricSpec = DistanceMetricSpec()) -> float:
    """Ground distance between two vectors (before raising to ``p``)."""
    x, y = _check_vec_pair(x, y)
    return float(_distance_matrix(x[None, :], y[None, :], spec.base)[0, 0])


def _distance_matrix(X: np.ndarray, Y: np.ndarray, base: str) -> np.ndarray:
    if base == "cosine":
        nx = np.linalg.norm(X, axis=1)
        ny = np.linalg.norm(Y, axis=1)
        zx = nx <= _ZERO_NORM
        zy = ny <= _ZERO_NORM
        denom = np.outer(np.where(zx, 1.0, nx), np.where(zy, 1.0, ny))
        D = np.clip(1.0 - (X @ Y.T) / denom, 0.0, 2.0)
        either = zx[:, None] | zy[None, :]
        both = zx[:, None] & zy[None, :]
        D = np.where(either, np.where(both, 0.0, 1.0), D)
        same = np.all(X[:, None, :] == Y[None, :, :], axis=2)
        return np.where(same, 0.0, D)
    diff = X[:, None, :] - Y[None, :, :]
    D = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    if base == "sqrt-euclidean":
        D = np.sqrt(D)
    return D


def cost_matrix(
    mu: DiscreteMeasure, nu: DiscreteMeasure, spec: DistanceMetricSpec = DistanceMetricSpec()
) -> np.ndarray:
    """``C[i, j] = d(mu_i, nu_j) ** p``."""
    if mu.dim != nu.dim:
        raise DimensionError(f"atom dimension mismatch: {mu.dim} vs {nu.dim}")
    D = _distance_matrix(mu.atoms, nu.atoms, spec.base)
    return D**2 if spec.p == 2 else D


def _check_problem(cost, a, b):
    C = np.asarray(cost, dtype=np.float64)
    if C.ndim != 2:
        raise DimensionError("cost must be a matrix")
    if not np.all(np.isfinite(C)):
        raise InputError("cost matrix contains non-finite entries")
    n, m = C.shape
    a = np.full(n, 1.0 / n) if a is None else np.asarray(a, dtype=np.float64).ravel()
    b = np.full(m, 1.0 / m) if b is None else np.asarray(b, dtype=np.float64).ravel()
    if a.shape[0] != n or b.shape[0] != m:
        raise DimensionError("marginals do not match cost shape")
    for w, name in ((a, "a"), (b, "b")):
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12 or not np.all(np.isfinite(w)):
            raise InputError(f"{name} is not a probability vector")
    return C, a, b


def marginal_residual(P: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    """L-infinity violation of both marginal constraints."""
    return float(max(np.max(np.abs(P.sum(1) - a)), np.max(np.abs(P.sum(0) - b))))


def _lse_rows(M: np.ndarray) -> np.ndarray:
    mx = M.max(axis=1)
    return mx + np.log(np.exp(M - mx[:, None]).sum(axis=1))


def round_to_marginals(P: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Project a near-feasible plan onto the exact marginals.

    Rows then columns are scaled down where they carry too much mass; the
    remaining row deficit is spread over columns in proportion to their
    deficit (rank-one correction), which keeps every entry nonnegative.
    """
    P = P * np.minimum(a / np.maximum(P.sum(1), 1e-300), 1.0)[:, None]
    P = P * np.minimum(b / np.maximum(P.sum(0), 1e-300), 1.0)[None, :]
    err_a = np.maximum(a - P.sum(1), 0.0)
    err_b = np.maximum(b - P.sum(0), 0.0)
    total = err_a.sum()
    if total > 0:
        P = P + np.outer(err_a, err_b) / total
    return P


def sinkhorn(cost, a=None, b=None, cfg: SinkhornConfig = SinkhornConfig()) -> Coupling:
    """Entropic OT plan via log-domain Sinkhorn iterations plus rounding.

    Iterates the dual potentials until the row marginal violation (columns
    are exact after each half-step) drops below ``cfg.marginal_tolerance`` or
    ``cfg.max_iterations`` is hit. A non-converged run is not an error; the
    rounding step still returns a feasible plan and ``residual`` reports the
    post-rounding violation.
    """
    C, a, b = _check_problem(cost, a, b)
    with np.errstate(divide="ignore"):
        loga, logb = np.log(a), np.log(b)
    f = np.zeros(C.shape[0])
    g = np.zeros(C.shape[1])
    budget = cfg.max_iterations
    tol = cfg.marginal_tolerance
    it = 0
    # Warm-start the potentials along a decreasing lambda schedule; the
    # fixed point at cfg.lam is unchanged, only the iteration count drops.
    for lam in _lambda_schedule(C, cfg.lam)[:-1]:
        f, g, used = _sinkhorn_stage(C, loga, logb, a, f, g, lam, max(tol, 1e-4), min(budget - it, 500))
        it += used
    lam = cfg.lam
    f, g, used = _sinkhorn_stage(C, loga, logb, a, f, g, lam, tol, min(budget - it, _PLAIN_ITERS))
    it += used
    if it < budget and _row_error(C, a, loga, f, g, lam) > tol:
        # Sinkhorn is linear (and slow on near-degenerate costs); finish with
        # Newton steps on the same dual, then fall back to plain iterations.
        f, g, used = _newton_polish(C, a, b, loga, g, lam, tol, budget - it)
        it += used
        if it < budget:
            f, g, used = _sinkhorn_stage(C, loga, logb, a, f, g, lam, tol, budget - it)
            it += used
    lam = cfg.lam
    P = np.exp((f[:, None] + g[None, :] - C) / lam)
    P = round_to_marginals(P, a, b)
    return Coupling(P, a, b, "sinkhorn", marginal_residual(P, a, b), it)


_PLAIN_ITERS = 200


def _row_error(C, a, loga, f, g, lam) -> float:
    L = _lse_rows(g[None, :] / lam - C / lam)
    return float(np.max(np.abs(np.exp(f / lam + L) - a)))


def _semi_dual(C, a, loga, b, g, lam):
    """Row-exact potentials ``f(g)``, plan, and the concave dual value."""
    f = lam * (loga - _lse_rows((g[None, :] - C) / lam))
    P = np.exp((f[:, None] + g[None, :] - C) / lam)
    return f, P, math.fsum(a * f) + math.fsum(b * g)


def _newton_polish(C, a, b, loga, g, lam, tol, max_iter):
    """Damped Newton ascent on the semi-dual in ``g``.

    Rows of the plan are exact for every ``g``; the gradient is the column
    marginal violation. Stops on ``tol``, on ``max_iter`` or when a step
    fails to increase the dual.
    """
    f, P, val = _semi_dual(C, a, loga, b, g, lam)
    used = 0
    if np.any(a <= 0):
        return f, g, used
    while used < max_iter:
        grad = b - P.sum(axis=0)
        if np.max(np.abs(grad)) <= tol:
            break
        H = (np.diag(P.sum(axis=0)) - P.T @ (P / a[:, None])) / lam
        step = np.linalg.lstsq(H, grad, rcond=1e-13)[0]
        t = 1.0
        while t > 1e-8:
            g_new = g + t * step
            f_new, P_new, val_new = _semi_dual(C, a, loga, b, g_new, lam)
            if np.all(np.isfinite(P_new)) and val_new >= val + 1e-4 * t * float(grad @ step):
                break
            t *= 0.5
        else:
            break
        used += 1
        if val_new <= val and np.max(np.abs(b - P_new.sum(axis=0))) >= np.max(np.abs(grad)):
            break
        g, f, P, val = g_new, f_new, P_new, val_new
    return f, g, used


def _lambda_schedule(C: np.ndarray, lam: float, factor: float = 0.5) -> list:
    start = float(C.max()) if C.size else lam
    out = []
    cur = start
    while cur > lam:
        out.append(cur)
        cur *= factor
    out.append(lam)
    return out


def _sinkhorn_stage(C, loga, logb, a, f, g, lam, tol, max_iter):
    Cl = C / lam
    used = 0
    while used < max_iter:
        L = _lse_rows(g[None, :] / lam - Cl)
        # row sums of the current plan come for free from the f half-step
        if used > 0 and np.max(np.abs(np.exp(f / lam + L) - a)) <= tol:
            break
        f = lam * (loga - L)
        g = lam * (logb - _lse_rows((f[:, None] / lam - Cl).T))
        used += 1
    return f, g, used


def greedy_coupling(cost, a=None, b=None) -> Coupling:
    """In-order greedy matching.

    Source atoms are visited in index (time) order; each pours its mass into
    the cheapest targets that still have capacity, lowest index first on
    ties, splitting mass when a target fills up.
    """
    C, a, b = _check_problem(cost, a, b)
    n, m = C.shape
    P = np.zeros((n, m))
    capacity = b.copy()
    for i in range(n):
        remaining = a[i]
        for j in np.argsort(C[i], kind="stable"):
            if remaining <= 0:
                break
            if capacity[j] <= 0:
                continue
            mass = min(remaining, capacity[j])
            P[i, j] += mass
            capacity[j] -= mass
            remaining -= mass
        if remaining > 0:
            # float leftovers: dump onto the target with the most spare room
            j = int(np.argmax(capacity))
            P[i, j] += remaining
            capacity[j] -= remaining
    return Coupling(P, a, b, "greedy", marginal_residual(P, a, b))


def _mean_matched_cost(C: np.ndarray, perm) -> float:
    n = C.shape[0]
    return math.fsum(C[i, perm[i]] for i in range(n)) / n


def _require_uniform_square(C, a, b):
    n, m = C.shape
    if n != m:
        raise UnsupportedInstanceError(f"exact solver needs n == m, got {n}x{m}")
    u = np.full(n, 1.0 / n)
    if not (np.allclose(a, u, rtol=0, atol=1e-15) and np.allclose(b, u, rtol=0, atol=1e-15)):
        raise UnsupportedInstanceError("exact solver needs uniform marginals")


def _exact_ints(C: np.ndarray) -> np.ndarray:
    """Integer matrix ``K`` with ``C == K * 2**E`` exactly (object dtype)."""
    mant, expo = np.frexp(C)
    mant = (mant * 2.0**53).astype(np.int64)
    expo = expo.astype(np.int64) - 53
    nz = mant != 0
    base = int(expo[nz].min()) if nz.any() else 0
    K = np.empty(C.shape, dtype=object)
    for idx in np.ndindex(C.shape):
        K[idx] = int(mant[idx]) << int(expo[idx] - base) if nz[idx] else 0
    return K


def _negative_cycle(W: np.ndarray):
    """A negative cycle of the complete digraph with weights ``W``, or None."""
    n = W.shape[0]
    dist = np.zeros(n, dtype=object)
    pred = np.full(n, -1)
    last = -1
    for _ in range(n):
        cand = dist[:, None] + W
        src = np.argmin(cand, axis=0)
        best = cand[src, np.arange(n)]
        better = np.array([b < d for b, d in zip(best, dist)])
        if not better.any():
            return None
        dist = np.where(better, best, dist)
        pred = np.where(better, src, pred)
        last = int(np.flatnonzero(better)[0])
    for _ in range(n):
        last = int(pred[last])
    cycle, node = [last], int(pred[last])
    while node != last:
        cycle.append(node)
        node = int(pred[node])
    return cycle[::-1]


def _polish_assignment(C: np.ndarray, perm: np.ndarray) -> np.ndarray:
    """Make ``perm`` exactly optimal for the float entries of ``C``.

    The float assignment solver can stop one ulp short among near-tied
    permutations. Costs are mapped to exact integers and negative cycles of
    the exchange graph (row ``i`` takes the column of row ``k``) are cancelled.
    """
    n = C.shape[0]
    if n < 2:
        return perm
    K = _exact_ints(C)
    perm = perm.copy()
    while True:
        W = K[:, perm] - K[np.arange(n), perm][:, None]
        cycle = _negative_cycle(W)
        if cycle is None:
            return perm
        cols = perm[cycle]
        perm[cycle] = np.roll(cols, -1)


def exact_w1(cost, a=None, b=None) -> tuple[Coupling, float]:
    """Optimal plan for equal-size uniform measures via linear assignment.

    With uniform equal marginals an optimal vertex of the transport polytope
    is a permutation scaled by ``1/n``, so the problem reduces to a minimum
    cost perfect matching. Returns the plan and ``sum(C[i, perm[i]]) / n``.
    """
    C, a, b = _check_problem(cost, a, b)
    _require_uniform_square(C, a, b)
    n = C.shape[0]
    rows, cols = linear_sum_assignment(C)
    perm = np.empty(n, dtype=int)
    perm[rows] = cols
    perm = _polish_assignment(C, perm)
    P = np.zeros_like(C)
    P[np.arange(n), perm] = 1.0 / n
    return Coupling(P, a, b, "exact", marginal_residual(P, a, b)), _mean_matched_cost(C, perm)


@lru_cache(maxsize=None)
def _permutations(n: int) -> np.ndarray:
    return np.array(list(itertools.permutations(range(n))), dtype=np.intp)


def brute_force_w1(cost) -> float:
    """Minimum mean matched cost over every permutation (n <= 8)."""
    C = np.asarray(cost, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise DimensionError("brute force needs a square cost matrix")
    n = C.shape[0]
    if n > BRUTE_FORCE_MAX_N:
        raise SizeError(f"brute force limited to n <= {BRUTE_FORCE_MAX_N}, got {n}")
    perms = _permutations(n)
    sums = C[np.arange(n)[None, :], perms].sum(axis=1)
    best = sums.min()
    slack = 1e-9 * max(1.0, abs(best))
    candidates = perms[sums <= best + slack]
    return min(_mean_matched_cost(C, p) for p in candidates)


def transport_cost(cost, coupling) -> float:
    """``sum_ij C[i, j] * P[i, j]``."""
    C = np.asarray(cost, dtype=np.float64)
    P = coupling.matrix if isinstance(coupling, Coupling) else np.asarray(coupling)
    if C.shape != P.shape:
        raise DimensionError(f"cost {C.shape} and coupling {P.shape} differ")
    return float(np.sum(C * P))


def solve(cost, a=None, b=None, solver: SolverSpec = SolverSpec()) -> Coupling:
    """Dispatch to the configured solver.

    The exact solver falls back to Sinkhorn with ``lam=1e-3`` when the
    instance is not square and uniform.
    """
    if solver.name == "greedy":
        return greedy_coupling(cost, a, b)
    if solver.name == "exact":
        try:
            return exact_w1(cost, a, b)[0]
        except UnsupportedInstanceError:
            return sinkhorn(cost, a, b, SinkhornConfig(lam=1e-3))
    return sinkhorn(cost, a, b, solver.sinkhorn)


def trajectory_distance(
    tau_pi: Trajectory,
    tau_e: Trajectory,
    mode: str = TRANSITION,
    spec: DistanceMetricSpec = DistanceMetricSpec(),
    solver: SolverSpec = SolverSpec(),
) -> tuple[float, Coupling]:
    """OT distance between two trajectories and the coupling that attains it.

    For ``p=2`` the value is the square root of the transport objective.
    """
    mu = atomize(tau_pi, mode)
    nu = atomize(tau_e, mode)
    C = cost_matrix(mu, nu, spec)
    P = solve(C, mu.weights, nu.weights, solver)
    value = transport_cost(C, P)
    if spec.p == 2:
        value = math.sqrt(value)
    return value, P


def sorted_matching_w1(x: Sequence[float], y: Sequence[float]) -> float:
    """Closed-form 1-d W1 between equal-size uniform samples."""
    xs = np.sort(np.asarray(x, dtype=np.float64).ravel())
    ys = np.sort(np.asarray(y, dtype=np.float64).ravel())
    if xs.shape != ys.shape:
        raise DimensionError("sorted matching needs equal sample sizes")
    return math.fsum(np.abs(xs - ys)) / xs.shape[0]
