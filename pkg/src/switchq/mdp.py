# Finite MDPs, sampling distributions, occupation measures, and the optimal
# Q-function solver. Q-functions are flat vectors in action-major order:
# entry (a * n_states + s) holds Q(s, a).
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PROB_ATOL = 1e-12      # row-stochasticity tolerance for in-memory instances
FILE_PROB_ATOL = 1e-9  # looser tolerance when loading from JSON


def pair_index(s, a, n_states: int):
    """Flat index of state-action pair (s, a) in action-major order."""
    return a * n_states + s


@dataclass(frozen=True)
class Mdp:
    """Finite MDP: transition tensor P(s,a,s'), reward tensor r(s,a,s'), discount."""

    transition: np.ndarray  # (S, A, S)
    reward: np.ndarray      # (S, A, S)
    gamma: float

    def __post_init__(self):
        p = np.array(self.transition, dtype=float)
        r = np.array(self.reward, dtype=float)
        if p.ndim != 3 or p.shape[0] != p.shape[2]:
            raise ValueError(f"transition tensor must have shape (S, A, S), got {p.shape}")
        if r.shape != p.shape:
            raise ValueError(f"reward tensor shape {r.shape} != transition shape {p.shape}")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"discount must lie in [0, 1), got {self.gamma}")
        p.flags.writeable = False
        r.flags.writeable = False
        object.__setattr__(self, "transition", p)
        object.__setattr__(self, "reward", r)

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def n_pairs(self) -> int:
        return self.n_states * self.n_actions

    @property
    def r_max(self) -> float:
        return float(np.max(np.abs(self.reward)))


@dataclass(frozen=True)
class SamplingModel:
    """I.i.d. observation model: state distribution p and behavior policy beta(a|s)."""

    state_dist: np.ndarray       # (S,)
    behavior_policy: np.ndarray  # (S, A), rows are beta(.|s)

    def __post_init__(self):
        p = np.array(self.state_dist, dtype=float)
        b = np.array(self.behavior_policy, dtype=float)
        if p.ndim != 1 or b.ndim != 2 or b.shape[0] != p.shape[0]:
            raise ValueError(f"incompatible sampling shapes p={p.shape}, beta={b.shape}")
        p.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "state_dist", p)
        object.__setattr__(self, "behavior_policy", b)

    @property
    def n_states(self) -> int:
        return self.state_dist.shape[0]

    @property
    def n_actions(self) -> int:
        return self.behavior_policy.shape[1]


@dataclass(frozen=True)
class OccupationMeasure:
    """Per-pair sampling frequencies d(s,a) = p(s) beta(a|s), action-major."""

    d: np.ndarray

    def __post_init__(self):
        d = np.array(self.d, dtype=float)
        d.flags.writeable = False
        object.__setattr__(self, "d", d)

    @property
    def d_min(self) -> float:
        return float(self.d.min())

    @property
    def d_max(self) -> float:
        return float(self.d.max())


@dataclass(frozen=True)
class DeterministicPolicy:
    """State-to-action map; actions[s] is the 0-based action taken in state s."""

    actions: np.ndarray

    def __post_init__(self):
        a = np.array(self.actions, dtype=np.int64)
        a.flags.writeable = False
        object.__setattr__(self, "actions", a)

    @property
    def n_states(self) -> int:
        return self.actions.shape[0]


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class ValidationReport:
    checks: list[Check] = field(default_factory=list)

    def add(self, name: str, passed: bool, detail: str = "") -> None:
        self.checks.append(Check(name, bool(passed), detail))

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]


def validate_mdp(mdp: Mdp, sampling: SamplingModel, enforce_unit_bounds: bool = True) -> ValidationReport:
    """Check the model against the standing assumptions.

    Verifies row-stochasticity and nonnegativity of P, |r| <= 1
    (skipped when enforce_unit_bounds is False), gamma in [0, 1),
    normalization of p and beta, and strict positivity of every
    occupation frequency d(s,a) = p(s) beta(a|s).
    """
    rep = ValidationReport()
    P, R = mdp.transition, mdp.reward
    S, A = mdp.n_states, mdp.n_actions

    row_sums = P.sum(axis=2)
    bad = np.argwhere(np.abs(row_sums - 1.0) > PROB_ATOL)
    rep.add("transition_stochastic", bad.size == 0,
            "" if bad.size == 0 else f"row (s={bad[0][0]}, a={bad[0][1]}) sums to {row_sums[tuple(bad[0])]!r}")
    neg = np.argwhere(P < 0)
    rep.add("transition_nonnegative", neg.size == 0,
            "" if neg.size == 0 else f"P{tuple(neg[0])} = {P[tuple(neg[0])]!r}")

    r_max = mdp.r_max
    if enforce_unit_bounds:
        idx = np.unravel_index(np.argmax(np.abs(R)), R.shape)
        rep.add("reward_bounded", r_max <= 1.0,
                "" if r_max <= 1.0 else f"R_max={r_max!r} at (s,a,s')={tuple(int(i) for i in idx)}")
    else:
        rep.add("reward_bounded", True, f"relaxed mode, R_max={r_max!r}")

    rep.add("discount_range", 0.0 <= mdp.gamma < 1.0, f"gamma={mdp.gamma!r}")

    p, b = sampling.state_dist, sampling.behavior_policy
    rep.add("state_dist_shape", p.shape == (S,) and b.shape == (S, A),
            f"p {p.shape}, beta {b.shape}, expected ({S},) and ({S},{A})")
    rep.add("state_dist_normalized", abs(p.sum() - 1.0) <= PROB_ATOL and (p >= 0).all(),
            f"sum={p.sum()!r}")
    brows = b.sum(axis=1)
    bad_b = np.argwhere(np.abs(brows - 1.0) > PROB_ATOL)
    rep.add("behavior_rows_normalized", bad_b.size == 0 and (b >= 0).all(),
            "" if bad_b.size == 0 else f"row s={bad_b[0][0]} sums to {brows[bad_b[0][0]]!r}")

    if p.shape == (S,) and b.shape == (S, A):
        d = p[:, None] * b
        zero = np.argwhere(d <= 0)
        rep.add("occupation_positive", zero.size == 0,
                "" if zero.size == 0 else f"d(s={zero[0][0]}, a={zero[0][1]}) = 0")
    else:
        rep.add("occupation_positive", False, "shape mismatch")
    return rep


def occupation_measure(sampling: SamplingModel) -> OccupationMeasure:
    """Action-major vector of d(s,a) = p(s) beta(a|s); rejects any zero entry."""
    d = (sampling.state_dist[:, None] * sampling.behavior_policy).T.ravel()
    if (d <= 0).any():
        bad = int(np.argmin(d))
        s, a = bad % sampling.n_states, bad // sampling.n_states
        raise ValueError(f"occupation frequency d(s={s}, a={a}) is not positive")
    total = d.sum()
    if abs(total - 1.0) > PROB_ATOL:
        raise ValueError(f"occupation frequencies sum to {total!r}, expected 1")
    return OccupationMeasure(d)


def bellman_operator(mdp: Mdp, q: np.ndarray) -> np.ndarray:
    """Optimality operator (T q)(s,a) = sum_s' P(s,a,s') [r(s,a,s') + gamma max_u q(s',u)]."""
    S, A = mdp.n_states, mdp.n_actions
    state_max = q.reshape(A, S).max(axis=0)
    out = np.einsum("sat,sat->sa", mdp.transition, mdp.reward) + mdp.gamma * (
        mdp.transition @ state_max
    )
    return out.T.ravel()


def optimal_q(mdp: Mdp, tol: float = 1e-12, max_iter: int = 10_000_000) -> np.ndarray:
    """Fixed-point iteration from 0 for the optimal Q-function.

    Stops once successive iterates differ by at most tol*(1-gamma)/gamma
    (immediately for gamma = 0), which guarantees a final residual
    ||T q - q||_inf <= tol.
    """
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    q = np.zeros(mdp.n_pairs)
    if mdp.gamma == 0.0:
        return bellman_operator(mdp, q)
    stop = tol * (1.0 - mdp.gamma) / mdp.gamma
    for _ in range(max_iter):
        q_next = bellman_operator(mdp, q)
        if np.max(np.abs(q_next - q)) <= stop:
            return q_next
        q = q_next
    raise RuntimeError(f"value iteration did not converge within {max_iter} sweeps")


def greedy_policy(q: np.ndarray, n_states: int, n_actions: int) -> DeterministicPolicy:
    """Per-state argmax over actions; ties broken by the smallest action index."""
    table = np.asarray(q, dtype=float).reshape(n_actions, n_states)
    return DeterministicPolicy(table.argmax(axis=0))


def q_max_bound(mdp: Mdp, q0: np.ndarray) -> float:
    """Invariant sup-norm bound max{R_max, max q0(s,a)} / (1 - gamma) on the iterates."""
    return max(mdp.r_max, float(np.max(q0))) / (1.0 - mdp.gamma)


def random_mdp(
    seed: int, n_states: int, n_actions: int, gamma: float = 0.9
) -> tuple[Mdp, SamplingModel]:
    """Seeded random instance with full-support transitions and sampling.

    Probability rows are normalized positive uniforms (entries bounded away
    from zero), rewards are uniform in [-1, 1], so every instance passes
    validate_mdp.
    """
    if n_states < 1 or n_actions < 1:
        raise ValueError("n_states and n_actions must be at least 1")
    rng = np.random.default_rng(seed)

    def rows(shape):
        raw = rng.uniform(0.1, 1.0, size=shape)
        return raw / raw.sum(axis=-1, keepdims=True)

    transition = rows((n_states, n_actions, n_states))
    reward = rng.uniform(-1.0, 1.0, size=(n_states, n_actions, n_states))
    state_dist = rows(n_states)
    behavior = rows((n_states, n_actions))
    return Mdp(transition, reward, gamma), SamplingModel(state_dist, behavior)


def stationary_distribution(
    mdp: Mdp, behavior_policy: np.ndarray, tol: float = 1e-12, max_iter: int = 1_000_000
) -> np.ndarray:
    """Stationary state distribution of the chain induced by the behavior policy.

    Power iteration on M(s,s') = sum_a beta(a|s) P(s,a,s') until
    ||p^T M - p^T||_1 <= tol; raises if the cap is hit (suspected
    non-ergodicity).
    """
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    beta = np.asarray(behavior_policy, dtype=float)
    M = np.einsum("sa,sat->st", beta, mdp.transition)
    p = np.full(mdp.n_states, 1.0 / mdp.n_states)
    for _ in range(max_iter):
        p_next = p @ M
        p_next /= p_next.sum()
        if np.abs(p_next @ M - p_next).sum() <= tol:
            return p_next
        p = p_next
    raise RuntimeError(f"power iteration did not reach tol={tol} within {max_iter} steps; "
                       "chain may not be ergodic under this behavior policy")


# ---------------------------------------------------------------------------
# JSON instance files
# schema: n_states, n_actions, gamma, P[s][a][s'], R[s][a][s'], p[s], beta[s][a]
# ---------------------------------------------------------------------------

def mdp_to_dict(mdp: Mdp, sampling: SamplingModel) -> dict:
    return {
        "n_states": mdp.n_states,
        "n_actions": mdp.n_actions,
        "gamma": mdp.gamma,
        "P": mdp.transition.tolist(),
        "R": mdp.reward.tolist(),
        "p": sampling.state_dist.tolist(),
        "beta": sampling.behavior_policy.tolist(),
    }


def mdp_from_dict(data: dict) -> tuple[Mdp, SamplingModel]:
    try:
        S = int(data["n_states"])
        A = int(data["n_actions"])
        gamma = float(data["gamma"])
        P = np.asarray(data["P"], dtype=float)
        R = np.asarray(data["R"], dtype=float)
        p = np.asarray(data["p"], dtype=float)
        beta = np.asarray(data["beta"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed MDP file: {exc}") from exc
    if P.shape != (S, A, S):
        raise ValueError(f"field P has shape {P.shape}, expected ({S}, {A}, {S})")
    if R.shape != (S, A, S):
        raise ValueError(f"field R has shape {R.shape}, expected ({S}, {A}, {S})")
    if p.shape != (S,):
        raise ValueError(f"field p has shape {p.shape}, expected ({S},)")
    if beta.shape != (S, A):
        raise ValueError(f"field beta has shape {beta.shape}, expected ({S}, {A})")
    sums = P.sum(axis=2)
    bad = np.argwhere(np.abs(sums - 1.0) > FILE_PROB_ATOL)
    if bad.size:
        s, a = int(bad[0][0]), int(bad[0][1])
        raise ValueError(f"transition row (s={s}, a={a}) sums to {sums[s, a]!r}, expected 1")
    if abs(p.sum() - 1.0) > FILE_PROB_ATOL:
        raise ValueError(f"state distribution sums to {p.sum()!r}, expected 1")
    brows = beta.sum(axis=1)
    bad_b = np.argwhere(np.abs(brows - 1.0) > FILE_PROB_ATOL)
    if bad_b.size:
        s = int(bad_b[0][0])
        raise ValueError(f"behavior policy row s={s} sums to {brows[s]!r}, expected 1")
    return Mdp(P, R, gamma), SamplingModel(p, beta)


def save_mdp(path: str | Path, mdp: Mdp, sampling: SamplingModel) -> None:
    """Write the instance as JSON; floats round-trip exactly via repr."""
    text = json.dumps(mdp_to_dict(mdp, sampling), indent=1)
    Path(path).write_text(text + "\n")


def load_mdp(path: str | Path) -> tuple[Mdp, SamplingModel]:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: not valid JSON (line {exc.lineno}: {exc.msg})") from exc
    return mdp_from_dict(data)
