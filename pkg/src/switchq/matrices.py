# Stacked/diagonal matrix forms of a finite MDP and the subsystem matrices
# of the switched affine recursion Q_{k+1} - Q* = A_Q (Q_k - Q*) + b_Q + a w_k.
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from switchq.mdp import (
    DeterministicPolicy,
    Mdp,
    SamplingModel,
    greedy_policy,
    occupation_measure,
    optimal_q,
)

POLICY_ENUM_CAP = 10**6


def stack_transitions(mdp: Mdp) -> np.ndarray:
    """(n, S) matrix whose row (a*S + s) is P(s, a, .)."""
    S, A = mdp.n_states, mdp.n_actions
    return mdp.transition.transpose(1, 0, 2).reshape(S * A, S).copy()


def expected_rewards(mdp: Mdp) -> np.ndarray:
    """(n,) vector of expected one-step rewards E[r | s, a], action-major."""
    return np.einsum("sat,sat->sa", mdp.transition, mdp.reward).T.ravel()


def action_transition(policy: DeterministicPolicy, n_states: int, n_actions: int) -> np.ndarray:
    """(S, n) selector matrix; row s is the one-hot of pair (s, policy(s)).

    Right-multiplying the stacked transition matrix by it yields the
    transition matrix of the state-action chain under the policy.
    """
    actions = policy.actions
    if actions.shape != (n_states,) or (actions < 0).any() or (actions >= n_actions).any():
        raise ValueError(f"policy incompatible with ({n_states}, {n_actions})")
    pi = np.zeros((n_states, n_states * n_actions))
    pi[np.arange(n_states), actions * n_states + np.arange(n_states)] = 1.0
    return pi


def occupation_diagonal(occ) -> np.ndarray:
    """Diagonal (n, n) matrix of occupation frequencies."""
    d = occ.d if hasattr(occ, "d") else np.asarray(occ, dtype=float)
    return np.diag(d)


def decay_rate(alpha: float, d_min: float, gamma: float) -> float:
    """Contraction factor rho = 1 - alpha * d_min * (1 - gamma)."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"step-size must lie in (0, 1), got {alpha}")
    if not 0.0 < d_min <= 1.0:
        raise ValueError(f"d_min must lie in (0, 1], got {d_min}")
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"discount must lie in [0, 1), got {gamma}")
    return 1.0 - alpha * d_min * (1.0 - gamma)


def subsystem_matrix(
    mdp: Mdp, d: np.ndarray, alpha: float, policy: DeterministicPolicy
) -> tuple[np.ndarray, float]:
    """Subsystem matrix A = I + alpha*(gamma D P Pi - D) and the decay rate rho."""
    n = mdp.n_pairs
    p_stack = stack_transitions(mdp)
    pi = action_transition(policy, mdp.n_states, mdp.n_actions)
    a_mat = np.eye(n) + alpha * (mdp.gamma * d[:, None] * (p_stack @ pi) - np.diag(d))
    return a_mat, decay_rate(alpha, float(np.min(d)), mdp.gamma)


def affine_input(
    mdp: Mdp, d: np.ndarray, alpha: float, q: np.ndarray, q_star: np.ndarray
) -> np.ndarray:
    """Affine term b = alpha * gamma * D P (Pi_q - Pi_q*) q* of the switched recursion.

    Nonpositive elementwise because the greedy selector of q* maximizes
    rows against q*.
    """
    S, A = mdp.n_states, mdp.n_actions
    p_stack = stack_transitions(mdp)
    pi_q = action_transition(greedy_policy(q, S, A), S, A)
    pi_star = action_transition(greedy_policy(q_star, S, A), S, A)
    return alpha * mdp.gamma * d * (p_stack @ ((pi_q - pi_star) @ q_star))


def subsystem_difference(
    mdp: Mdp, d: np.ndarray, alpha: float, q: np.ndarray, q_star: np.ndarray
) -> np.ndarray:
    """Matrix gap B = A_q - A_q* = alpha * gamma * D P (Pi_q - Pi_q*)."""
    S, A = mdp.n_states, mdp.n_actions
    p_stack = stack_transitions(mdp)
    pi_q = action_transition(greedy_policy(q, S, A), S, A)
    pi_star = action_transition(greedy_policy(q_star, S, A), S, A)
    return alpha * mdp.gamma * d[:, None] * (p_stack @ (pi_q - pi_star))


def inf_norm(matrix: np.ndarray) -> float:
    """Maximum absolute row sum."""
    m = np.atleast_2d(np.asarray(matrix, dtype=float))
    return float(np.abs(m).sum(axis=1).max())


def is_nonnegative(matrix: np.ndarray, tol: float = 1e-15) -> bool:
    """Elementwise nonnegativity with a small floating slack."""
    return bool((np.asarray(matrix) >= -tol).all())


def policy_index(policy: DeterministicPolicy, n_actions: int) -> int:
    """Lexicographic index of the policy among all |A|^|S| deterministic policies."""
    idx = 0
    for a in policy.actions:
        idx = idx * n_actions + int(a)
    return idx


def policy_from_index(index: int, n_states: int, n_actions: int) -> DeterministicPolicy:
    """Inverse of policy_index."""
    if not 0 <= index < n_actions**n_states:
        raise ValueError(f"index {index} out of range for {n_actions}^{n_states} policies")
    actions = np.zeros(n_states, dtype=np.int64)
    for s in range(n_states - 1, -1, -1):
        actions[s] = index % n_actions
        index //= n_actions
    return DeterministicPolicy(actions)


def enumerate_policies(n_states: int, n_actions: int) -> Iterator[DeterministicPolicy]:
    """All deterministic policies in lexicographic order; capped to stay desk-scale."""
    count = n_actions**n_states
    if count > POLICY_ENUM_CAP:
        raise ValueError(f"{count} policies exceed the enumeration cap {POLICY_ENUM_CAP}")
    for i in range(count):
        yield policy_from_index(i, n_states, n_actions)


@dataclass(frozen=True)
class SubsystemMatrices:
    """Matrices of the switched recursion at one Q: A_q, b_q, B_q, and rho."""

    a_mat: np.ndarray
    b_vec: np.ndarray
    b_mat: np.ndarray
    rho: float


@dataclass(frozen=True)
class SwitchingModel:
    """Derived matrix forms shared by the simulators and the bound checks.

    Bundles the stacked transition matrix, expected rewards, occupation
    frequencies, the optimal Q-vector with its greedy policy, the step-size
    and the decay rate rho. All arrays are read-only.
    """

    mdp: Mdp
    sampling: SamplingModel
    alpha: float
    p_stack: np.ndarray   # (n, S)
    r_bar: np.ndarray     # (n,)
    d: np.ndarray         # (n,)
    q_star: np.ndarray    # (n,)
    pi_star: np.ndarray   # (S,) greedy actions of q_star
    rho: float

    def __post_init__(self):
        for name in ("p_stack", "r_bar", "d", "q_star", "pi_star"):
            arr = getattr(self, name)
            arr.flags.writeable = False

    @classmethod
    def from_mdp(
        cls,
        mdp: Mdp,
        sampling: SamplingModel,
        alpha: float,
        q_star: np.ndarray | None = None,
        solver_tol: float = 1e-13,
    ) -> "SwitchingModel":
        if not 0.0 < alpha < 1.0:
            raise ValueError(f"step-size must lie in (0, 1), got {alpha}")
        occ = occupation_measure(sampling)
        if q_star is None:
            q_star = optimal_q(mdp, tol=solver_tol)
        q_star = np.array(q_star, dtype=float)
        pi_star = greedy_policy(q_star, mdp.n_states, mdp.n_actions).actions.copy()
        return cls(
            mdp=mdp,
            sampling=sampling,
            alpha=alpha,
            p_stack=stack_transitions(mdp),
            r_bar=expected_rewards(mdp),
            d=occ.d.copy(),
            q_star=q_star,
            pi_star=pi_star,
            rho=decay_rate(alpha, occ.d_min, mdp.gamma),
        )

    @property
    def n_states(self) -> int:
        return self.mdp.n_states

    @property
    def n_actions(self) -> int:
        return self.mdp.n_actions

    @property
    def n_pairs(self) -> int:
        return self.mdp.n_pairs

    @property
    def gamma(self) -> float:
        return self.mdp.gamma

    @property
    def d_min(self) -> float:
        return float(self.d.min())

    @property
    def d_max(self) -> float:
        return float(self.d.max())

    def greedy_actions(self, q: np.ndarray) -> np.ndarray:
        """Per-state greedy actions of q, smallest index on ties."""
        return q.reshape(self.n_actions, self.n_states).argmax(axis=0)

    def a_matrix(self, policy: DeterministicPolicy) -> np.ndarray:
        a_mat, _ = subsystem_matrix(self.mdp, self.d, self.alpha, policy)
        return a_mat

    def subsystem(self, q: np.ndarray) -> SubsystemMatrices:
        """Materialize A_q, b_q, B_q for a given Q-vector."""
        pol = DeterministicPolicy(self.greedy_actions(q))
        a_mat, rho = subsystem_matrix(self.mdp, self.d, self.alpha, pol)
        return SubsystemMatrices(
            a_mat=a_mat,
            b_vec=affine_input(self.mdp, self.d, self.alpha, q, self.q_star),
            b_mat=subsystem_difference(self.mdp, self.d, self.alpha, q, self.q_star),
            rho=rho,
        )


def save_matrix_csv(path: str | Path, matrix: np.ndarray) -> None:
    """Row-major CSV dump in full-precision scientific notation."""
    m = np.atleast_2d(np.asarray(matrix, dtype=float))
    lines = [",".join(format(v, ".17e") for v in row) for row in m]
    Path(path).write_text("\n".join(lines) + "\n")
