# Constant step-size Q-learning dynamics under the i.i.d. observation model:
# the sampled update, its noise decomposition, and the coupled simulation of
# the original iterate together with its lower (linear) and upper (switching)
# comparison systems driven by the same noise realization.
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from switchq.matrices import SwitchingModel
from switchq.mdp import Mdp, SamplingModel, pair_index, q_max_bound

CHUNK_BUDGET = 1 << 20  # elements per sampling block, bounds transient memory


class SandwichViolation(RuntimeError):
    """Elementwise ordering of the coupled systems broke beyond tolerance."""

    def __init__(self, k: int, index: int, amount: float, trial: int | None = None):
        self.k = k
        self.index = index
        self.amount = amount
        self.trial = trial
        where = f"trial={trial}, " if trial is not None else ""
        super().__init__(
            f"sandwich ordering violated ({where}k={k}, component={index}, amount={amount:.3e})"
        )


@dataclass(frozen=True)
class Sample:
    """One observation (s, a, s', r) drawn from the i.i.d. model."""

    s: int
    a: int
    s_next: int
    r: float


@dataclass(frozen=True)
class CoupledState:
    """Original iterate plus lower/upper comparison iterates at step k."""

    q: np.ndarray
    q_lower: np.ndarray
    q_upper: np.ndarray
    step: int = 0


def _cumulative(dist: np.ndarray) -> np.ndarray:
    c = np.cumsum(np.asarray(dist, dtype=float), axis=-1)
    c[..., -1] = 1.0  # guard against cumsum rounding below 1
    return c


def sample_transition(mdp: Mdp, sampling: SamplingModel, rng: np.random.Generator) -> Sample:
    """Draw s ~ p, a ~ beta(.|s), s' ~ P(s,a,.); consumes exactly three uniforms."""
    u = rng.random(3)
    s = int(np.searchsorted(_cumulative(sampling.state_dist), u[0], side="right"))
    a = int(np.searchsorted(_cumulative(sampling.behavior_policy[s]), u[1], side="right"))
    sn = int(np.searchsorted(_cumulative(mdp.transition[s, a]), u[2], side="right"))
    return Sample(s, a, sn, float(mdp.reward[s, a, sn]))


def td_error(q: np.ndarray, sample: Sample, gamma: float, n_states: int) -> float:
    """One-step residual r + gamma max_u q(s',u) - q(s,a)."""
    n_actions = q.size // n_states
    best_next = q.reshape(n_actions, n_states)[:, sample.s_next].max()
    return float(sample.r + gamma * best_next - q[pair_index(sample.s, sample.a, n_states)])


def q_update(q: np.ndarray, sample: Sample, alpha: float, gamma: float, n_states: int) -> np.ndarray:
    """Sampled update: only entry (s, a) moves, by alpha times the one-step residual."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"step-size must lie in (0, 1), got {alpha}")
    out = q.astype(float).copy()
    out[pair_index(sample.s, sample.a, n_states)] += alpha * td_error(q, sample, gamma, n_states)
    return out


def expected_increment(model: SwitchingModel, q: np.ndarray) -> np.ndarray:
    """Conditional mean of the sampled update direction, D R + gamma D P Pi_q q - D q."""
    state_max = q.reshape(model.n_actions, model.n_states).max(axis=0)
    return model.d * (model.r_bar + model.gamma * (model.p_stack @ state_max) - q)


def noise_vector(model: SwitchingModel, q: np.ndarray, sample: Sample) -> np.ndarray:
    """Zero-mean deviation of the sampled update from its conditional mean.

    Adding it back to the mean direction reproduces the sampled update
    exactly: q' = q + alpha * (expected_increment + noise).
    """
    w = -expected_increment(model, q)
    w[pair_index(sample.s, sample.a, model.n_states)] += td_error(
        q, sample, model.gamma, model.n_states
    )
    return w


def _enumerate_samples(model: SwitchingModel):
    mdp = model.mdp
    for s in range(model.n_states):
        for a in range(model.n_actions):
            d_sa = model.d[pair_index(s, a, model.n_states)]
            for sn in range(model.n_states):
                pr = d_sa * mdp.transition[s, a, sn]
                if pr > 0.0:
                    yield pr, Sample(s, a, sn, float(mdp.reward[s, a, sn]))


def expected_noise(model: SwitchingModel, q: np.ndarray) -> np.ndarray:
    """E[w | q] by exact enumeration over all (s, a, s'); zero up to rounding."""
    acc = np.zeros(model.n_pairs)
    for pr, sample in _enumerate_samples(model):
        acc += pr * noise_vector(model, q, sample)
    return acc


def noise_second_moment(model: SwitchingModel, q: np.ndarray) -> float:
    """E[w^T w | q] by exact enumeration; at most 9/(1-gamma)^2 for admissible q."""
    total = 0.0
    for pr, sample in _enumerate_samples(model):
        w = noise_vector(model, q, sample)
        total += pr * float(w @ w)
    return total


def _apply_subsystem(model: SwitchingModel, x: np.ndarray, columns: np.ndarray) -> np.ndarray:
    # A_pi x = x + alpha*(gamma D P (Pi x) - D x); columns selects (s, pi(s)).
    return x + model.alpha * (
        model.gamma * model.d * (model.p_stack @ x[columns]) - model.d * x
    )


def _policy_columns(model: SwitchingModel, actions: np.ndarray) -> np.ndarray:
    return actions * model.n_states + np.arange(model.n_states)


def step_coupled(
    model: SwitchingModel, state: CoupledState, sample: Sample, sandwich_tol: float = 1e-10
) -> CoupledState:
    """Advance the coupled triple one step with a shared noise realization.

    The original iterate takes the sampled update; the lower system applies
    the fixed matrix of the optimal greedy policy; the upper system applies
    the matrix switched by the original iterate's greedy policy. All three
    receive the noise computed from the original iterate, which is what makes
    the elementwise ordering (lower - q*) <= (original - q*) <= (upper - q*)
    hold path by path.
    """
    q, q_star = state.q, model.q_star
    w = noise_vector(model, q, sample)
    cols_star = _policy_columns(model, model.pi_star)
    cols_q = _policy_columns(model, model.greedy_actions(q))

    q_next = q_update(q, sample, model.alpha, model.gamma, model.n_states)
    lower_next = q_star + _apply_subsystem(model, state.q_lower - q_star, cols_star) + model.alpha * w
    upper_next = q_star + _apply_subsystem(model, state.q_upper - q_star, cols_q) + model.alpha * w

    gap_low = (q_next - q_star) - (lower_next - q_star)
    gap_up = (upper_next - q_star) - (q_next - q_star)
    for gap in (gap_low, gap_up):
        if gap.min() < -sandwich_tol:
            idx = int(np.argmin(gap))
            raise SandwichViolation(state.step + 1, idx, float(gap[idx]))
    return CoupledState(q_next, lower_next, upper_next, state.step + 1)


def error_system_step(
    model: SwitchingModel, q_upper: np.ndarray, q_lower: np.ndarray, q: np.ndarray
) -> np.ndarray:
    """Predicted next upper-lower gap A_q (qU - qL) + B_q (qL - q*); noise-free."""
    xu = q_upper - model.q_star
    xl = q_lower - model.q_star
    cols_q = _policy_columns(model, model.greedy_actions(q))
    cols_star = _policy_columns(model, model.pi_star)
    a_part = _apply_subsystem(model, xu - xl, cols_q)
    b_part = model.alpha * model.gamma * model.d * (
        model.p_stack @ (xl[cols_q] - xl[cols_star])
    )
    return a_part + b_part


def simulate_arbitrary_switching(
    model: SwitchingModel, policy_sequence, x0: np.ndarray, n_steps: int | None = None
) -> np.ndarray:
    """Sup norms of x_{k+1} = A_{pi_k} x_k under an arbitrary policy sequence.

    Decays at least geometrically: ||x_k|| <= rho^k ||x_0|| for every k.
    """
    seq = [p.actions if hasattr(p, "actions") else np.asarray(p, dtype=np.int64)
           for p in policy_sequence]
    if n_steps is None:
        n_steps = len(seq)
    x = np.asarray(x0, dtype=float).copy()
    norms = np.empty(n_steps + 1)
    norms[0] = np.abs(x).max()
    for k in range(n_steps):
        x = _apply_subsystem(model, x, _policy_columns(model, seq[k % len(seq)]))
        norms[k + 1] = np.abs(x).max()
    return norms


def autocorrelation_step(
    x_mat: np.ndarray, a_mat: np.ndarray, w_mat: np.ndarray, alpha: float
) -> np.ndarray:
    """One propagation X' = A X A^T + alpha^2 W of the noise autocorrelation."""
    return a_mat @ x_mat @ a_mat.T + alpha**2 * w_mat


def empirical_autocorrelation(xs: np.ndarray) -> np.ndarray:
    """Trial average of x x^T for rows x of xs."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    return xs.T @ xs / xs.shape[0]


def geometric_checkpoints(horizon: int) -> tuple[int, ...]:
    """Default recording schedule {0, 1, 2, 5, 10, 20, 50, ...} up to the horizon."""
    points = {0, horizon}
    base = 1
    while base <= horizon:
        for mult in (1, 2, 5):
            if base * mult <= horizon:
                points.add(base * mult)
        base *= 10
    return tuple(sorted(points))


METRICS_COUPLED = ("err_inf", "err_lower_l2", "err_lower_inf", "gap_upper_lower_inf")


@dataclass
class SimulationResult:
    """Per-checkpoint metric samples for a batch of independent trials."""

    checkpoints: np.ndarray              # (C,)
    metrics: dict[str, np.ndarray]       # name -> (C, n_trials)
    n_trials: int
    horizon: int
    q_max: float
    coupled: bool
    sandwich_violations: int = 0
    qmax_violations: int = 0
    identity_residual: float = 0.0
    first_sandwich: tuple[int, int, int] | None = None  # (trial, k, component)
    sandwich_ok: np.ndarray | None = None               # (C, n_trials) cumulative flag
    final_q: np.ndarray | None = None                   # (n_trials, n)
    final_lower_err: np.ndarray | None = None           # (n_trials, n), lower - q*
    final_upper_err: np.ndarray | None = None           # (n_trials, n), upper - q*

    def rows(self):
        """Trajectory records, trial-major: one row per (trial, checkpoint)."""
        if not self.coupled:
            raise ValueError("trajectory rows require a coupled simulation")
        for t in range(self.n_trials):
            for c, k in enumerate(self.checkpoints):
                yield (
                    t,
                    int(k),
                    self.metrics["err_inf"][c, t],
                    self.metrics["err_lower_l2"][c, t],
                    self.metrics["err_lower_inf"][c, t],
                    self.metrics["gap_upper_lower_inf"][c, t],
                    bool(self.sandwich_ok[c, t]),
                )


def write_trajectory_csv(path: str | Path, result: SimulationResult) -> None:
    header = "trial,k,err_inf,err_lower_l2,err_lower_inf,gap_upper_lower_inf,sandwich_ok"
    lines = [header]
    for trial, k, e_inf, e_l2, e_linf, gap, ok in result.rows():
        lines.append(
            f"{trial},{k},{e_inf:.17e},{e_l2:.17e},{e_linf:.17e},{gap:.17e},"
            + ("true" if ok else "false")
        )
    Path(path).write_text("\n".join(lines) + "\n")


def _sample_block(mdp, cum_p, cum_beta, cum_trans, rngs, length):
    """Pre-draw `length` steps for each trial generator; rows follow each
    generator's native order so chunking never changes a trial's stream."""
    n_trials = len(rngs)
    u = np.empty((n_trials, length, 3))
    for i, rng in enumerate(rngs):
        u[i] = rng.random((length, 3))
    s = (cum_p <= u[..., 0, None]).sum(axis=-1)
    a = (cum_beta[s] <= u[..., 1, None]).sum(axis=-1)
    sn = (cum_trans[s, a] <= u[..., 2, None]).sum(axis=-1)
    r = mdp.reward[s, a, sn]
    return s, a, sn, r


def _simulate_block(
    model: SwitchingModel,
    seeds,
    trial_offset: int,
    horizon: int,
    checkpoints: np.ndarray,
    q0: np.ndarray,
    coupled: bool,
    sandwich_tol: float,
    qmax_tol: float,
    check_error_identity: bool,
    raise_on_violation: bool,
    q_max: float,
):
    S, A, n = model.n_states, model.n_actions, model.n_pairs
    nt = len(seeds)
    rngs = [np.random.default_rng(seed) for seed in seeds]
    alpha, gamma, d, q_star = model.alpha, model.gamma, model.d, model.q_star
    p_t = np.ascontiguousarray(model.p_stack.T)  # (S, n)
    r_bar = model.r_bar
    arange_s = np.arange(S)
    cols_star = model.pi_star * S + arange_s
    t_idx = np.arange(nt)

    cum_p = _cumulative(model.sampling.state_dist)
    cum_beta = _cumulative(model.sampling.behavior_policy)
    cum_trans = _cumulative(model.mdp.transition)

    q = np.tile(np.asarray(q0, dtype=float), (nt, 1))
    if coupled:
        xl = q - q_star
        xu = xl.copy()

    cp_row = {int(k): i for i, k in enumerate(checkpoints)}
    names = METRICS_COUPLED if coupled else ("err_inf",)
    metrics = {name: np.zeros((len(checkpoints), nt)) for name in names}
    ok_flags = np.ones(nt, dtype=bool)
    sandwich_ok = np.ones((len(checkpoints), nt), dtype=bool) if coupled else None

    sandwich_violations = 0
    qmax_violations = 0
    identity_residual = 0.0
    first_sandwich = None
    qmax_gate = q_max * (1.0 + qmax_tol) + qmax_tol

    def record(row):
        eq = q - q_star
        metrics["err_inf"][row] = np.abs(eq).max(axis=1)
        if coupled:
            metrics["err_lower_l2"][row] = np.sqrt((xl * xl).sum(axis=1))
            metrics["err_lower_inf"][row] = np.abs(xl).max(axis=1)
            metrics["gap_upper_lower_inf"][row] = np.abs(xu - xl).max(axis=1)
            sandwich_ok[row] = ok_flags

    if 0 in cp_row:
        record(cp_row[0])

    chunk = max(1, min(horizon if horizon > 0 else 1, CHUNK_BUDGET // max(1, nt * max(S, A))))
    k = 0
    while k < horizon:
        length = min(chunk, horizon - k)
        s_blk, a_blk, sn_blk, r_blk = _sample_block(
            model.mdp, cum_p, cum_beta, cum_trans, rngs, length
        )
        for j in range(length):
            s, a, sn, rw = s_blk[:, j], a_blk[:, j], sn_blk[:, j], r_blk[:, j]
            pos = a * S + s
            tab = q.reshape(nt, A, S)
            if coupled:
                state_max = tab.max(axis=1)        # (nt, S)
                pi = tab.argmax(axis=1)            # (nt, S) greedy of the original
                delta = rw + gamma * state_max[t_idx, sn] - q[t_idx, pos]
                drift = d * (r_bar + gamma * (state_max @ p_t) - q)
                w = -drift
                w[t_idx, pos] += delta
                cols_pi = pi * S + arange_s

                if check_error_identity:
                    y = xu - xl
                    pred = (
                        y
                        + alpha * (gamma * d * (np.take_along_axis(y, cols_pi, 1) @ p_t) - d * y)
                        + alpha * gamma * d * (
                            (np.take_along_axis(xl, cols_pi, 1) - xl[:, cols_star]) @ p_t
                        )
                    )

                xl_next = (
                    xl
                    + alpha * (gamma * d * (xl[:, cols_star] @ p_t) - d * xl)
                    + alpha * w
                )
                xu_next = (
                    xu
                    + alpha * (gamma * d * (np.take_along_axis(xu, cols_pi, 1) @ p_t) - d * xu)
                    + alpha * w
                )
                q[t_idx, pos] += alpha * delta
                eq = q - q_star

                low_bad = (eq - xl_next) < -sandwich_tol
                up_bad = (xu_next - eq) < -sandwich_tol
                n_bad = int(low_bad.sum()) + int(up_bad.sum())
                if n_bad:
                    sandwich_violations += n_bad
                    bad = low_bad | up_bad
                    ok_flags &= ~bad.any(axis=1)
                    if first_sandwich is None:
                        t_bad, i_bad = np.argwhere(bad)[0]
                        first_sandwich = (trial_offset + int(t_bad), k + j + 1, int(i_bad))
                        if raise_on_violation:
                            amount = float(
                                min((eq - xl_next)[t_bad, i_bad], (xu_next - eq)[t_bad, i_bad])
                            )
                            raise SandwichViolation(
                                k + j + 1, int(i_bad), amount, trial=trial_offset + int(t_bad)
                            )
                if check_error_identity:
                    resid = float(np.abs((xu_next - xl_next) - pred).max())
                    if resid > identity_residual:
                        identity_residual = resid
                xl, xu = xl_next, xu_next
            else:
                best_next = tab[t_idx, :, sn].max(axis=1)
                delta = rw + gamma * best_next - q[t_idx, pos]
                q[t_idx, pos] += alpha * delta

            if np.abs(q).max() > qmax_gate:
                qmax_violations += 1
            row = cp_row.get(k + j + 1)
            if row is not None:
                record(row)
        k += length

    return {
        "metrics": metrics,
        "sandwich_ok": sandwich_ok,
        "sandwich_violations": sandwich_violations,
        "qmax_violations": qmax_violations,
        "identity_residual": identity_residual,
        "first_sandwich": first_sandwich,
        "final_q": q,
        "final_lower_err": xl if coupled else None,
        "final_upper_err": xu if coupled else None,
    }


def simulate_trials(
    model: SwitchingModel,
    n_trials: int,
    horizon: int,
    base_seed: int = 0,
    checkpoints=None,
    q0: np.ndarray | None = None,
    coupled: bool = True,
    sandwich_tol: float = 1e-10,
    qmax_tol: float = 1e-10,
    check_error_identity: bool = False,
    raise_on_violation: bool = False,
    n_workers: int = 1,
) -> SimulationResult:
    """Simulate independent trials of the coupled systems in vectorized batches.

    Trial t draws its samples from a dedicated generator spawned from
    base_seed, so results are reproducible and independent of batching,
    checkpoint schedule, and worker count. With coupled=False only the
    original iterate is advanced (cheaper; used for long horizons).
    """
    if n_trials < 1:
        raise ValueError("n_trials must be at least 1")
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    if checkpoints is None:
        checkpoints = geometric_checkpoints(horizon)
    checkpoints = np.asarray(sorted(set(int(k) for k in checkpoints)), dtype=np.int64)
    if checkpoints.size and (checkpoints[0] < 0 or checkpoints[-1] > horizon):
        raise ValueError("checkpoints must lie within [0, horizon]")
    if q0 is None:
        q0 = np.zeros(model.n_pairs)
    q0 = np.asarray(q0, dtype=float)
    q_max = q_max_bound(model.mdp, q0)

    seeds = np.random.SeedSequence(base_seed).spawn(n_trials)
    n_workers = max(1, min(int(n_workers), n_trials))
    bounds_idx = np.linspace(0, n_trials, n_workers + 1, dtype=int)
    blocks = [(int(lo), int(hi)) for lo, hi in zip(bounds_idx[:-1], bounds_idx[1:]) if hi > lo]

    def run_block(lo, hi):
        return _simulate_block(
            model, seeds[lo:hi], lo, horizon, checkpoints, q0, coupled,
            sandwich_tol, qmax_tol, check_error_identity, raise_on_violation, q_max,
        )

    if len(blocks) == 1:
        partials = [run_block(*blocks[0])]
    else:
        with ThreadPoolExecutor(max_workers=len(blocks)) as pool:
            partials = list(pool.map(lambda b: run_block(*b), blocks))

    names = METRICS_COUPLED if coupled else ("err_inf",)
    metrics = {
        name: np.concatenate([p["metrics"][name] for p in partials], axis=1) for name in names
    }
    sandwich_ok = (
        np.concatenate([p["sandwich_ok"] for p in partials], axis=1) if coupled else None
    )
    firsts = [p["first_sandwich"] for p in partials if p["first_sandwich"] is not None]
    return SimulationResult(
        checkpoints=checkpoints,
        metrics=metrics,
        n_trials=n_trials,
        horizon=horizon,
        q_max=q_max,
        coupled=coupled,
        sandwich_violations=sum(p["sandwich_violations"] for p in partials),
        qmax_violations=sum(p["qmax_violations"] for p in partials),
        identity_residual=max(p["identity_residual"] for p in partials),
        first_sandwich=min(firsts) if firsts else None,
        sandwich_ok=sandwich_ok,
        final_q=np.concatenate([p["final_q"] for p in partials], axis=0),
        final_lower_err=(
            np.concatenate([p["final_lower_err"] for p in partials], axis=0)
            if coupled else None
        ),
        final_upper_err=(
            np.concatenate([p["final_upper_err"] for p in partials], axis=0)
            if coupled else None
        ),
    )
