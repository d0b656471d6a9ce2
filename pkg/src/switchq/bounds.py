# Closed-form finite-time bound curves for the mean error of constant
# step-size Q-learning, the probability bound obtained from them via the
# Markov inequality, and the sample-complexity calculator that inverts the
# loose curve term by term.
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple


def noise_second_moment_bound(gamma: float) -> float:
    """Uniform cap 9/(1-gamma)^2 on E[w^T w] for admissible iterates."""
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"discount must lie in [0, 1), got {gamma}")
    return 9.0 / (1.0 - gamma) ** 2


@dataclass(frozen=True)
class BoundInputs:
    """Scalar inputs shared by every bound curve.

    When the initial errors are not supplied, the worst-case values
    2 sqrt(n)/(1-gamma) and 2/(1-gamma) implied by unit-bounded rewards and
    initial iterates are used.
    """

    n: int
    d_min: float
    d_max: float
    gamma: float
    alpha: float
    q0_err_l2: float | None = None
    q0_err_inf: float | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be at least 1, got {self.n}")
        if not 0.0 < self.d_min <= self.d_max <= 1.0:
            raise ValueError(f"need 0 < d_min <= d_max <= 1, got ({self.d_min}, {self.d_max})")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"discount must lie in [0, 1), got {self.gamma}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"step-size must lie in (0, 1), got {self.alpha}")
        for name in ("q0_err_l2", "q0_err_inf"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValueError(f"{name} must be nonnegative, got {v}")

    @property
    def rho(self) -> float:
        return 1.0 - self.alpha * self.d_min * (1.0 - self.gamma)

    @property
    def q0_l2(self) -> float:
        if self.q0_err_l2 is not None:
            return self.q0_err_l2
        return math.sqrt(self.n) * 2.0 / (1.0 - self.gamma)

    @property
    def q0_inf(self) -> float:
        if self.q0_err_inf is not None:
            return self.q0_err_inf
        return 2.0 / (1.0 - self.gamma)


def trace_bound(k: int, inputs: BoundInputs) -> float:
    """Cap 9 n^2 a / (d_min (1-g)^3) + ||x0||_2^2 n^2 rho^{2k} on the
    trace of the lower-system error autocorrelation at step k."""
    i = inputs
    return (
        9.0 * i.n**2 * i.alpha / (i.d_min * (1.0 - i.gamma) ** 3)
        + i.q0_l2**2 * i.n**2 * i.rho ** (2 * k)
    )


def lower_l2_bound(k: int, inputs: BoundInputs) -> float:
    """Mean L2-error curve of the noise-driven linear lower system:
    3 sqrt(a) n / (sqrt(d_min) (1-g)^{3/2}) + n ||x0||_2 rho^k."""
    i = inputs
    return (
        3.0 * math.sqrt(i.alpha) * i.n / (math.sqrt(i.d_min) * (1.0 - i.gamma) ** 1.5)
        + i.n * i.q0_l2 * i.rho**k
    )


def _first_term(inputs: BoundInputs, with_gamma: bool) -> float:
    i = inputs
    coeff = 9.0 * (i.gamma if with_gamma else 1.0)
    return coeff * i.d_max * i.n * math.sqrt(i.alpha) / (i.d_min**1.5 * (1.0 - i.gamma) ** 2.5)


def _second_term(k: int, inputs: BoundInputs) -> float:
    i = inputs
    return 2.0 * i.n**1.5 / (1.0 - i.gamma) * i.rho**k


def error_inf_bound(k: int, inputs: BoundInputs, first_term_gamma: bool = False) -> float:
    """Mean sup-error curve for the final iterate with third term
    4 a g d_max n^{2/3} k rho^{k-1} / (1-g).

    first_term_gamma selects the variant whose leading constant carries an
    extra factor gamma; the default (no gamma) is the looser, always-valid
    one.
    """
    i = inputs
    third = 4.0 * i.alpha * i.gamma * i.d_max * i.n ** (2.0 / 3.0) / (1.0 - i.gamma)
    return (
        _first_term(inputs, first_term_gamma)
        + _second_term(k, inputs)
        + third * k * i.rho ** (k - 1)
    )


def error_inf_bound_peak(k: int, inputs: BoundInputs, first_term_gamma: bool = False) -> float:
    """Looser curve replacing k rho^{k-1} with its peak envelope
    (-2/ln rho) rho^{-1/ln rho - 1} rho^{k/2}."""
    i = inputs
    if i.rho >= 1.0:
        raise ValueError(f"decay rate must be below 1, got {i.rho}")
    lr = math.log(i.rho)
    third = (
        4.0 * i.alpha * i.gamma * i.d_max * i.n ** (2.0 / 3.0) / (1.0 - i.gamma)
        * (-2.0 / lr) * i.rho ** (-1.0 / lr - 1.0) * i.rho ** (k / 2.0)
    )
    return _first_term(inputs, first_term_gamma) + _second_term(k, inputs) + third


def _loose_third(k: int, inputs: BoundInputs, coeff: float) -> float:
    i = inputs
    return (
        coeff * i.gamma * i.d_max * i.n ** (2.0 / 3.0)
        / ((1.0 - i.gamma) * i.d_min * (1.0 - i.gamma))
        * i.rho ** (k / 2.0 - 1.0)
    )


def error_inf_bound_loose(k: int, inputs: BoundInputs, first_term_gamma: bool = False) -> float:
    """Step-size-free loose curve with third term
    8 g d_max n^{2/3} rho^{k/2-1} / (d_min (1-g)^2)."""
    return _first_term(inputs, first_term_gamma) + _second_term(k, inputs) + _loose_third(k, inputs, 8.0)


def error_inf_bound_loose_alt(k: int, inputs: BoundInputs) -> float:
    """Coefficient-4 variant of the loose curve; reported for comparison only,
    its third term is exactly half of the coefficient-8 one."""
    return _first_term(inputs, with_gamma=False) + _second_term(k, inputs) + _loose_third(k, inputs, 4.0)


class ProbabilityBound(NamedTuple):
    raw: float
    clamped: float


def success_probability(epsilon: float, k: int, inputs: BoundInputs) -> ProbabilityBound:
    """Markov-inequality lower bound on P[||Q_k - Q*||_inf < eps].

    Uses the gamma-carrying leading constant; the raw value may be negative
    (vacuous regime), the clamped one lies in [0, 1].
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    rhs = (
        _first_term(inputs, with_gamma=True)
        + _second_term(k, inputs)
        + _loose_third(k, inputs, 8.0)
    )
    raw = 1.0 - rhs / epsilon
    return ProbabilityBound(raw, min(1.0, max(0.0, raw)))


class SampleComplexity(NamedTuple):
    alpha: float
    k_min: int
    vacuous: bool
    k_transient: float
    k_switching: float


def sample_complexity(
    epsilon: float, n: int, d_min: float, d_max: float, gamma: float
) -> SampleComplexity:
    """Step-size and iteration count sufficient for mean sup-error below eps.

    Sets a = eps^2 d_min^3 (1-g)^5 / (729 g^2 d_max^2 n^2), then takes the
    larger of the two iteration thresholds that push the transient and
    switching terms of the loose curve below eps/3 each. Rejects gamma = 0
    (the step-size formula has a gamma^2 denominator). When a logarithm
    argument is at most 1 the corresponding requirement is already vacuous;
    the flag reports it.
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if not 0.0 < gamma < 1.0:
        raise ValueError(
            f"discount must lie in (0, 1) (the step-size formula divides by gamma^2), got {gamma}"
        )
    if not 0.0 < d_min <= d_max <= 1.0:
        raise ValueError(f"need 0 < d_min <= d_max <= 1, got ({d_min}, {d_max})")
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")

    alpha = epsilon**2 * d_min**3 * (1.0 - gamma) ** 5 / (729.0 * gamma**2 * d_max**2 * n**2)
    alpha = min(alpha, 1.0 - 1e-12)

    factor = 729.0 * gamma**2 * d_max**2 * n**2 / (epsilon**2 * d_min**4 * (1.0 - gamma) ** 6)
    arg_transient = 6.0 * n**1.5 / (epsilon * (1.0 - gamma))
    arg_switching = 24.0 * gamma * d_max * n ** (2.0 / 3.0) / (epsilon * d_min * (1.0 - gamma) ** 2)
    vacuous = arg_transient <= 1.0 or arg_switching <= 1.0
    k_transient = factor * math.log(arg_transient) if arg_transient > 1.0 else 0.0
    k_switching = math.log(arg_switching) * 2.0 * factor if arg_switching > 1.0 else 0.0
    k_min = int(math.ceil(max(k_transient, k_switching, 0.0)))
    return SampleComplexity(alpha, k_min, vacuous, k_transient, k_switching)


def sufficiency_terms(k: int, inputs: BoundInputs) -> tuple[float, float, float]:
    """The three loose-curve terms (gamma-carrying leading constant) whose
    sum certifies mean sup-error below eps when each is at most eps/3."""
    return (
        _first_term(inputs, with_gamma=True),
        _second_term(k, inputs),
        _loose_third(k, inputs, 8.0),
    )


CURVES = {
    "theorem1": lower_l2_bound,
    "theorem2": error_inf_bound,
    "corollary_a": error_inf_bound_peak,
    "corollary_b": error_inf_bound_loose,
    "abstract": error_inf_bound_loose_alt,
}


def curve_table(ks, inputs: BoundInputs, epsilon: float = 0.1) -> list[dict]:
    """Rows of every bound curve (plus the probability bound at epsilon)."""
    rows = []
    for k in ks:
        row = {"k": int(k)}
        for label, fn in CURVES.items():
            row[label] = fn(int(k), inputs)
        row["markov_prob"] = success_probability(epsilon, int(k), inputs).clamped
        rows.append(row)
    return rows


def write_curves_csv(path, rows) -> None:
    from pathlib import Path

    header = "k,theorem1,theorem2,corollary_a,corollary_b,abstract,markov_prob"
    lines = [header]
    for row in rows:
        lines.append(
            ",".join(
                [str(row["k"])]
                + [
                    format(row[c], ".17e")
                    for c in ("theorem1", "theorem2", "corollary_a", "corollary_b",
                              "abstract", "markov_prob")
                ]
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")
