# Command-line surface: generate | solve | simulate | verify | bounds | complexity.
# Exit codes: 0 success/pass, 1 verification failure, 2 usage or input error.
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from switchq.bounds import BoundInputs, curve_table, sample_complexity, write_curves_csv
from switchq.dynamics import (
    SandwichViolation,
    geometric_checkpoints,
    simulate_trials,
    write_trajectory_csv,
)
from switchq.harness import (
    ExperimentConfig,
    build_model,
    effective_workers,
    full_verification,
    initial_q,
    write_metrics_csv,
)
from switchq.mdp import (
    bellman_operator,
    load_mdp,
    occupation_measure,
    optimal_q,
    random_mdp,
    save_mdp,
)


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _nonneg_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative integer, got {text}")
    return value


def _step_size(text: str) -> float:
    value = float(text)
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"step-size must lie in (0, 1), got {text}")
    return value


def _discount(text: str) -> float:
    value = float(text)
    if not 0.0 <= value < 1.0:
        raise argparse.ArgumentTypeError(f"discount must lie in [0, 1), got {text}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if value <= 0.0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def _bound_inputs_from_args(args) -> BoundInputs:
    if args.mdp is not None:
        mdp, sampling = load_mdp(args.mdp)
        occ = occupation_measure(sampling)
        return BoundInputs(
            n=mdp.n_pairs, d_min=occ.d_min, d_max=occ.d_max,
            gamma=mdp.gamma, alpha=args.alpha,
        )
    missing = [name for name in ("n", "d_min", "d_max") if getattr(args, name) is None]
    if missing:
        raise ValueError(
            "either --mdp or all of --n/--d-min/--d-max (with --gamma) are required"
        )
    return BoundInputs(
        n=args.n, d_min=args.d_min, d_max=args.d_max, gamma=args.gamma, alpha=args.alpha
    )


def cmd_generate(args) -> int:
    mdp, sampling = random_mdp(args.seed, args.states, args.actions, args.gamma)
    save_mdp(args.out, mdp, sampling)
    print(f"wrote {args.out}")
    return 0


def cmd_solve(args) -> int:
    mdp, _sampling = load_mdp(args.mdp)
    q_star = optimal_q(mdp, tol=args.tol)
    residual = float(np.abs(bellman_operator(mdp, q_star) - q_star).max())
    print("s,a,q_star")
    for s in range(mdp.n_states):
        for a in range(mdp.n_actions):
            print(f"{s},{a},{q_star[a * mdp.n_states + s]:.17g}")
    print(f"bellman_residual,{residual:.17e}")
    return 0


def cmd_simulate(args) -> int:
    config = ExperimentConfig(
        alpha=args.alpha, horizon=args.horizon, n_trials=args.trials,
        base_seed=args.seed, mdp_file=args.mdp, n_workers=args.workers,
    )
    model = build_model(config)
    sim = simulate_trials(
        model,
        n_trials=config.n_trials,
        horizon=config.horizon,
        base_seed=config.base_seed,
        q0=initial_q(config, model),
        coupled=True,
        sandwich_tol=config.sandwich_tol,
        check_error_identity=True,
        raise_on_violation=True,
        n_workers=effective_workers(config.n_workers),
    )
    write_trajectory_csv(args.out, sim)
    print(f"wrote {args.out}")
    if not args.no_figures:
        from switchq import figures

        png = Path(args.out).with_suffix(".png")
        figures.save_trajectory_figure(png, sim)
        print(f"wrote {png}")
    return 0


def cmd_verify(args) -> int:
    config = ExperimentConfig(
        alpha=args.alpha, horizon=args.horizon, n_trials=args.trials,
        base_seed=args.seed, mdp_file=args.mdp, epsilon=args.epsilon,
        n_workers=args.workers, bound_scale=args.bound_scale,
    )
    report = full_verification(config)
    text = report.to_json()
    if args.out:
        out = Path(args.out)
        out.write_text(text + "\n")
        write_metrics_csv(out.with_name(out.stem + "_metrics.csv"), report.metrics)
        write_curves_csv(out.with_name(out.stem + "_bounds.csv"), report.bounds)
        print(f"wrote {out}")
        if not args.no_figures:
            from switchq import figures

            png = out.with_name(out.stem + "_bounds.png")
            figures.save_bounds_figure(png, report.bounds, report.metrics)
            print(f"wrote {png}")
    else:
        print(text)
    print(f"pass={str(report.passed).lower()} wall_clock={report.wall_clock_s:.1f}s",
          file=sys.stderr)
    return 0 if report.passed else 1


def cmd_bounds(args) -> int:
    inputs = _bound_inputs_from_args(args)
    rows = curve_table(geometric_checkpoints(args.horizon), inputs, epsilon=args.epsilon)
    if args.out:
        write_curves_csv(args.out, rows)
        print(f"wrote {args.out}")
        if not args.no_figures:
            from switchq import figures

            png = Path(args.out).with_suffix(".png")
            figures.save_bounds_figure(png, rows)
            print(f"wrote {png}")
    else:
        print("k,theorem1,theorem2,corollary_a,corollary_b,abstract,markov_prob")
        for row in rows:
            print(",".join([str(row["k"])] + [
                format(row[c], ".17e")
                for c in ("theorem1", "theorem2", "corollary_a", "corollary_b",
                          "abstract", "markov_prob")
            ]))
    return 0


def cmd_complexity(args) -> int:
    inputs = _bound_inputs_from_args(args)
    result = sample_complexity(args.epsilon, inputs.n, inputs.d_min, inputs.d_max, inputs.gamma)
    print(f"n={inputs.n} d_min={inputs.d_min:.17g} d_max={inputs.d_max:.17g} "
          f"gamma={inputs.gamma:.17g} epsilon={args.epsilon:.17g}")
    print("alpha = eps^2 d_min^3 (1-gamma)^5 / (729 gamma^2 d_max^2 n^2) "
          f"= {result.alpha:.17g}")
    print("k_transient = 729 gamma^2 d_max^2 n^2 / (eps^2 d_min^4 (1-gamma)^6) "
          f"* ln(6 n^(3/2) / (eps (1-gamma))) = {result.k_transient:.17g}")
    print("k_switching = ln(24 gamma d_max n^(2/3) / (eps d_min (1-gamma)^2)) "
          f"* 1458 gamma^2 d_max^2 n^2 / (eps^2 d_min^4 (1-gamma)^6) = {result.k_switching:.17g}")
    print(f"k_min = {result.k_min}")
    print(f"vacuous = {str(result.vacuous).lower()}")
    return 0


def _add_mdp_or_scalars(sub) -> None:
    sub.add_argument("--mdp", help="instance JSON; supplies n, d_min, d_max, gamma")
    sub.add_argument("--n", type=_positive_int, help="number of state-action pairs")
    sub.add_argument("--d-min", dest="d_min", type=_positive_float,
                     help="minimum occupation frequency")
    sub.add_argument("--d-max", dest="d_max", type=_positive_float,
                     help="maximum occupation frequency")
    sub.add_argument("--gamma", type=_discount, default=0.9, help="discount factor")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="switchq",
        description="Constant step-size tabular Q-learning as a stochastic affine "
                    "switching system: simulate the coupled comparison systems and "
                    "verify the finite-time error bounds.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    g = subs.add_parser(
        "generate", help="write a seeded random instance as JSON",
        epilog="Probability rows are normalized positive uniforms, rewards are "
               "uniform in [-1, 1], so d(s,a) = p(s) beta(a|s) > 0 everywhere.",
    )
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("-s", "--states", type=_positive_int, required=True)
    g.add_argument("-a", "--actions", type=_positive_int, required=True)
    g.add_argument("--gamma", type=_discount, default=0.9)
    g.add_argument("-o", "--out", required=True)
    g.set_defaults(func=cmd_generate)

    s = subs.add_parser(
        "solve", help="print the optimal Q-function of an instance file",
        epilog="Fixed-point iteration for Q(s,a) = sum_s' P(s,a,s') "
               "[r(s,a,s') + gamma max_u Q(s',u)]; prints the table and the "
               "final residual.",
    )
    s.add_argument("mdp", help="instance JSON path")
    s.add_argument("--tol", type=_positive_float, default=1e-12)
    s.set_defaults(func=cmd_solve)

    sim = subs.add_parser(
        "simulate", help="run coupled trials and write the trajectory CSV",
        epilog="Each step updates one entry: Q(s,a) += alpha (r + gamma max_u "
               "Q(s',u) - Q(s,a)); the linear lower system and the switched "
               "upper system advance with the same noise realization, so "
               "(lower - Q*) <= (iterate - Q*) <= (upper - Q*) holds on every "
               "path. CSV columns: trial, k, err_inf, err_lower_l2, "
               "err_lower_inf, gap_upper_lower_inf, sandwich_ok.",
    )
    sim.add_argument("mdp", help="instance JSON path")
    sim.add_argument("--alpha", type=_step_size, default=0.01)
    sim.add_argument("-k", "--horizon", type=_nonneg_int, default=10_000)
    sim.add_argument("-n", "--trials", type=_positive_int, default=1000)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--workers", type=_positive_int, default=1)
    sim.add_argument("-o", "--out", required=True)
    sim.add_argument("--no-figures", action="store_true")
    sim.set_defaults(func=cmd_simulate)

    v = subs.add_parser(
        "verify", help="run the full bound and invariant verification",
        epilog="Gates empirical mean + 3*SE against theorem1 = 3 sqrt(a) n / "
               "(sqrt(d_min) (1-g)^1.5) + n ||Q0-Q*||_2 rho^k for the lower "
               "system and against theorem2 / corollary_a / corollary_b for "
               "the final iterate, and tallies contraction, nonnegativity, "
               "sandwich, boundedness, noise-moment, error-identity and "
               "switching-decay violations. Exit 0 iff everything passes.",
    )
    v.add_argument("mdp", help="instance JSON path")
    v.add_argument("--alpha", type=_step_size, default=0.01)
    v.add_argument("-k", "--horizon", type=_nonneg_int, default=10_000)
    v.add_argument("-n", "--trials", type=_positive_int, default=1000)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--epsilon", type=_positive_float, default=0.1)
    v.add_argument("--workers", type=_positive_int, default=1)
    v.add_argument("-o", "--out")
    v.add_argument("--no-figures", action="store_true")
    v.add_argument("--bound-scale", dest="bound_scale", type=float, default=1.0,
                   help=argparse.SUPPRESS)
    v.set_defaults(func=cmd_verify)

    b = subs.add_parser(
        "bounds", help="tabulate every bound curve as CSV",
        epilog="Columns: theorem1 (lower-system L2), theorem2 (final iterate, "
               "third term 4 a g d_max n^(2/3) k rho^(k-1) / (1-g)), corollary_a "
               "(peak envelope), corollary_b (step-size-free, coefficient 8), "
               "abstract (coefficient-4 comparison variant), markov_prob "
               "(clamped 1 - bound/epsilon).",
    )
    _add_mdp_or_scalars(b)
    b.add_argument("--alpha", type=_step_size, default=0.01)
    b.add_argument("-k", "--horizon", type=_nonneg_int, default=10_000)
    b.add_argument("--epsilon", type=_positive_float, default=0.1)
    b.add_argument("-o", "--out")
    b.add_argument("--no-figures", action="store_true")
    b.set_defaults(func=cmd_bounds)

    c = subs.add_parser(
        "complexity", help="step-size and iteration count for a target accuracy",
        epilog="alpha = eps^2 d_min^3 (1-gamma)^5 / (729 gamma^2 d_max^2 n^2); "
               "k_min is the larger of the transient and switching thresholds "
               "(each printed). gamma = 0 is rejected: the step-size formula "
               "divides by gamma^2.",
    )
    _add_mdp_or_scalars(c)
    c.add_argument("--alpha", type=_step_size, default=0.01,
                   help="only used when deriving inputs from --mdp")
    c.add_argument("--epsilon", type=_positive_float, required=True)
    c.set_defaults(func=cmd_complexity)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SandwichViolation as exc:
        print(f"verification failure: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
