# switchq: tabular Q-learning with a constant step-size, viewed as a
# stochastic affine switching system, plus the machinery to verify its
# finite-time error bounds empirically and analytically at desk scale.
from switchq.mdp import (
    Mdp,
    SamplingModel,
    OccupationMeasure,
    DeterministicPolicy,
    ValidationReport,
    validate_mdp,
    occupation_measure,
    optimal_q,
    bellman_operator,
    greedy_policy,
    q_max_bound,
    random_mdp,
    stationary_distribution,
    load_mdp,
    save_mdp,
    pair_index,
)
from switchq.matrices import (
    SwitchingModel,
    SubsystemMatrices,
    stack_transitions,
    expected_rewards,
    action_transition,
    occupation_diagonal,
    subsystem_matrix,
    affine_input,
    subsystem_difference,
    decay_rate,
    inf_norm,
    is_nonnegative,
    policy_index,
    policy_from_index,
    enumerate_policies,
)
from switchq.dynamics import (
    Sample,
    CoupledState,
    SandwichViolation,
    SimulationResult,
    sample_transition,
    td_error,
    q_update,
    expected_increment,
    noise_vector,
    expected_noise,
    noise_second_moment,
    step_coupled,
    error_system_step,
    simulate_arbitrary_switching,
    autocorrelation_step,
    empirical_autocorrelation,
    simulate_trials,
)
from switchq.bounds import (
    BoundInputs,
    SampleComplexity,
    noise_second_moment_bound,
    trace_bound,
    lower_l2_bound,
    error_inf_bound,
    error_inf_bound_peak,
    error_inf_bound_loose,
    error_inf_bound_loose_alt,
    success_probability,
    sample_complexity,
    sufficiency_terms,
    curve_table,
)
from switchq.harness import (
    ExperimentConfig,
    Estimate,
    VerificationReport,
    build_model,
    run_trials,
    verify_bounds,
    verify_invariants,
    geometric_checkpoints,
)

__version__ = "0.1.0"
