"""Game-based coalescence of rational agents: stage game, dynamics, theory."""

from .analysis import (
    EmpiricalDist,
    ProbBounds,
    TheoreticalDist,
    compare,
    expectation_bounds,
    kernel_bounds,
    monotonicity_scan,
    negbinom,
    p_hat,
    pmf_bounds,
    xi_range,
)
from .dynamics import (
    BoxInit,
    ExplicitInit,
    TrialConfig,
    TrialResult,
    init_population,
    make_config,
    monte_carlo,
    play_round,
    run_trial,
    select_pair,
)
from .game import (
    MixedProfile,
    StageGame,
    aggregate_payoff,
    build_game,
    closed_form_ne,
    coalescence_prob,
    solve_ne_2x2,
    utility,
)
from .payoff import (
    PayoffSpec,
    PowerLawSpec,
    eval_cost,
    eval_profit,
    polynomial_spec,
    tabulated_spec,
    validate_spec,
)

__version__ = "0.1.0"
