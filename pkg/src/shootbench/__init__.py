"""shootbench: multiple-shooting rocket landing across an integrator zoo.

The pipeline is config -> transcription -> solve -> validate -> report:

    from shootbench import build, solve, validate_solution, default_config

    problem = build("gl2", "min_fuel", default_config())
    result = solve(problem)
    report = validate_solution(result, default_config())

The ``bench`` module runs the paper-style campaigns over many methods at
once, and the ``shootbench`` console script exposes everything as
subcommands. See docs/nlp-format.md for handing a transcription to an
external solver.
"""

from .config import (config_hash, default_config, dump_config, load_config,
                     merge_config, validate_config)
from .dynamics import (ControlledODE, RocketParams, initial_state,
                       quaternion_ode, rocket_ode, scaled_ode,
                       state_time_derivatives, terminal_state)
from .errors import (ConfigError, DegenerateQuaternion, EvaluationFailure,
                     InsufficientHistory, NewtonDivergence,
                     NonFiniteDerivativeChain, NonFiniteState,
                     ReferenceIntegrationFailure, ShootbenchError,
                     UnsupportedCombination)
from .integrators import (IntegratorMethod, get_method, method_names,
                          project_quaternion)
from .tableau import (ButcherTableau, empirical_order, get_tableau,
                      is_symplectic, symplecticity_residual, tableau_names,
                      verify_order_conditions)
from .transcription import (ObjectiveSpec, TranscriptionProblem, build,
                            lr_norm)
from .solver import (SolveResult, SolverOptions, answer_evaluation_request,
                     export_problem, import_problem, solve)
from .validation import (ValidationReport, attitude_drift_fixture,
                         isolate_lte, quaternion_drift, reference_replay,
                         replay_open_loop, stiffness_ratio,
                         validate_solution)
from .bseries import principal_error_breakdown, principal_error_estimate
from .bench import (run_adversarial_comparison, run_divert_sweep,
                    run_integrator_sweep)

__version__ = "0.1.0"

__all__ = [
    "ButcherTableau", "ConfigError", "ControlledODE", "DegenerateQuaternion",
    "EvaluationFailure", "InsufficientHistory", "IntegratorMethod",
    "NewtonDivergence", "NonFiniteDerivativeChain", "NonFiniteState",
    "ObjectiveSpec", "ReferenceIntegrationFailure", "RocketParams",
    "ShootbenchError", "SolveResult", "SolverOptions",
    "TranscriptionProblem", "UnsupportedCombination", "ValidationReport",
    "answer_evaluation_request", "attitude_drift_fixture", "build",
    "config_hash", "default_config", "dump_config", "empirical_order",
    "export_problem", "get_method", "get_tableau", "import_problem",
    "initial_state", "is_symplectic", "isolate_lte", "load_config",
    "lr_norm", "merge_config", "method_names", "principal_error_breakdown",
    "principal_error_estimate", "project_quaternion", "quaternion_drift",
    "quaternion_ode", "reference_replay", "replay_open_loop", "rocket_ode",
    "run_adversarial_comparison", "run_divert_sweep", "run_integrator_sweep",
    "scaled_ode", "solve", "state_time_derivatives", "stiffness_ratio",
    "symplecticity_residual", "tableau_names", "terminal_state",
    "validate_config", "validate_solution", "verify_order_conditions",
    "__version__",
]
