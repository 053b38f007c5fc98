"""Phase-locked solutions of lattice oscillator networks and their stability.

Build a solution, linearize it into a weighted graph, audit that graph, and
measure heat-kernel and nonlinear decay rates at finite truncation.
"""
__version__ = "0.1.0"

from .errors import (  # noqa: E402
    BoundaryGuardError,
    ConvergenceError,
    GraphError,
    HypothesisGateError,
    PhaselockError,
)
from .graph_core import (  # noqa: E402
    Lattice,
    Neighborhoods,
    WeightedGraph,
    apply_laplacian,
    ball,
    ball_volume,
    build_lattice_graph,
    graph_metric,
    lp_norm,
    q_form,
)
from .heat_kernel import (  # noqa: E402
    DecayFit,
    HeatKernelEstimate,
    empirical_distribution,
    fit_decay,
    fit_gradient_decay,
    sample_ctrw,
    semigroup_apply,
    transition_row,
    transition_rows,
)
from .linearization import InducedGraphBundle, check_hypotheses, linearize, normalized_generator_apply  # noqa: E402
from .phase_system import (  # noqa: E402
    Coupling,
    PhaseLockedSolution,
    PhaseSystem,
    integrate_perturbation,
    nonlinear_remainder,
    perturbation_rhs,
    phase_lag_residual,
    solve_phase_locked,
)
from .property_check import check_delta, check_rough_isometry, check_vg, estimate_poincare_constant  # noqa: E402
from .solutions import (  # noqa: E402
    build_family,
    chain_lags,
    doubly_periodic_lags,
    rotating_wave_lags,
    trivial_lags,
)
from .experiments import (  # noqa: E402
    StabilityExperimentConfig,
    StabilityReport,
    run_stability_experiment,
    spectrum_probe,
    verify_integral_lemma,
    verify_q_semigroup_decay,
    verify_remainder_bound,
)

__all__ = [
    "__version__",
    "BoundaryGuardError",
    "ConvergenceError",
    "GraphError",
    "HypothesisGateError",
    "PhaselockError",
    "Lattice",
    "Neighborhoods",
    "WeightedGraph",
    "apply_laplacian",
    "ball",
    "ball_volume",
    "build_lattice_graph",
    "graph_metric",
    "lp_norm",
    "q_form",
    "DecayFit",
    "HeatKernelEstimate",
    "empirical_distribution",
    "fit_decay",
    "fit_gradient_decay",
    "sample_ctrw",
    "semigroup_apply",
    "transition_row",
    "transition_rows",
    "Coupling",
    "PhaseLockedSolution",
    "PhaseSystem",
    "integrate_perturbation",
    "nonlinear_remainder",
    "perturbation_rhs",
    "phase_lag_residual",
    "solve_phase_locked",
    "build_family",
    "chain_lags",
    "doubly_periodic_lags",
    "rotating_wave_lags",
    "trivial_lags",
    "StabilityExperimentConfig",
    "StabilityReport",
    "run_stability_experiment",
    "spectrum_probe",
    "verify_integral_lemma",
    "verify_q_semigroup_decay",
    "verify_remainder_bound",
    "InducedGraphBundle",
    "check_hypotheses",
    "linearize",
    "normalized_generator_apply",
    "check_delta",
    "check_rough_isometry",
    "check_vg",
    "estimate_poincare_constant",
]
