"""Time-inhomogeneous random walks on dynamic graphs with a common
stationary distribution: exact spectral and stopping-time computations,
seeded Monte Carlo simulation of multiple/coalescing walks and pull voting,
and numerical verification of the underlying inequalities at desk scale.
"""

from .chain import (
    ChainError,
    MatrixDiagnostics,
    SpectralSummary,
    conductance,
    dirichlet_form,
    exact_hitting_times,
    is_lazy,
    is_irreducible,
    is_reversible,
    killed_matrix,
    lp_distance,
    spectral_radius_killed,
    spectrum,
    stationary,
    t_hit,
    validate,
)
from .schedule import (
    ChainSchedule,
    ScheduleSummary,
    non_hit_probability,
    product,
    random_reversible_matrix,
    random_reversible_schedule,
    schedule_summary,
    separation_time,
    uniform_mixing_time,
)
from .graphs import (
    DynamicGraphSchedule,
    GraphSnapshot,
    PermutationSchedule,
    dmax_lazy_kernel,
    lazy_metropolis_kernel,
    lazy_simple_kernel,
    ot_double_star,
    sisyphus_schedule,
    standard_graph,
)
from .sim import (
    EnsembleState,
    EstimateReport,
    KillingSchedule,
    RngStream,
    killing_schedule,
    simulate_coalesce,
    simulate_cover,
    simulate_hit,
    simulate_killed,
    simulate_meet,
    step,
)
from .voting import (
    SelectionMatrix,
    VotingState,
    duality_check,
    reversed_schedule,
    selection_measure,
    simulate_consensus,
    vote_step,
    winning_probability,
)
from .edge_markovian import (
    EdgeMarkovianParams,
    EdgeStateVector,
    IntervalPlan,
    expander_probe,
    generate,
    interval_plan,
    m_power_closed_form,
)
from .properties import CheckResult, run_suite

__version__ = "0.1.0"
