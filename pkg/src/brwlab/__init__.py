"""Monte Carlo laboratory for multi-dimensional branching random walks.

Computes the large-deviation constants (speed c1, tilt c2, and their
general-case vector analogues) by numerical convex conjugation, simulates
branching random walks with full genealogy under frontier pruning, and
runs replicated experiments for first-passage times, production numbers,
frontier clusters, and related tail asymptotics.
"""

from .errors import (
    BrwLabError,
    CapacityExceeded,
    ConfigError,
    ConvergenceFailure,
    DomainError,
    EmptyGeneration,
    InsufficientEvents,
    InsufficientHits,
    InvalidNode,
    NoAcceptedSamples,
    QuadratureFailure,
    RangeError,
    RestartBudgetExhausted,
)
from .laws import (
    IncrementLaw,
    OffspringLaw,
    check_assumptions,
    gaussian,
    gaussian_diag,
    make_increment,
    make_offspring,
    shifted_mixture,
    uniform_ball,
    uniform_cube,
)
from .ratefn import (
    Asymptote,
    LdConstants,
    Projection,
    legendre_1d,
    legendre_nd,
    solve_constants,
    solve_speed_1d,
    solve_speed_nd,
)
from .engine import (
    GenealogyArena,
    PrunePolicy,
    RunOutcome,
    frontier_set,
    max_position,
    run_conditioned_on_survival,
    run_first_passage,
    run_growth,
    step,
    substream,
)
from .genealogy import (
    ClusterPartition,
    HeterogeneityRecord,
    barrier_crossings,
    clusters,
    genealogical_distance,
    lca,
    particle_count_profile,
    production_numbers,
    production_numbers_band,
)
from .stats import (
    ExperimentReport,
    TailFit,
    ballot_scaling,
    bootstrap,
    concentration_fit,
    conditional_transverse_hit,
    escape_prob,
    fpt_sweep,
    max_tail_fit,
    max_tightness,
    two_descendant_prob,
)

__version__ = "0.1.0"
