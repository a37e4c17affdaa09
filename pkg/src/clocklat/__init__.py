"""Numerics for postselected estimation and cloning of quantum clock states.

Exact lattice distributions, filter optimization along the fidelity/success
trade-off, asymptotic formulas, and a symmetric-subspace engine checking that
estimate-and-reprepare protocols simulate arbitrary cloners on small output
groups.
"""

__version__ = "0.1.0"

from .errors import CapExceededError, ConfigError, ConvergenceError
from .lattice import (
    ClockSpec,
    EquivalenceReport,
    Moments,
    SmithForm,
    enumerate_partitions,
    equivalent_representation_check,
    lattice_size,
    moments,
    partition_count,
    smith_form,
    smith_vector,
    smith_vectors,
    unit_cell_volume,
)
from .distributions import (
    ApproximationReport,
    EnergyDistribution,
    GaussianApprox,
    approximation_error,
    exact_distribution,
    exact_masses_in_box,
    gaussian_approx,
    gaussian_mass,
    guess_distribution,
    lattice_points,
)
from .fidelity import (
    ClonerSolution,
    FidelityResult,
    Filter,
    SandwichRow,
    asymptotic_fidelity,
    cloning_bound,
    cloning_fidelity_exact,
    pm_fidelity_exact,
    pm_fidelity_via_measurement,
    sandwich_experiment,
)
from .tradeoff import (
    TradeoffPoint,
    WaterfillSolution,
    high_succ_expansion,
    kkt_certificate,
    low_succ_fidelity,
    optimal_fidelity_exact,
    random_feasible_xi,
    tradeoff_at_succ,
    tradeoff_parametric,
    upper_incomplete_gamma,
    waterfill,
)
from .cloner import (
    ChoiOperator,
    GapReport,
    KCopyFidelity,
    StateFamily,
    SymmetricSpace,
    average_input,
    compress_dense_state,
    definetti_gap,
    kcopy_fidelity,
    measure_and_prepare,
    omega_operator,
    one_norm,
    optimal_cloner,
    partial_trace_to_k,
    random_pure_states,
    subset_overlap_operator,
    symmetric_basis,
    trace_distance,
)
