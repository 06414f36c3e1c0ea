"""Stochastic phase-space sampling of quantum many-body problems.

Weighted trajectory ensembles (doubled coherent-state and Wigner samplings
for bosons, Gaussian Green's-function sampling for fermions) evolved by a
generic Ito integrator, validated against built-in exact-diagonalization
oracles at small scale.
"""

from .ensemble import (
    FERMI,
    POSITIVE_P,
    WIGNER,
    Ensemble,
    EstimationError,
    FermiPoint,
    ObservableEstimate,
    PhasePoint,
    coherent_ensemble,
    derive_noise,
    estimate_quadratic_moment,
    trajectory_rng,
    weighted_mean,
)
from .engine import (
    EvolveResult,
    MomentSeries,
    SdeProblem,
    StepSchedule,
    evolve,
    step_ito_euler,
    step_ito_midpoint,
)
from .bosons import (
    BoseLatticeModel,
    KerrGaugeConfig,
    bose_hubbard_positive_p,
    bose_hubbard_wigner,
    collision_model,
    estimate_field,
    estimate_g1,
    estimate_g2,
    estimate_number,
    estimate_quadrature_variances,
    estimate_total_number,
    gp_ground_profile,
    init_collision_state,
    init_wigner,
    kerr_initial_ensemble,
    kerr_problem,
    time_reverse,
    to_momentum_space,
)
from .fermions import (
    FermiHubbardModel,
    ThermalSchedule,
    estimate_double_occupancy,
    estimate_energy,
    estimate_filling,
    fermi_hubbard_problem,
    init_infinite_temperature,
)
from .oracle import (
    CutoffError,
    OracleSizeError,
    coherent_cutoff,
    ed_bose_evolve,
    ed_fermi_thermal,
    free_fermi_thermal,
    kerr_expectation_a,
    kerr_expectation_a2,
)

__version__ = "0.1.0"
