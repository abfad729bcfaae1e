"""Exact bias, bias bounds, and Monte Carlo error estimates for the
Good-Turing missing-mass estimator on rank-2 Markov chains."""

from .chains import (
    FAMILY_NAMES,
    Bands,
    Distribution,
    Rank2Decomposition,
    ReducibleError,
    RowClassChain,
    build_family,
    build_iid,
    build_p1,
    build_p2,
    build_p3,
    build_periodic_kronecker,
    build_reducible_two_block,
    build_sticky,
    even_k1,
    rank2_decompose,
    stationary_distribution,
)
from .params import (
    ExponentFit,
    SpectralParams,
    compute_params,
    dominant_term_fit,
    max_tv_gap,
    spectral_gap,
    weighted_norm_lambda_pi,
    weighted_norm_numeric,
)
from .exact_bias import (
    BiasReport,
    OccupancyTail,
    PerStateSpectral,
    brute_force_bias,
    exact_bias,
    exact_bias_periodic,
    gamma_x,
    occupancy_tail,
    per_state_spectral,
    prob_no_visit_given_not_x,
    prob_no_visit_given_x,
    srd_matrix,
    srd_power,
    transfer_matrix_tail,
)
from .bounds import (
    BoundConstants,
    BoundRateRow,
    BoundRateTable,
    BoundReport,
    InapplicableError,
    StatePartition,
    bound_rate_table,
    corollary1_bound,
    corollary2_bound,
    kontorovich_tail,
    naor_tail,
    partition_states,
    theorem1_bound,
)
from .simulate import (
    SampleRun,
    SimResult,
    active_backend,
    estimate_bias_mse,
    good_turing,
    missing_mass,
    mix_seed,
    rate_fit,
    sample_chain,
)

__version__ = "0.1.0"
