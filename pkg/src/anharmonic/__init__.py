"""Stochastic phase-space simulation of the anharmonic oscillator.

Maps polynomial boson Hamiltonians to truncated-Wigner and positive-P
trajectory models, estimates quadrature cumulants with batch error bars,
and benchmarks both methods against exact Fock-space evolution.
"""

from .config import SimulationConfig, parse_config
from .engine import (
    NoiseIncrement,
    PhaseState,
    TimeGrid,
    build_noise,
    evolve_ensemble,
    run_positive_p,
    run_truncated_wigner,
    run_wigner_drift,
    step_stratonovich_midpoint,
    step_tw_exact,
)
from .moments import (
    CumulantReport,
    MomentAccumulator,
    MomentVector,
    QuadratureSpec,
    accumulate,
    batch_error,
    cumulants,
    quadrature_moments_positive_p,
    quadrature_moments_wigner,
)
from .oracle import (
    OracleState,
    dense_brute_force,
    init_coherent,
    ladder_moment,
    oracle_cumulants,
)
from .sampling import (
    InitialStateSpec,
    RandomStream,
    sample_positive_p_coherent,
    sample_wigner_coherent,
    stream_for_trajectory,
)
from .symbolic import (
    DriftDiffusionModel,
    OperatorWord,
    PhasePolynomial,
    derive_positive_p_model,
    derive_wigner_model,
    differentiate,
    drift_divergence,
    evaluate,
    ito_to_stratonovich,
    kerr_hamiltonian,
    normal_order,
)

__version__ = "0.1.0"
