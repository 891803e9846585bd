//! Ramsey spectroscopy with two atomic groups under collective dephasing:
//! closed-form and full-basis dynamics, gate and readout imperfections, and
//! the Fisher-information analysis of excited-count measurements.

pub mod dephasing;
pub mod error;
pub mod fock;
pub mod lindblad;
pub mod metrology;
pub mod noise;

pub use dephasing::{
    dephasing_dissipator, rho_stationary, rho_stationary_derivative, rho_t, stat_eigensystem,
    AnalyticModel, DephasingParams, DephasingRegime, StatEigensystem, TwoGroupDensityMatrix,
};
pub use error::{Error, Result};
pub use fock::{
    binom, hadamard_symmetric, initial_state, misclassify_counts, readout_flip_matrix,
    CountDistribution, GroupSize, TwoGroupFockState, C64,
};
pub use lindblad::{
    count_distribution, count_distribution_with_derivative, dephasing_eigenvalue,
    emission_time_optimum, f_max_along_trajectory, AtomicDensityMatrix, AtomicModel, EngineConfig, Integrator,
    LindbladEngine, LindbladParams, SensitivityPair,
};
pub use metrology::{
    benchmarks, cr_bound, cr_bounds, fisher_information, improvement_full, linear_fit, maximize_f,
    optimal_time_search, qfi, BenchmarkSet, CountModel, Engine, ExperimentParams, FisherResult,
    FitResult, TimeOptimum, TimeSearch,
};
pub use noise::{
    classical_reduction_distribution, imperfect_hadamard, measurement_povm, GateFidelities,
    ReductionModel,
};
