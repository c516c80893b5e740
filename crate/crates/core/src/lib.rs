//! Numerical laboratory for heat semigroups on Euclidean domains.
//!
//! Estimates `exp(-tH)` three ways — Dirichlet-stopped paths, penetration-
//! stopped paths and penalized potentials — and measures whether they agree,
//! which hinges on how the domain's boundary is seen by Brownian paths.
//! A sparse grid realization cross-checks the Monte-Carlo results and
//! verifies the monotone penalization limits directly in finite dimensions.

pub mod estimator;
pub mod geometry;
pub mod grid;
pub mod linalg;
pub mod path;
pub mod potential;
pub mod probe;
pub mod rng;

pub use estimator::{
    csv_row, dirichlet_semigroup, free_semigroup, kac_gap, mean_value_check, penalized_semigroup,
    penetration_semigroup, step_budget, EnsembleRequest, EstimateParams, EstimatorError,
    EstimatorKind, FieldFn, KacGap, MeanValueReport, SemigroupEstimate, BUDGET_COEFF, CSV_HEADER,
};
pub use geometry::{
    BarrierPrimitive, Bulk, ExhaustScheme, Exhaustion, Face, FaceGate, GeometryError, Region,
    DELTA_GEOM,
};
pub use grid::{
    apply_semigroup, build_laplacian, dirichlet_restriction, monotone_form_limit_check, penalize,
    penalization_limit_check, DefectReport, DefectRow, GridError, GridSpec, MonotoneCase,
    SparseSymmetricOperator,
};
pub use linalg::{symm_tridiag_eig, CMat, LinalgError};
pub use path::{
    accumulate_functionals, exit_time, penetration_time, sample_path, stopping_times,
    FunctionalState, PathError, PathSample, PotentialRef, StopDetector, StoppingTimes,
};
pub use potential::{
    coulomb, decompose, indicator_penalty, kato_norm, kato_probe_table, GaugeForm, KatoRow,
    MatrixPotential, PotentialError, ScalarPotential,
};
pub use probe::{
    exhaustion_consistency, regularity_battery, ExhaustionCheck, ProbeError, RegularityReport,
    Verdict,
};
pub use rng::PathStream;
