//! Semiparametric information bounds for the Cox regression coefficient when
//! covariates are missing at random by design (two-phase sampling).

pub mod designs;
pub mod error;
pub mod field;
pub mod grid;
pub mod linalg;
pub mod mc;
pub mod model;
pub mod operators;
pub mod solver;
pub mod suite;
pub mod tables;

pub use designs::{
    allocate_stratified, case_cohort_model, case_cohort_model_with, published_table1, run_sweep, run_table1,
    sp_asymptotic_variance, stratified_model, AllocationRule, AreReport, AreRow, Baseline, CaseCohortSpec,
    PublishedTable, SpVariance, StratifiedSampling, StratifiedSpec, Stratum, SweepAxis, SweepBase, SweepFamily, SweepSpec,
    Table1Cell, Table1Fit, Table1Report, Table1Spec, TotalFraction,
};
pub use error::{BoundError, Result};
pub use field::{GridFunction, ScoreField, ScoreMask};
pub use grid::{GaussLegendre, TimeGrid};
pub use mc::{
    empirical_moments, ks_distance, simulate, sp_estimate, sp_estimator_variance_mc, validate_mc, Check, Moments,
    Observation, SpMcReport, ValidateOptions, ValidationReport,
};
pub use model::{
    CensoringAtom, CensoringLaw, CoefficientScope, CovariateLevel, FullDataModel, MissingnessDesign,
    Phase1Scope, PiecewiseConstant, SamplingEntry, SamplingTable,
};
pub use suite::operator_identities;
pub use tables::ObservedTables;
pub use operators::{
    apply_b, apply_d, apply_pi1, apply_r1, apply_r2, covariate_grid, d_at, fulldata_information,
    fulldata_information_pointwise, verify_decomposition, CensoringFunction,
    DEvaluator, DecompositionReport, DesignOperators, KTerms, NuisanceDirection, NuisanceScore, TimeFunction,
};
pub use solver::{
    compute_bound, grid_for, BoundOptions, BoundReport, BoundResult, DesignVariant, EfficientScoreSolution,
    GridStep, LinearSystem, Route, ScoreSolver, SolveMethod, SolveOptions,
};
