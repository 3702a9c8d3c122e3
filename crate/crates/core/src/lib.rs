//! Minimum-volume-set machinery, conservativeness checks, and
//! correlation-agnostic density fusion on regular 1-D/2-D grids.

pub mod conservativeness;
pub mod density;
pub mod error;
pub mod experiments;
pub mod fusion;
pub mod grid;
pub mod mvs;

pub use conservativeness::{
    full_report, CheckSettings, ConservativenessReport, CovarianceComparison, PsdVerdict,
};
pub use density::{Density, DensityDescriptor, Gaussian, SymMatrix};
pub use experiments::{run_experiment, BandCheck, ExperimentId, ExperimentOutput, RunConfig};
pub use fusion::{FusedResult, FusionRule, FusionScenario, FusionScenarioFile};
pub use error::{Error, Result};
pub use grid::{GridDensity, KlDivergence};
pub use mvs::{AnalyticMvSet, ConditionCurves, MvOrder, MvSet};
