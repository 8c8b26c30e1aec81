//! Asymptotic accuracy of Bayesian clustering with additional data sets.
//!
//! Given an initial (unlabeled) data set and candidate additional data sets,
//! the crate estimates the joint model, builds the Fisher information
//! matrices of the labeled, unlabeled and additional-data models, and scores
//! each candidate with the criterion
//!
//! ```text
//! IC = Π_i (1 + α μ_i) / (1 + α λ_i)
//! ```
//!
//! where `λ`, `μ` are generalized eigenvalues of the shared-parameter blocks
//! of the inverse Fisher matrices. `IC > 1` means the additional data reduce
//! the leading `1/n` term of the clustering error.

pub mod blocks;
pub mod criterion;
pub mod dataset;
pub mod error;
pub mod estimator;
pub mod experiment;
pub mod fisher;
pub mod format;
pub mod linalg;
pub mod mixtures;
pub mod rng;
pub mod scenarios;

pub use blocks::SharedBlocks;
pub use criterion::{ic_report, ICReport, Verdict};
pub use dataset::{Dataset, DatasetKind, LabeledPoint, PointShape};
pub use error::{Error, Result};
pub use estimator::{map_em, EmOptions, MapEstimate, PriorHyperparams};
pub use experiment::{run_trials, run_true_row, ExperimentConfig, TrialResult};
pub use fisher::{FisherMethod, FisherTriple, JPair, QuadratureGrid};
pub use mixtures::GaussianMixture;
pub use rng::Stream;
pub use scenarios::{
    layout_for, AdditionalModel, Coord, JointParameter, ParameterLayout, Scenario, ScenarioExtras, ScenarioKind,
    ScenarioSpec,
};
