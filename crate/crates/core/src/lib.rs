//! Measuring the causal effect of result-page arrangement on clicks.
//!
//! * [`serp`]: page and click-event model, the canonical wire format.
//! * [`arrangement`]: the counterfactual page transforms `a0`..`a6`.
//! * [`assignment`]: hash-based, reload-stable treatment assignment.
//! * [`sim`]: click-model simulator, used as an exact oracle and event source.
//! * [`estimators`]: CTR, performativity gap, algorithmic distortion,
//!   bootstrap intervals, performative-power bound, subgroup analyses.
//! * [`preprocess`], [`report`], [`eventlog`]: the analysis pipeline.

pub mod arrangement;
pub mod assignment;
pub mod config;
pub mod estimators;
pub mod eventlog;
pub mod preprocess;
pub mod report;
pub mod serp;
pub mod sim;

pub use arrangement::{apply, hide_kinds, swap_generic, ApplyResult, ArrangementError};
pub use assignment::{
    assign, normalize_query, stable_hash, AssignmentError, AssignmentKey, ExperimentConfig,
    GroupWeights,
};
pub use config::{ConfigError, KvConfig};
pub use estimators::{
    bootstrap_ci, compose_power, ctr_hat, distortion_hat, gap_hat, percentile_bins,
    pp_lower_bound, split_by, BootstrapConfig, DistortionEstimate, EstimatorError, GapEstimate,
    SplitPredicate,
};
pub use preprocess::{preprocess, DropReport, PreprocessConfig};
pub use report::{build_report, EstimateReport, ReportConfig};
pub use serp::{
    ArrangementId, ClickEvent, Column, ElementId, ElementKind, Engine, SerpElement, SerpSnapshot,
    Slot,
};
pub use sim::{
    click_distribution, generate_population, sample_events, true_ctr, true_gap, true_pp,
    ClickModelParams, Coupling, PopulationSpec, SamplingPlan, SimError, SyntheticQuery,
};
