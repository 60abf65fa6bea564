//! Invariant risk minimization (IRMv1) and ERM for linear models on
//! multi-environment tabular data, plus the tooling around it: synthetic
//! structural-causal-model calibration data, cross-organism expression
//! preprocessing, feature ranking, ranking-similarity metrics, and
//! deterministic augmentation/substitution sweeps.

pub mod dataset;
pub mod error;
pub mod fixture;
pub mod harness;
pub mod model;
pub mod preprocess;
pub mod ranking;
pub mod report;
pub mod scm;
pub mod store;

pub use dataset::{Environment, MultiEnvDataset, Organism, PipelineStep, Provenance};
pub use error::{Error, ErrorKind, Result};
pub use harness::{
    build_augmentation_plan, build_fixed_total_plan, build_substitution_plan, confidence_interval, run_sweep,
    run_sweep_with_workers, Cell, SimilarityMatrix, SweepMode, SweepPlan, SweepReport,
};
pub use model::{
    accuracy, environment_risk, irm_penalty, objective_gradient, predict_logits, total_objective, train, train_erm,
    train_from, training_objective, LinearModel, LossKind, TrainConfig, TrainedModel,
};
pub use preprocess::{ExpressionTable, HomologueMap, TableSource};
pub use ranking::{kendall_tau, rank_features, rbo_ext, top_k_overlap, Metric, RankedFeatureList};
pub use scm::{generate_scm_dataset, invariant_ideal, pooled_least_squares_oracle, OracleSolution, ScmSpec, Task};
