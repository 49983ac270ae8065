//! Probability estimation over leaf-labeled bifurcating trees.
//!
//! Given a sample of trees (for instance phylogenetic MCMC output), this
//! crate fits probability distributions over the whole tree space and
//! evaluates them exactly at desk scale:
//!
//! - subsplit Bayesian network estimators with shared conditional
//!   parameters: closed-form maximum likelihood for rooted data, the
//!   simple-average lower-bound estimator for unrooted data, and
//!   expectation maximization with optional Dirichlet regularization;
//! - the conditional clade distribution and sample relative frequency
//!   baselines;
//! - exact per-tree probabilities (including an O(N) all-rootings
//!   computation), KL divergence scoring, exhaustive normalization audits,
//!   and a seeded simulation harness over enumerated tree spaces.

pub mod clade;
pub mod counting;
pub mod enumerate;
pub mod estimators;
pub mod evaluation;
pub mod fileio;
pub mod model;
pub mod newick;
pub mod simulation;
pub mod subsplit;
pub mod taxa;
pub mod topology;

pub use clade::Clade;
pub use counting::{
    collect_em_counts, collect_rooted_counts, collect_sa_counts, decompose_rooted, CountError,
    CountsTable, EmCounts, RootedDecomposition, RootingDistribution,
};
pub use enumerate::{
    enumerate_rooted, enumerate_unrooted, rooted_tree_count, unrooted_tree_count, DEFAULT_ENUM_CAP,
};
pub use estimators::{fit_ccd, fit_ccd_rooted, fit_em, fit_ml_rooted, fit_sa, fit_srf, FitError};
pub use evaluation::{
    ccd_prob, ccd_prob_rooted, kl_divergence, log_likelihood, normalization_audit_rooted,
    normalization_audit_unrooted, rooting_joints, sbn_prob_rooted, sbn_prob_unrooted,
    DiscreteDistribution, EvalError, JointMode, KlDirection, KlOptions, KlSupport,
    TreeDistribution, TreeSpace,
};
pub use fileio::FileError;
pub use model::{
    CcdParams, EmConfig, EmDiagnostics, EmInit, FittedModel, ModelError, SbnParams, SrfParams,
};
pub use newick::{parse_newick, NewickError, NewickErrorKind, ParsedTree};
pub use simulation::{
    dirichlet_target, dirichlet_weights, run_experiment, sample_trees, AlphaRule, ExperimentConfig,
    Method, ResultRow, ResultTable, SimError,
};
pub use subsplit::{PcspKey, Subsplit, SubsplitError};
pub use taxa::{TaxaError, TaxonSet};
pub use topology::{RootedTopology, TreeError, TreeId, UnrootedTopology};
