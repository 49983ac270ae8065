//! Parameter containers for the fitted estimators.
//!
//! [`SbnParams`] holds a distribution over root splits plus one conditional
//! child distribution per (parent subsplit, focal side) context. Keys that
//! would pair a child with an incompatible context are simply absent, which
//! is what makes the induced tree distribution normalize. Probabilities are
//! stored in linear space; likelihood aggregation happens in log space.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::clade::Clade;
use crate::subsplit::{PcspKey, Subsplit};
use crate::taxa::TaxonSet;
use crate::topology::TreeId;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum ModelError {
    #[error("{what} sums to {sum}, expected 1 within {tol}")]
    NotNormalized { what: String, sum: f64, tol: f64 },
    #[error("incompatible entry: {0}")]
    Incompatible(String),
    #[error("probability {0} out of range")]
    BadProbability(f64),
}

/// The two conditional child distributions of one parent subsplit: one per
/// focal side. Children stored under `y` split `parent.y()`, children under
/// `z` split `parent.z()`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParentCpds {
    pub y: BTreeMap<Subsplit, f64>,
    pub z: BTreeMap<Subsplit, f64>,
}

/// Subsplit Bayesian network parameters with conditional probability
/// sharing: a root split distribution and per-(parent, focal) child
/// distributions, indexed by value rather than by network location.
#[derive(Debug, Clone, PartialEq)]
pub struct SbnParams {
    taxa: Arc<TaxonSet>,
    root_dist: BTreeMap<Subsplit, f64>,
    cond: BTreeMap<Subsplit, ParentCpds>,
}

impl SbnParams {
    /// Validates normalization (each distribution sums to one within
    /// `tol`), compatibility, and probability ranges.
    pub fn new(
        taxa: Arc<TaxonSet>,
        root_dist: BTreeMap<Subsplit, f64>,
        cond: BTreeMap<Subsplit, ParentCpds>,
        tol: f64,
    ) -> Result<Self, ModelError> {
        let n = taxa.len();
        let full = Clade::full(n);
        for (s, &p) in &root_dist {
            check_prob(p)?;
            if s.clade() != full {
                return Err(ModelError::Incompatible(format!(
                    "root split {s} does not divide the full taxon set"
                )));
            }
        }
        check_sum("root distribution", root_dist.values(), tol)?;
        for (parent, cpds) in &cond {
            for (side, children) in [(parent.y(), &cpds.y), (parent.z(), &cpds.z)] {
                if children.is_empty() {
                    continue;
                }
                for (child, &p) in children {
                    check_prob(p)?;
                    if child.clade() != *side {
                        return Err(ModelError::Incompatible(format!(
                            "child {child} does not divide the focal clade of {parent}"
                        )));
                    }
                }
                check_sum(
                    &format!("conditional distribution at {parent}"),
                    children.values(),
                    tol,
                )?;
            }
        }
        Ok(SbnParams {
            taxa,
            root_dist,
            cond,
        })
    }

    pub fn taxa(&self) -> &Arc<TaxonSet> {
        &self.taxa
    }

    /// Probability of a root split; absent keys are zero.
    pub fn root_prob(&self, s: &Subsplit) -> f64 {
        self.root_dist.get(s).copied().unwrap_or(0.0)
    }

    /// Conditional probability of `child` splitting its clade given the
    /// `parent` subsplit; zero when the pair was never stored.
    pub fn cond_prob(&self, parent: &Subsplit, child: &Subsplit) -> f64 {
        let Some(cpds) = self.cond.get(parent) else {
            return 0.0;
        };
        let focal = child.clade();
        let side = if focal == *parent.y() {
            &cpds.y
        } else if focal == *parent.z() {
            &cpds.z
        } else {
            return 0.0;
        };
        side.get(child).copied().unwrap_or(0.0)
    }

    pub fn pcsp_prob(&self, key: &PcspKey) -> f64 {
        self.cond_prob(key.parent(), key.child())
    }

    pub fn root_dist(&self) -> &BTreeMap<Subsplit, f64> {
        &self.root_dist
    }

    pub fn n_root_splits(&self) -> usize {
        self.root_dist.len()
    }

    /// Number of stored PCSP parameters.
    pub fn n_pcsps(&self) -> usize {
        self.cond.values().map(|c| c.y.len() + c.z.len()).sum()
    }

    /// All conditional entries as (parent, focal, child, probability), in
    /// deterministic order.
    pub fn cond_entries(&self) -> impl Iterator<Item = (&Subsplit, &Clade, &Subsplit, f64)> {
        self.cond.iter().flat_map(|(parent, cpds)| {
            let ys = cpds.y.iter().map(move |(c, &p)| (parent, parent.y(), c, p));
            let zs = cpds.z.iter().map(move |(c, &p)| (parent, parent.z(), c, p));
            ys.chain(zs)
        })
    }
}

fn check_prob(p: f64) -> Result<(), ModelError> {
    if !(0.0..=1.0 + 1e-9).contains(&p) || !p.is_finite() {
        return Err(ModelError::BadProbability(p));
    }
    Ok(())
}

fn check_sum<'a>(
    what: &str,
    probs: impl Iterator<Item = &'a f64>,
    tol: f64,
) -> Result<(), ModelError> {
    let sum: f64 = probs.sum();
    if (sum - 1.0).abs() > tol {
        return Err(ModelError::NotNormalized {
            what: what.to_string(),
            sum,
            tol,
        });
    }
    Ok(())
}

/// Conditional clade distribution parameters: one subsplit distribution per
/// clade of size at least three (smaller clades split deterministically).
#[derive(Debug, Clone, PartialEq)]
pub struct CcdParams {
    taxa: Arc<TaxonSet>,
    clade_dist: BTreeMap<Clade, BTreeMap<Subsplit, f64>>,
}

impl CcdParams {
    pub fn new(
        taxa: Arc<TaxonSet>,
        clade_dist: BTreeMap<Clade, BTreeMap<Subsplit, f64>>,
        tol: f64,
    ) -> Result<Self, ModelError> {
        for (clade, dist) in &clade_dist {
            for (s, &p) in dist {
                check_prob(p)?;
                if s.clade() != *clade {
                    return Err(ModelError::Incompatible(format!(
                        "subsplit {s} does not partition its clade"
                    )));
                }
            }
            check_sum("clade distribution", dist.values(), tol)?;
        }
        Ok(CcdParams { taxa, clade_dist })
    }

    pub fn taxa(&self) -> &Arc<TaxonSet> {
        &self.taxa
    }

    pub fn prob(&self, clade: &Clade, split: &Subsplit) -> f64 {
        self.clade_dist
            .get(clade)
            .and_then(|d| d.get(split))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn clade_dist(&self) -> &BTreeMap<Clade, BTreeMap<Subsplit, f64>> {
        &self.clade_dist
    }

    pub fn n_clades(&self) -> usize {
        self.clade_dist.len()
    }

    pub fn n_splits(&self) -> usize {
        self.clade_dist.values().map(BTreeMap::len).sum()
    }
}

/// Sample relative frequencies: the empirical distribution over observed
/// tree ids.
#[derive(Debug, Clone, PartialEq)]
pub struct SrfParams {
    taxa: Arc<TaxonSet>,
    probs: BTreeMap<TreeId, f64>,
}

impl SrfParams {
    pub fn new(
        taxa: Arc<TaxonSet>,
        probs: BTreeMap<TreeId, f64>,
        tol: f64,
    ) -> Result<Self, ModelError> {
        for &p in probs.values() {
            check_prob(p)?;
        }
        check_sum("tree distribution", probs.values(), tol)?;
        Ok(SrfParams { taxa, probs })
    }

    pub fn taxa(&self) -> &Arc<TaxonSet> {
        &self.taxa
    }

    pub fn prob(&self, id: &TreeId) -> f64 {
        self.probs.get(id).copied().unwrap_or(0.0)
    }

    pub fn probs(&self) -> &BTreeMap<TreeId, f64> {
        &self.probs
    }

    pub fn n_trees(&self) -> usize {
        self.probs.len()
    }
}

/// Any fitted estimator, for format auto-detection and generic evaluation.
#[derive(Debug, Clone)]
pub enum FittedModel {
    Sbn(SbnParams),
    Ccd(CcdParams),
    Srf(SrfParams),
}

impl FittedModel {
    pub fn taxa(&self) -> &Arc<TaxonSet> {
        match self {
            FittedModel::Sbn(p) => p.taxa(),
            FittedModel::Ccd(p) => p.taxa(),
            FittedModel::Srf(p) => p.taxa(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            FittedModel::Sbn(_) => "sbn",
            FittedModel::Ccd(_) => "ccd",
            FittedModel::Srf(_) => "srf",
        }
    }
}

/// How EM should start.
#[derive(Debug, Clone, Default)]
pub enum EmInit {
    /// Simple-average estimates of the same sample.
    #[default]
    SimpleAverage,
    /// Uniform over the observed support.
    UniformObserved,
    /// Caller-supplied parameters.
    Explicit(SbnParams),
}

/// Expectation-maximization settings.
#[derive(Debug, Clone)]
pub struct EmConfig {
    /// Global regularization coefficient; zero disables regularization.
    /// When positive, the simple-average frequency counts of the training
    /// sample serve as the equivalent counts.
    pub alpha: f64,
    pub max_iters: usize,
    /// Stop when the per-tree (regularized) log-likelihood changes by less
    /// than this relative amount between iterations.
    pub rel_tol: f64,
    pub init: EmInit,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            alpha: 0.0,
            max_iters: 200,
            rel_tol: 1e-6,
            init: EmInit::SimpleAverage,
        }
    }
}

/// Convergence record of one EM fit.
#[derive(Debug, Clone)]
pub struct EmDiagnostics {
    /// (Regularized) log-likelihood at initialization and after each
    /// iteration; nondecreasing up to floating-point slack.
    pub log_likelihoods: Vec<f64>,
    /// Number of EM iterations performed.
    pub iterations: usize,
    /// Zero-support trees skipped in the final E-step.
    pub zero_support_trees: usize,
}
