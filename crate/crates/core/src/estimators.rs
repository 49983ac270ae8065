//! The five fitting procedures: closed-form maximum likelihood for rooted
//! samples, the simple-average lower-bound estimator and EM (with optional
//! Dirichlet regularization) for unrooted samples, plus the CCD and SRF
//! baselines.
//!
//! All SBN fits reduce to relative frequencies of a counts table: the root
//! distribution is the normalized root tally and each (parent, focal)
//! group's child distribution is the normalized PCSP tally within the
//! group. EM alternates expected counts under the current parameters with
//! that same closed-form update; each iteration cannot decrease the
//! (regularized) log-likelihood, which the fit verifies as it runs.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::clade::Clade;
use crate::counting::{collect_em_counts, collect_sa_counts, CountError, CountsTable};
use crate::evaluation::EvalError;
use crate::model::{
    CcdParams, EmConfig, EmDiagnostics, EmInit, ModelError, ParentCpds, SbnParams, SrfParams,
};
use crate::subsplit::Subsplit;
use crate::topology::{RootedTopology, TreeId, UnrootedTopology};

#[derive(Error, Debug, Clone, PartialEq)]
pub enum FitError {
    #[error("empty training sample")]
    EmptyInput,
    #[error("trees with mixed taxon sets")]
    TaxaMismatch,
    #[error(
        "EM log-likelihood decreased at iteration {iteration}: {prev} -> {next}; \
         this indicates an implementation bug"
    )]
    EmRegression {
        iteration: usize,
        prev: f64,
        next: f64,
    },
    #[error(transparent)]
    Count(#[from] CountError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Relative-frequency parameters from a counts table: the shared closed
/// form behind the ML, SA, and EM M-step updates. Zero-weight entries are
/// dropped (zero probability and absence are the same thing).
fn params_from_counts(counts: &CountsTable) -> Result<SbnParams, FitError> {
    if counts.is_empty() {
        return Err(FitError::EmptyInput);
    }
    let root_total = counts.root_total();
    if root_total.is_nan() || root_total <= 0.0 {
        return Err(FitError::EmptyInput);
    }
    let mut root_dist = BTreeMap::new();
    for (s, &w) in counts.root_counts() {
        if w > 0.0 {
            root_dist.insert(s.clone(), w / root_total);
        }
    }
    // Group totals per (parent, focal side).
    let mut group_totals: BTreeMap<(Subsplit, bool), f64> = BTreeMap::new();
    for (key, &w) in counts.pcsp_counts() {
        let on_y = key.focal() == key.parent().y();
        *group_totals
            .entry((key.parent().clone(), on_y))
            .or_insert(0.0) += w;
    }
    let mut cond: BTreeMap<Subsplit, ParentCpds> = BTreeMap::new();
    for (key, &w) in counts.pcsp_counts() {
        if w <= 0.0 {
            continue;
        }
        let on_y = key.focal() == key.parent().y();
        let total = group_totals[&(key.parent().clone(), on_y)];
        let cpds = cond.entry(key.parent().clone()).or_default();
        let side = if on_y { &mut cpds.y } else { &mut cpds.z };
        side.insert(key.child().clone(), w / total);
    }
    Ok(SbnParams::new(
        counts.taxa().clone(),
        root_dist,
        cond,
        1e-9,
    )?)
}

/// Maximum likelihood for rooted samples: root probabilities m_{s1}/K and
/// conditionals normalized within each (parent, focal) group.
pub fn fit_ml_rooted(counts: &CountsTable) -> Result<SbnParams, FitError> {
    params_from_counts(counts)
}

/// The maximum simple-average lower-bound estimator: the same closed forms
/// applied to the uniform-rooting counts of an unrooted sample.
pub fn fit_sa(trees: &[(&UnrootedTopology, f64)]) -> Result<SbnParams, FitError> {
    params_from_counts(&collect_sa_counts(trees)?)
}

fn uniform_over_support(counts: &CountsTable) -> Result<SbnParams, FitError> {
    let mut uniform = CountsTable::new(counts.taxa().clone());
    for s in counts.root_counts().keys() {
        uniform.add_root(s.clone(), 1.0);
    }
    for k in counts.pcsp_counts().keys() {
        uniform.add_pcsp(k.clone(), 1.0);
    }
    uniform.add_trees(counts.root_counts().len() as f64);
    params_from_counts(&uniform)
}

fn em_converged(prev: f64, next: f64, k: f64, rel_tol: f64) -> bool {
    if !prev.is_finite() || !next.is_finite() {
        return prev == next;
    }
    let per_tree_prev = prev / k;
    let per_tree_next = next / k;
    (per_tree_next - per_tree_prev).abs() <= rel_tol * per_tree_prev.abs().max(1.0)
}

/// The Dirichlet-prior term of the regularized objective:
/// alpha * sum of m~ log p over the equivalent counts.
fn regularization_term(params: &SbnParams, alpha: f64, equivalent: &CountsTable) -> f64 {
    let mut total = 0.0;
    for (s, &m) in equivalent.root_counts() {
        if m > 0.0 {
            total += alpha * m * params.root_prob(s).ln();
        }
    }
    for (key, &m) in equivalent.pcsp_counts() {
        if m > 0.0 {
            total += alpha * m * params.pcsp_prob(key).ln();
        }
    }
    total
}

/// Expectation maximization over the missing root, with conditional
/// probability sharing. With `alpha > 0` the M-step adds `alpha` times the
/// simple-average frequency counts of the same sample as equivalent counts,
/// and the monitored objective is the correspondingly regularized
/// log-likelihood. Each iteration costs one pass of expected counts; the
/// objective value falls out of the same per-tree joint sums.
pub fn fit_em(
    trees: &[(&UnrootedTopology, f64)],
    cfg: &EmConfig,
) -> Result<(SbnParams, EmDiagnostics), FitError> {
    let sa_counts = collect_sa_counts(trees)?;
    let k: f64 = trees.iter().map(|&(_, w)| w).sum();

    let mut params = match &cfg.init {
        EmInit::SimpleAverage => params_from_counts(&sa_counts)?,
        EmInit::UniformObserved => uniform_over_support(&sa_counts)?,
        EmInit::Explicit(p) => {
            if *p.taxa().as_ref() != *sa_counts.taxa().as_ref() {
                return Err(FitError::TaxaMismatch);
            }
            p.clone()
        }
    };
    let objective = |em: &crate::counting::EmCounts, params: &SbnParams| -> f64 {
        let mut value = em.data_log_likelihood;
        if cfg.alpha > 0.0 {
            value += regularization_term(params, cfg.alpha, &sa_counts);
        }
        value
    };

    // The E-step at the top of each iteration also yields the objective at
    // the current parameters, so the value after iteration i's M-step
    // arrives with iteration i+1's counts (or the trailing E-step).
    let mut em = collect_em_counts(trees, &params)?;
    let mut ll = objective(&em, &params);
    let mut log_likelihoods = vec![ll];
    let mut iterations = 0;
    let slack = 1e-8 * k.max(1.0);

    for iteration in 1..=cfg.max_iters {
        let mut combined = em.counts;
        if cfg.alpha > 0.0 {
            combined.add_scaled(&sa_counts, cfg.alpha)?;
        }
        params = params_from_counts(&combined)?;
        em = collect_em_counts(trees, &params)?;
        let next = objective(&em, &params);
        log_likelihoods.push(next);
        iterations = iteration;
        if next < ll - slack {
            return Err(FitError::EmRegression {
                iteration,
                prev: ll,
                next,
            });
        }
        let done = em_converged(ll, next, k, cfg.rel_tol);
        ll = next;
        if done {
            break;
        }
    }

    Ok((
        params,
        EmDiagnostics {
            log_likelihoods,
            iterations,
            zero_support_trees: em.zero_support_trees,
        },
    ))
}

/// CCD from a rooted sample: per-clade subsplit relative frequencies over
/// every internal node whose clade has at least three taxa.
pub fn fit_ccd_rooted(trees: &[(&RootedTopology, f64)]) -> Result<CcdParams, FitError> {
    if trees.is_empty() {
        return Err(FitError::EmptyInput);
    }
    let taxa = trees[0].0.taxa().clone();
    let mut tallies: BTreeMap<Clade, BTreeMap<Subsplit, f64>> = BTreeMap::new();
    for &(t, w) in trees {
        if *t.taxa().as_ref() != *taxa {
            return Err(FitError::TaxaMismatch);
        }
        let clades = t.clades();
        for v in 0..t.n_nodes() {
            let Some((l, r)) = t.children(v) else {
                continue;
            };
            if clades[v].count() < 3 {
                continue;
            }
            let split = Subsplit::new(clades[l].clone(), clades[r].clone())
                .expect("child clades are disjoint and nonempty");
            *tallies
                .entry(clades[v].clone())
                .or_default()
                .entry(split)
                .or_insert(0.0) += w;
        }
    }
    let mut clade_dist = BTreeMap::new();
    for (clade, dist) in tallies {
        let total: f64 = dist.values().sum();
        let normalized: BTreeMap<Subsplit, f64> = dist
            .into_iter()
            .filter(|&(_, w)| w > 0.0)
            .map(|(s, w)| (s, w / total))
            .collect();
        clade_dist.insert(clade, normalized);
    }
    Ok(CcdParams::new(taxa, clade_dist, 1e-9)?)
}

/// CCD from an unrooted sample. Each tree is given the reference rooting on
/// the pendant edge of the lowest-indexed taxon, a bijection between
/// unrooted trees and rooted trees with that root split, so the fitted CCD
/// is a proper distribution over unrooted trees.
pub fn fit_ccd(trees: &[(&UnrootedTopology, f64)]) -> Result<CcdParams, FitError> {
    if trees.is_empty() {
        return Err(FitError::EmptyInput);
    }
    let rooted: Vec<(RootedTopology, f64)> = trees
        .iter()
        .map(|&(t, w)| {
            let r = t
                .root_at_edge(t.pendant_edge_of(0))
                .expect("pendant edge id is in range");
            (r, w)
        })
        .collect();
    let refs: Vec<(&RootedTopology, f64)> = rooted.iter().map(|(t, w)| (t, *w)).collect();
    fit_ccd_rooted(&refs)
}

/// Sample relative frequencies over observed tree ids.
pub fn fit_srf(trees: &[(&UnrootedTopology, f64)]) -> Result<SrfParams, FitError> {
    if trees.is_empty() {
        return Err(FitError::EmptyInput);
    }
    let taxa = trees[0].0.taxa().clone();
    let mut tallies: BTreeMap<TreeId, f64> = BTreeMap::new();
    let mut total = 0.0;
    for &(t, w) in trees {
        if *t.taxa().as_ref() != *taxa {
            return Err(FitError::TaxaMismatch);
        }
        *tallies.entry(t.tree_id()).or_insert(0.0) += w;
        total += w;
    }
    let probs = tallies.into_iter().map(|(id, w)| (id, w / total)).collect();
    Ok(SrfParams::new(taxa, probs, 1e-9)?)
}
