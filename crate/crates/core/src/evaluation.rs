//! Exact probability evaluation, KL scoring, and normalization audits.
//!
//! The unrooted SBN probability of a tree is the sum over its 2N-3
//! rootings of the rooted probability. The two-pass mode computes all
//! per-edge joints in O(N): one pass from the anchor leaf accumulates
//! "below" conditional products for directed edges pointing away from it,
//! a reversal pass fills the opposite directions, and each edge's joint is
//! assembled from the root-split probability, the two root-adjacent
//! conditionals, and the two below-products. A missing key means
//! probability zero, exactly; flooring exists only as a KL option.

use std::collections::HashMap;
use std::sync::Arc;

use thiserror::Error;

use crate::counting::{decompose_rooted, CountError, CountsTable};
use crate::enumerate::{enumerate_rooted, enumerate_unrooted};
use crate::model::{CcdParams, FittedModel, SbnParams, SrfParams};
use crate::subsplit::Subsplit;
use crate::taxa::TaxonSet;
use crate::topology::{RootedTopology, TreeError, TreeId, UnrootedTopology};

#[derive(Error, Debug, Clone, PartialEq)]
pub enum EvalError {
    #[error("parameters and tree are over different taxon sets")]
    TaxaMismatch,
    #[error("support not resolvable: the estimate cannot list its support")]
    UnresolvableSupport,
    #[error("invalid options: {0}")]
    BadOptions(String),
    #[error("distribution sums to {sum}, expected 1")]
    NotNormalized { sum: f64 },
    #[error(transparent)]
    Tree(#[from] TreeError),
}

impl From<CountError> for EvalError {
    fn from(e: CountError) -> Self {
        match e {
            CountError::TooFewTaxa(n) => EvalError::Tree(TreeError::TooFewTaxa { n, min: 3 }),
            CountError::TaxaMismatch => EvalError::TaxaMismatch,
            other => EvalError::BadOptions(other.to_string()),
        }
    }
}

fn check_taxa(a: &TaxonSet, b: &TaxonSet) -> Result<(), EvalError> {
    if a != b {
        return Err(EvalError::TaxaMismatch);
    }
    Ok(())
}

/// Rooted SBN probability: the product of the root-split probability and
/// the shared conditionals of every PCSP in the decomposition.
pub fn sbn_prob_rooted(params: &SbnParams, t: &RootedTopology) -> Result<f64, EvalError> {
    check_taxa(params.taxa(), t.taxa())?;
    let d = decompose_rooted(t)?;
    let mut p = params.root_prob(&d.root_split);
    for key in &d.pcsps {
        if p == 0.0 {
            return Ok(0.0);
        }
        p *= params.pcsp_prob(key);
    }
    Ok(p)
}

/// How to compute per-edge rooting joints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JointMode {
    /// Re-root and re-decompose at every edge; O(N^2) per tree. The oracle.
    Naive,
    /// Shared below-products; O(N) amortized lookups per tree.
    TwoPass,
}

/// Per-edge joint probabilities p(root on e, tree): the summands of the
/// unrooted SBN probability.
pub fn rooting_joints(
    params: &SbnParams,
    t: &UnrootedTopology,
    mode: JointMode,
) -> Result<Vec<f64>, EvalError> {
    check_taxa(params.taxa(), t.taxa())?;
    match mode {
        JointMode::Naive => {
            let mut joints = Vec::with_capacity(t.edge_count());
            for e in 0..t.edge_count() {
                let rooted = t.root_at_edge(e)?;
                joints.push(sbn_prob_rooted(params, &rooted)?);
            }
            Ok(joints)
        }
        JointMode::TwoPass => Ok(joints_two_pass(params, t)),
    }
}

fn joints_two_pass(params: &SbnParams, t: &UnrootedTopology) -> Vec<f64> {
    let ne = t.edge_count();
    let subs = t.directed_subsplits();
    // Conditional factor for the child hanging at directed edge `cd` under
    // parent subsplit `ps`; clades of fewer than three taxa split
    // deterministically and contribute one.
    let factor = |ps: &Subsplit, cd: usize| -> f64 {
        if t.below(cd).count() >= 3 {
            params.cond_prob(ps, subs[cd].as_ref().expect("internal head"))
        } else {
            1.0
        }
    };
    let mut below_prod = vec![1.0f64; 2 * ne];
    let fill = |below_prod: &mut Vec<f64>, de: usize| {
        let head = t.de_head(de);
        if t.is_leaf(head) {
            return;
        }
        let via = t.de_edge(de);
        let ps = subs[de].as_ref().expect("internal head");
        let mut prod = 1.0;
        for (w, ew) in t.neighbors(head) {
            if ew == via {
                continue;
            }
            let cd = t.de_toward(ew, w);
            prod *= factor(ps, cd) * below_prod[cd];
        }
        below_prod[de] = prod;
    };
    for &e in t.postorder_edges() {
        fill(&mut below_prod, 2 * e as usize);
    }
    for &e in t.postorder_edges().iter().rev() {
        fill(&mut below_prod, 2 * e as usize + 1);
    }
    (0..ne)
        .map(|e| {
            let split = t.edge_split(e);
            params.root_prob(split)
                * factor(split, 2 * e)
                * factor(split, 2 * e + 1)
                * below_prod[2 * e]
                * below_prod[2 * e + 1]
        })
        .collect()
}

/// Unrooted SBN probability: the root node is unobserved, so sum the
/// rooting joints over all edges.
pub fn sbn_prob_unrooted(params: &SbnParams, t: &UnrootedTopology) -> Result<f64, EvalError> {
    check_taxa(params.taxa(), t.taxa())?;
    Ok(joints_two_pass(params, t).iter().sum())
}

/// CCD probability of a rooted tree: the product of per-clade subsplit
/// probabilities over internal nodes whose clade has at least three taxa.
pub fn ccd_prob_rooted(params: &CcdParams, t: &RootedTopology) -> Result<f64, EvalError> {
    check_taxa(params.taxa(), t.taxa())?;
    let clades = t.clades();
    let mut p = 1.0;
    for v in 0..t.n_nodes() {
        let Some((l, r)) = t.children(v) else {
            continue;
        };
        if clades[v].count() < 3 {
            continue;
        }
        let split = Subsplit::new(clades[l].clone(), clades[r].clone())
            .expect("child clades are disjoint and nonempty");
        p *= params.prob(&clades[v], &split);
        if p == 0.0 {
            return Ok(0.0);
        }
    }
    Ok(p)
}

/// CCD probability of an unrooted tree via the reference rooting on the
/// pendant edge of the lowest-indexed taxon.
pub fn ccd_prob(params: &CcdParams, t: &UnrootedTopology) -> Result<f64, EvalError> {
    check_taxa(params.taxa(), t.taxa())?;
    let rooted = t
        .root_at_edge(t.pendant_edge_of(0))
        .expect("pendant edge id is in range");
    ccd_prob_rooted(params, &rooted)
}

/// Training log-likelihood of an unrooted sample, plus the Dirichlet
/// regularization term `alpha * sum m~ log p` when `alpha > 0` (the
/// objective EM monitors). Returns negative infinity when some tree has
/// zero probability and `alpha` terms do not apply to it.
pub fn log_likelihood(
    params: &SbnParams,
    trees: &[(&UnrootedTopology, f64)],
    alpha: f64,
    equivalent: Option<&CountsTable>,
) -> Result<f64, EvalError> {
    let mut total = 0.0f64;
    for &(t, w) in trees {
        if w.is_nan() || w <= 0.0 {
            return Err(EvalError::BadOptions(format!(
                "nonpositive tree weight {w}"
            )));
        }
        total += w * sbn_prob_unrooted(params, t)?.ln();
    }
    if alpha > 0.0 {
        let counts = equivalent
            .ok_or_else(|| EvalError::BadOptions("alpha > 0 requires equivalent counts".into()))?;
        for (s, &m) in counts.root_counts() {
            if m > 0.0 {
                total += alpha * m * params.root_prob(s).ln();
            }
        }
        for (k, &m) in counts.pcsp_counts() {
            if m > 0.0 {
                total += alpha * m * params.pcsp_prob(k).ln();
            }
        }
    }
    Ok(total)
}

/// A fixed, indexed collection of unrooted topologies over one taxon set
/// (for instance the whole enumerated space). Shared by reference between
/// target distributions built over it.
#[derive(Debug)]
pub struct TreeSpace {
    taxa: Arc<TaxonSet>,
    trees: Vec<UnrootedTopology>,
    index: HashMap<TreeId, usize>,
}

impl TreeSpace {
    pub fn from_trees(trees: Vec<UnrootedTopology>) -> Result<Arc<Self>, EvalError> {
        if trees.is_empty() {
            return Err(EvalError::BadOptions("empty tree space".into()));
        }
        let taxa = trees[0].taxa().clone();
        let mut index = HashMap::with_capacity(trees.len());
        for (i, t) in trees.iter().enumerate() {
            check_taxa(&taxa, t.taxa())?;
            if index.insert(t.tree_id(), i).is_some() {
                return Err(EvalError::BadOptions(format!(
                    "duplicate tree in space: {}",
                    t.tree_id()
                )));
            }
        }
        Ok(Arc::new(TreeSpace { taxa, trees, index }))
    }

    /// The full enumerated unrooted space, in enumeration order.
    pub fn enumerated(taxa: &Arc<TaxonSet>, cap: usize) -> Result<Arc<Self>, EvalError> {
        let trees: Vec<UnrootedTopology> = enumerate_unrooted(taxa, cap)?.collect();
        Self::from_trees(trees)
    }

    pub fn taxa(&self) -> &Arc<TaxonSet> {
        &self.taxa
    }

    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    pub fn tree(&self, i: usize) -> &UnrootedTopology {
        &self.trees[i]
    }

    pub fn trees(&self) -> &[UnrootedTopology] {
        &self.trees
    }

    pub fn position(&self, id: &TreeId) -> Option<usize> {
        self.index.get(id).copied()
    }
}

/// A probability distribution with explicitly listed support.
#[derive(Debug, Clone)]
pub struct DiscreteDistribution {
    space: Arc<TreeSpace>,
    probs: Vec<f64>,
}

impl DiscreteDistribution {
    /// Validates length, nonnegativity, and normalization within 1e-9.
    pub fn new(space: Arc<TreeSpace>, probs: Vec<f64>) -> Result<Self, EvalError> {
        if probs.len() != space.len() {
            return Err(EvalError::BadOptions(format!(
                "{} probabilities for {} trees",
                probs.len(),
                space.len()
            )));
        }
        if probs.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(EvalError::BadOptions(
                "negative or non-finite probability".into(),
            ));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(EvalError::NotNormalized { sum });
        }
        Ok(DiscreteDistribution { space, probs })
    }

    /// Normalizes nonnegative weights to a distribution.
    pub fn from_weights(space: Arc<TreeSpace>, weights: Vec<f64>) -> Result<Self, EvalError> {
        let sum: f64 = weights.iter().sum();
        if sum.is_nan() || sum <= 0.0 {
            return Err(EvalError::NotNormalized { sum });
        }
        let probs = weights.into_iter().map(|w| w / sum).collect();
        Self::new(space, probs)
    }

    pub fn space(&self) -> &Arc<TreeSpace> {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob(&self, i: usize) -> f64 {
        self.probs[i]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob_by_id(&self, id: &TreeId) -> f64 {
        self.space.position(id).map_or(0.0, |i| self.probs[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&UnrootedTopology, f64)> {
        self.space.trees().iter().zip(self.probs.iter().copied())
    }
}

/// Anything that can score unrooted topologies.
pub trait TreeDistribution {
    fn taxa(&self) -> &Arc<TaxonSet>;
    fn prob_unrooted(&self, t: &UnrootedTopology) -> Result<f64, EvalError>;
    /// The explicit support as (id, probability) pairs, when the estimator
    /// can list it (SRF and listed distributions can; SBN and CCD cannot).
    fn listed_support(&self) -> Option<Vec<(TreeId, f64)>>;
}

impl TreeDistribution for SbnParams {
    fn taxa(&self) -> &Arc<TaxonSet> {
        SbnParams::taxa(self)
    }

    fn prob_unrooted(&self, t: &UnrootedTopology) -> Result<f64, EvalError> {
        sbn_prob_unrooted(self, t)
    }

    fn listed_support(&self) -> Option<Vec<(TreeId, f64)>> {
        None
    }
}

impl TreeDistribution for CcdParams {
    fn taxa(&self) -> &Arc<TaxonSet> {
        CcdParams::taxa(self)
    }

    fn prob_unrooted(&self, t: &UnrootedTopology) -> Result<f64, EvalError> {
        ccd_prob(self, t)
    }

    fn listed_support(&self) -> Option<Vec<(TreeId, f64)>> {
        None
    }
}

impl TreeDistribution for SrfParams {
    fn taxa(&self) -> &Arc<TaxonSet> {
        SrfParams::taxa(self)
    }

    fn prob_unrooted(&self, t: &UnrootedTopology) -> Result<f64, EvalError> {
        check_taxa(SrfParams::taxa(self), t.taxa())?;
        Ok(self.prob(&t.tree_id()))
    }

    fn listed_support(&self) -> Option<Vec<(TreeId, f64)>> {
        Some(
            self.probs()
                .iter()
                .map(|(id, &p)| (id.clone(), p))
                .collect(),
        )
    }
}

impl TreeDistribution for FittedModel {
    fn taxa(&self) -> &Arc<TaxonSet> {
        FittedModel::taxa(self)
    }

    fn prob_unrooted(&self, t: &UnrootedTopology) -> Result<f64, EvalError> {
        match self {
            FittedModel::Sbn(p) => sbn_prob_unrooted(p, t),
            FittedModel::Ccd(p) => ccd_prob(p, t),
            FittedModel::Srf(p) => p.prob_unrooted(t),
        }
    }

    fn listed_support(&self) -> Option<Vec<(TreeId, f64)>> {
        match self {
            FittedModel::Srf(p) => p.listed_support(),
            _ => None,
        }
    }
}

impl TreeDistribution for DiscreteDistribution {
    fn taxa(&self) -> &Arc<TaxonSet> {
        self.space.taxa()
    }

    fn prob_unrooted(&self, t: &UnrootedTopology) -> Result<f64, EvalError> {
        check_taxa(self.space.taxa(), t.taxa())?;
        Ok(self.prob_by_id(&t.tree_id()))
    }

    fn listed_support(&self) -> Option<Vec<(TreeId, f64)>> {
        Some(
            self.space
                .trees()
                .iter()
                .zip(&self.probs)
                .map(|(t, &p)| (t.tree_id(), p))
                .collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KlDirection {
    /// sum over T of q(T) log(q(T)/p(T)) with q the estimate: always finite
    /// against a strictly positive target.
    #[default]
    EstimateToTarget,
    /// sum over T of p(T) log(p(T)/q(T)) with p the target: infinite
    /// whenever the estimate misses target support, unless floored.
    TargetToEstimate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KlSupport {
    /// The target's listed support.
    #[default]
    Target,
    /// The estimate's support; requires a listable estimate.
    Estimate,
    /// Union of both; requires a listable estimate.
    Union,
}

#[derive(Debug, Clone, Default)]
pub struct KlOptions {
    pub direction: KlDirection,
    /// When positive, the denominator side is floored at this value over
    /// the chosen support and renormalized, so zero denominators cannot
    /// produce infinities. Must be below 1e-3.
    pub epsilon_floor: f64,
    pub support: KlSupport,
}

/// KL divergence in nats between a listed distribution and any estimate.
pub fn kl_divergence(
    target: &DiscreteDistribution,
    estimate: &dyn TreeDistribution,
    opts: &KlOptions,
) -> Result<f64, EvalError> {
    if !(0.0..1e-3).contains(&opts.epsilon_floor) {
        return Err(EvalError::BadOptions(format!(
            "epsilon_floor {} must lie in [0, 1e-3)",
            opts.epsilon_floor
        )));
    }
    check_taxa(target.space().taxa(), estimate.taxa())?;

    // Terms as (target prob, estimate prob) over the chosen support.
    let mut terms: Vec<(f64, f64)> = Vec::new();
    match opts.support {
        KlSupport::Target => {
            for (t, p) in target.iter() {
                terms.push((p, estimate.prob_unrooted(t)?));
            }
        }
        KlSupport::Estimate => {
            let support = estimate
                .listed_support()
                .ok_or(EvalError::UnresolvableSupport)?;
            for (id, q) in support {
                terms.push((target.prob_by_id(&id), q));
            }
        }
        KlSupport::Union => {
            let support = estimate
                .listed_support()
                .ok_or(EvalError::UnresolvableSupport)?;
            for (t, p) in target.iter() {
                terms.push((p, estimate.prob_unrooted(t)?));
            }
            for (id, q) in support {
                if target.space().position(&id).is_none() {
                    terms.push((0.0, q));
                }
            }
        }
    }

    let (mut numer, mut denom): (Vec<f64>, Vec<f64>) = match opts.direction {
        KlDirection::EstimateToTarget => terms.iter().map(|&(p, q)| (q, p)).unzip(),
        KlDirection::TargetToEstimate => terms.into_iter().unzip(),
    };
    if opts.epsilon_floor > 0.0 {
        for b in denom.iter_mut() {
            *b = b.max(opts.epsilon_floor);
        }
        let total: f64 = denom.iter().sum();
        for b in denom.iter_mut() {
            *b /= total;
        }
    }
    let mut kl = 0.0f64;
    for (a, b) in numer.drain(..).zip(denom) {
        if a == 0.0 {
            continue;
        }
        if b == 0.0 {
            return Ok(f64::INFINITY);
        }
        kl += a * (a / b).ln();
    }
    Ok(kl)
}

/// Exhaustive sum of the rooted SBN probability over all (2N-3)!! rooted
/// topologies; one for consistent parameters.
pub fn normalization_audit_rooted(params: &SbnParams, cap: usize) -> Result<f64, EvalError> {
    let mut total = 0.0;
    for t in enumerate_rooted(params.taxa(), cap)? {
        total += sbn_prob_rooted(params, &t)?;
    }
    Ok(total)
}

/// Exhaustive sum of an estimator's unrooted probability over all (2N-5)!!
/// unrooted topologies.
pub fn normalization_audit_unrooted(
    dist: &dyn TreeDistribution,
    cap: usize,
) -> Result<f64, EvalError> {
    let mut total = 0.0;
    for t in enumerate_unrooted(dist.taxa(), cap)? {
        total += dist.prob_unrooted(&t)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clade::Clade;
    use crate::estimators::{fit_ccd, fit_sa, fit_srf};
    use crate::model::ParentCpds;
    use crate::newick::{parse_newick, ParsedTree};
    use crate::subsplit::Subsplit;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn taxa(names: &[&str]) -> Arc<TaxonSet> {
        Arc::new(TaxonSet::new(names.iter().copied()).unwrap())
    }

    fn unrooted(text: &str, t: &Arc<TaxonSet>) -> UnrootedTopology {
        match parse_newick(text, t).unwrap() {
            ParsedTree::Unrooted(u) => u,
            _ => panic!("expected unrooted"),
        }
    }

    fn rooted(text: &str, t: &Arc<TaxonSet>) -> RootedTopology {
        match parse_newick(text, t).unwrap() {
            ParsedTree::Rooted(r) => r,
            _ => panic!("expected rooted"),
        }
    }

    fn clade(n: usize, idx: &[usize]) -> Clade {
        Clade::from_indices(n, idx.iter().copied())
    }

    /// Random consistent parameters: a simple-average fit of a few random
    /// trees including `anchor`, so the anchor has nonzero joints.
    fn random_consistent_params(
        taxa: &Arc<TaxonSet>,
        anchor: &UnrootedTopology,
        rng: &mut ChaCha8Rng,
    ) -> SbnParams {
        use rand::Rng;
        let mut trees = vec![anchor.clone()];
        for _ in 0..4 {
            trees.push(UnrootedTopology::random(taxa, rng).unwrap());
        }
        let weighted: Vec<(&UnrootedTopology, f64)> = trees
            .iter()
            .map(|t| (t, 0.25 + rng.random::<f64>()))
            .collect();
        fit_sa(&weighted).unwrap()
    }

    #[test]
    fn hand_built_params_score_the_balanced_tree() {
        // Root ({A,B},{C,D}) gets 0.6; the balanced four-taxon tree has no
        // nontrivial PCSPs, so its rooted probability is exactly 0.6.
        let t = taxa(&["A", "B", "C", "D"]);
        let ab_cd = Subsplit::new(clade(4, &[0, 1]), clade(4, &[2, 3])).unwrap();
        let a_bcd = Subsplit::new(clade(4, &[0]), clade(4, &[1, 2, 3])).unwrap();
        let b_cd = Subsplit::new(clade(4, &[1]), clade(4, &[2, 3])).unwrap();
        let mut root = BTreeMap::new();
        root.insert(ab_cd, 0.6);
        root.insert(a_bcd.clone(), 0.4);
        let mut cond = BTreeMap::new();
        let mut cpds = ParentCpds::default();
        cpds.z.insert(b_cd, 1.0);
        cond.insert(a_bcd, cpds);
        let params = SbnParams::new(t.clone(), root, cond, 1e-12).unwrap();
        let balanced = rooted("((A,B),(C,D));", &t);
        assert_abs_diff_eq!(
            sbn_prob_rooted(&params, &balanced).unwrap(),
            0.6,
            epsilon = 1e-15
        );
        // A rooted tree using an unobserved root split scores zero.
        let other = rooted("(((A,C),B),D);", &t);
        assert_eq!(sbn_prob_rooted(&params, &other).unwrap(), 0.0);
    }

    #[test]
    fn single_tree_sa_joints_are_uniform() {
        let t = taxa(&["A", "B", "C", "D"]);
        let u = unrooted("(A,B,(C,D));", &t);
        let params = fit_sa(&[(&u, 1.0)]).unwrap();
        for mode in [JointMode::Naive, JointMode::TwoPass] {
            let joints = rooting_joints(&params, &u, mode).unwrap();
            assert_eq!(joints.len(), 5);
            for j in joints {
                assert_abs_diff_eq!(j, 0.2, epsilon = 1e-14);
            }
        }
        assert_abs_diff_eq!(
            sbn_prob_unrooted(&params, &u).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        // An unsupported topology scores zero.
        let other = unrooted("(A,C,(B,D));", &t);
        assert_eq!(sbn_prob_unrooted(&params, &other).unwrap(), 0.0);
    }

    #[test]
    fn two_pass_matches_naive_on_random_trees() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for &n in &[5usize, 8, 12, 20] {
            let taxa = TaxonSet::numbered(n);
            for _ in 0..5 {
                let u = UnrootedTopology::random(&taxa, &mut rng).unwrap();
                let params = random_consistent_params(&taxa, &u, &mut rng);
                let fast = rooting_joints(&params, &u, JointMode::TwoPass).unwrap();
                let slow = rooting_joints(&params, &u, JointMode::Naive).unwrap();
                for (a, b) in fast.iter().zip(&slow) {
                    assert_relative_eq!(a, b, max_relative = 1e-10);
                }
                // The unrooted probability is the joint sum, summed in edge
                // order.
                let direct = sbn_prob_unrooted(&params, &u).unwrap();
                let summed: f64 = fast.iter().sum();
                assert_eq!(direct, summed);
            }
        }
    }

    #[test]
    fn unrooted_prob_equals_sum_over_rooted_evaluations() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let taxa = TaxonSet::numbered(7);
        let u = UnrootedTopology::random(&taxa, &mut rng).unwrap();
        let params = random_consistent_params(&taxa, &u, &mut rng);
        let mut total = 0.0;
        for e in 0..u.edge_count() {
            total += sbn_prob_rooted(&params, &u.root_at_edge(e).unwrap()).unwrap();
        }
        assert_relative_eq!(
            total,
            sbn_prob_unrooted(&params, &u).unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn ccd_factorization_matches_hand_product() {
        // Two rooted eight-taxon trees sharing the root split; the CCD
        // probability of the first factors as p(C2,C3) p(C4,C5|C2)
        // p(C6|C5) p(C7|C3).
        let t = Arc::new(TaxonSet::new((1..=8).map(|i| format!("O{i}"))).unwrap());
        let fig = rooted("(((O1,O2),(O3,(O4,O5))),((O6,O7),O8));", &t);
        let alt = rooted("(((O1,(O2,O3)),(O4,O5)),((O6,O7),O8));", &t);
        let params = crate::estimators::fit_ccd_rooted(&[(&fig, 1.0), (&alt, 1.0)]).unwrap();
        let c1 = Clade::full(8);
        let c2 = clade(8, &[0, 1, 2, 3, 4]);
        let c3 = clade(8, &[5, 6, 7]);
        let c5 = clade(8, &[2, 3, 4]);
        let p_root = params.prob(&c1, &Subsplit::new(c2.clone(), c3.clone()).unwrap());
        let p_c2 = params.prob(&c2, &Subsplit::new(clade(8, &[0, 1]), c5.clone()).unwrap());
        let p_c5 = params.prob(
            &c5,
            &Subsplit::new(clade(8, &[2]), clade(8, &[3, 4])).unwrap(),
        );
        let p_c3 = params.prob(
            &c3,
            &Subsplit::new(clade(8, &[5, 6]), clade(8, &[7])).unwrap(),
        );
        assert_abs_diff_eq!(p_root, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p_c2, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p_c5, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p_c3, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            ccd_prob_rooted(&params, &fig).unwrap(),
            p_root * p_c2 * p_c5 * p_c3,
            epsilon = 1e-15
        );
    }

    #[test]
    fn ccd_normalizes_over_six_taxon_space() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let taxa = TaxonSet::numbered(6);
        let trees: Vec<UnrootedTopology> = (0..15)
            .map(|_| UnrootedTopology::random(&taxa, &mut rng).unwrap())
            .collect();
        let sample: Vec<(&UnrootedTopology, f64)> = trees.iter().map(|t| (t, 1.0)).collect();
        let params = fit_ccd(&sample).unwrap();
        let total = normalization_audit_unrooted(&params, 10).unwrap();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn log_likelihood_values() {
        let t = taxa(&["A", "B", "C", "D"]);
        let u = unrooted("(A,B,(C,D));", &t);
        let params = fit_sa(&[(&u, 1.0)]).unwrap();
        let ll = log_likelihood(&params, &[(&u, 1.0)], 0.0, None).unwrap();
        assert_abs_diff_eq!(ll, 0.0, epsilon = 1e-12);
        // Regularization adds strictly negative terms when any stored
        // probability is below one.
        let counts = crate::counting::collect_sa_counts(&[(&u, 1.0)]).unwrap();
        let reg = log_likelihood(&params, &[(&u, 1.0)], 0.5, Some(&counts)).unwrap();
        assert!(reg < ll);
        // Zero-probability tree with alpha = 0 gives negative infinity.
        let other = unrooted("(A,C,(B,D));", &t);
        let ll = log_likelihood(&params, &[(&other, 1.0)], 0.0, None).unwrap();
        assert_eq!(ll, f64::NEG_INFINITY);
    }

    #[test]
    fn kl_two_tree_worked_example() {
        // est = (0.75, 0.25) vs target = (0.5, 0.5):
        // 0.75 ln 1.5 + 0.25 ln 0.5 = 0.130812...
        let t = taxa(&["A", "B", "C", "D"]);
        let u1 = unrooted("(A,B,(C,D));", &t);
        let u2 = unrooted("(A,C,(B,D));", &t);
        let space = TreeSpace::from_trees(vec![u1.clone(), u2.clone()]).unwrap();
        let target = DiscreteDistribution::new(space, vec![0.5, 0.5]).unwrap();
        let est = fit_srf(&[(&u1, 3.0), (&u2, 1.0)]).unwrap();
        let kl = kl_divergence(&target, &est, &KlOptions::default()).unwrap();
        assert_abs_diff_eq!(kl, 0.1308, epsilon = 1e-4);
        assert_abs_diff_eq!(
            kl,
            0.75 * (1.5f64).ln() + 0.25 * (0.5f64).ln(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn kl_of_distribution_with_itself_is_zero() {
        let taxa = TaxonSet::numbered(5);
        let space = TreeSpace::enumerated(&taxa, 10).unwrap();
        let n = space.len();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        use rand::Rng;
        let weights: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.01).collect();
        let d = DiscreteDistribution::from_weights(space, weights).unwrap();
        let kl = kl_divergence(&d, &d, &KlOptions::default()).unwrap();
        assert_abs_diff_eq!(kl, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn kl_directions_and_flooring() {
        let t = taxa(&["A", "B", "C", "D"]);
        let u1 = unrooted("(A,B,(C,D));", &t);
        let u2 = unrooted("(A,C,(B,D));", &t);
        let space = TreeSpace::from_trees(vec![u1.clone(), u2.clone()]).unwrap();
        let target = DiscreteDistribution::new(space, vec![0.5, 0.5]).unwrap();
        // The estimate misses u2 entirely.
        let est = fit_srf(&[(&u1, 1.0)]).unwrap();
        let inf = kl_divergence(
            &target,
            &est,
            &KlOptions {
                direction: KlDirection::TargetToEstimate,
                ..KlOptions::default()
            },
        )
        .unwrap();
        assert!(inf.is_infinite());
        let floored = kl_divergence(
            &target,
            &est,
            &KlOptions {
                direction: KlDirection::TargetToEstimate,
                epsilon_floor: 1e-6,
                ..KlOptions::default()
            },
        )
        .unwrap();
        assert!(floored.is_finite());
        // Estimate-to-target stays finite against a positive target.
        let fin = kl_divergence(&target, &est, &KlOptions::default()).unwrap();
        assert!(fin.is_finite());
        // Union support needs a listable estimate; SBN cannot.
        let sbn = fit_sa(&[(&u1, 1.0)]).unwrap();
        let err = kl_divergence(
            &target,
            &sbn,
            &KlOptions {
                support: KlSupport::Union,
                ..KlOptions::default()
            },
        )
        .unwrap_err();
        assert_eq!(err, EvalError::UnresolvableSupport);
        let err = kl_divergence(
            &target,
            &est,
            &KlOptions {
                epsilon_floor: 1e-3,
                ..KlOptions::default()
            },
        )
        .unwrap_err();
        assert!(matches!(err, EvalError::BadOptions(_)));
    }

    #[test]
    fn audits_sum_to_one_for_fitted_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let taxa = TaxonSet::numbered(6);
        let trees: Vec<UnrootedTopology> = (0..12)
            .map(|_| UnrootedTopology::random(&taxa, &mut rng).unwrap())
            .collect();
        let sample: Vec<(&UnrootedTopology, f64)> = trees.iter().map(|t| (t, 1.0)).collect();
        let params = fit_sa(&sample).unwrap();
        let unrooted_total = normalization_audit_unrooted(&params, 10).unwrap();
        assert_abs_diff_eq!(unrooted_total, 1.0, epsilon = 1e-9);
        let rooted_total = normalization_audit_rooted(&params, 10).unwrap();
        assert_abs_diff_eq!(rooted_total, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn taxa_mismatch_is_an_error() {
        let ta = taxa(&["A", "B", "C", "D"]);
        let tb = taxa(&["A", "B", "C", "E"]);
        let u = unrooted("(A,B,(C,D));", &ta);
        let v = unrooted("(A,B,(C,E));", &tb);
        let params = fit_sa(&[(&u, 1.0)]).unwrap();
        assert_eq!(
            sbn_prob_unrooted(&params, &v).unwrap_err(),
            EvalError::TaxaMismatch
        );
    }

    use std::collections::BTreeMap;
}
