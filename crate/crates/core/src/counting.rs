//! Tree decomposition and frequency tallies.
//!
//! Every estimator consumes a [`CountsTable`]: real-weighted tallies of
//! root splits and PCSPs. Rooted samples tally their single decomposition;
//! unrooted samples spread per-tree weight across the 2N-3 rootings, either
//! uniformly (the simple-average counts) or by a per-edge posterior over
//! the missing root (the EM expected counts). The all-rootings tallies use
//! subtree-accumulated sums so each tree costs O(N), not O(N^2): a PCSP
//! occurrence at directed edge d has the same parent context for every
//! rooting beyond a given neighbor subtree, so those rootings contribute
//! their summed weight at once.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::evaluation::{rooting_joints, EvalError, JointMode};
use crate::model::SbnParams;
use crate::subsplit::{PcspKey, Subsplit};
use crate::taxa::TaxonSet;
use crate::topology::{RootedTopology, UnrootedTopology};

#[derive(Error, Debug, Clone, PartialEq)]
pub enum CountError {
    #[error("need at least 3 taxa, got {0}")]
    TooFewTaxa(usize),
    #[error("empty tree sample")]
    EmptyInput,
    #[error("trees with mixed taxon sets")]
    TaxaMismatch,
    #[error("tree weights must be positive, got {0}")]
    BadWeight(f64),
}

impl From<EvalError> for CountError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::TaxaMismatch => CountError::TaxaMismatch,
            other => panic!("unexpected evaluation failure while counting: {other}"),
        }
    }
}

/// The subsplit representation of one rooted tree: its root split plus one
/// PCSP per non-root internal node whose clade has at least three taxa
/// (smaller clades split deterministically). By construction the pair
/// determines the tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RootedDecomposition {
    pub root_split: Subsplit,
    pub pcsps: Vec<PcspKey>,
}

/// Decomposes a rooted tree into its root split and PCSP multiset.
pub fn decompose_rooted(t: &RootedTopology) -> Result<RootedDecomposition, CountError> {
    let n = t.n_taxa();
    if n < 3 {
        return Err(CountError::TooFewTaxa(n));
    }
    let clades = t.clades();
    let mut subs: Vec<Option<Subsplit>> = vec![None; t.n_nodes()];
    for (v, slot) in subs.iter_mut().enumerate() {
        if let Some((l, r)) = t.children(v) {
            *slot = Some(
                Subsplit::new(clades[l].clone(), clades[r].clone())
                    .expect("child clades are disjoint and nonempty"),
            );
        }
    }
    let root_split = subs[t.root()].clone().expect("root is internal for n >= 3");
    let mut pcsps = Vec::new();
    for v in 0..t.n_nodes() {
        let Some((l, r)) = t.children(v) else {
            continue;
        };
        for c in [l, r] {
            if clades[c].count() >= 3 {
                let parent = subs[v].clone().expect("v is internal");
                let child = subs[c].clone().expect("clade of size >= 3 is internal");
                pcsps.push(PcspKey::new(parent, child).expect("child refines a parent part"));
            }
        }
    }
    Ok(RootedDecomposition { root_split, pcsps })
}

/// Real-weighted frequency tallies of root splits and PCSPs.
#[derive(Debug, Clone)]
pub struct CountsTable {
    taxa: Arc<TaxonSet>,
    root_counts: BTreeMap<Subsplit, f64>,
    pcsp_counts: BTreeMap<PcspKey, f64>,
    total_trees: f64,
}

impl CountsTable {
    pub fn new(taxa: Arc<TaxonSet>) -> Self {
        CountsTable {
            taxa,
            root_counts: BTreeMap::new(),
            pcsp_counts: BTreeMap::new(),
            total_trees: 0.0,
        }
    }

    pub fn taxa(&self) -> &Arc<TaxonSet> {
        &self.taxa
    }

    pub fn add_root(&mut self, split: Subsplit, weight: f64) {
        *self.root_counts.entry(split).or_insert(0.0) += weight;
    }

    pub fn add_pcsp(&mut self, key: PcspKey, weight: f64) {
        *self.pcsp_counts.entry(key).or_insert(0.0) += weight;
    }

    pub fn add_trees(&mut self, weight: f64) {
        self.total_trees += weight;
    }

    pub fn root_counts(&self) -> &BTreeMap<Subsplit, f64> {
        &self.root_counts
    }

    pub fn pcsp_counts(&self) -> &BTreeMap<PcspKey, f64> {
        &self.pcsp_counts
    }

    /// Total tree weight K (or the effective total for expected counts).
    pub fn total_trees(&self) -> f64 {
        self.total_trees
    }

    pub fn root_total(&self) -> f64 {
        self.root_counts.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.root_counts.is_empty()
    }

    /// Merges another table by addition. Merge is associative and
    /// commutative, so partitioned counting can be combined in any order.
    pub fn merge(&mut self, other: &CountsTable) -> Result<(), CountError> {
        self.add_scaled(other, 1.0)
    }

    /// Adds `factor` times another table (used for regularization terms).
    pub fn add_scaled(&mut self, other: &CountsTable, factor: f64) -> Result<(), CountError> {
        if *self.taxa != *other.taxa {
            return Err(CountError::TaxaMismatch);
        }
        for (s, w) in &other.root_counts {
            self.add_root(s.clone(), w * factor);
        }
        for (k, w) in &other.pcsp_counts {
            self.add_pcsp(k.clone(), w * factor);
        }
        self.total_trees += other.total_trees * factor;
        Ok(())
    }
}

fn validate_sample<T>(trees: &[(&T, f64)]) -> Result<(), CountError> {
    if trees.is_empty() {
        return Err(CountError::EmptyInput);
    }
    for &(_, w) in trees {
        if w <= 0.0 || !w.is_finite() {
            return Err(CountError::BadWeight(w));
        }
    }
    Ok(())
}

/// Tallies m_{s1} and m_{s,t} from a rooted sample; O(KN) total.
pub fn collect_rooted_counts(trees: &[(&RootedTopology, f64)]) -> Result<CountsTable, CountError> {
    validate_sample(trees)?;
    let taxa = trees[0].0.taxa().clone();
    let mut table = CountsTable::new(taxa.clone());
    for &(t, w) in trees {
        if *t.taxa().as_ref() != *taxa {
            return Err(CountError::TaxaMismatch);
        }
        let d = decompose_rooted(t)?;
        table.add_root(d.root_split, w);
        for k in d.pcsps {
            table.add_pcsp(k, w);
        }
        table.add_trees(w);
    }
    Ok(table)
}

/// A probability distribution over the rootings (edges) of one unrooted
/// tree: nonnegative, summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct RootingDistribution {
    probs: Vec<f64>,
}

impl RootingDistribution {
    /// Uniform over the 2N-3 edges.
    pub fn uniform(n_edges: usize) -> Self {
        RootingDistribution {
            probs: vec![1.0 / n_edges as f64; n_edges],
        }
    }

    /// Normalizes per-edge joint probabilities. `None` when every joint is
    /// zero (the tree has no support under the current parameters).
    pub fn from_joints(joints: &[f64]) -> Option<Self> {
        let total: f64 = joints.iter().sum();
        if total.is_nan() || total <= 0.0 {
            return None;
        }
        Some(RootingDistribution {
            probs: joints.iter().map(|j| j / total).collect(),
        })
    }

    /// The posterior over rootings of `t` under `params`, i.e. the EM
    /// E-step responsibilities for one tree.
    pub fn from_params(
        params: &SbnParams,
        t: &UnrootedTopology,
    ) -> Result<Option<Self>, CountError> {
        let joints = rooting_joints(params, t, JointMode::TwoPass)?;
        Ok(Self::from_joints(&joints))
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// For every directed edge: the summed rooting weight of the edges on its
/// head side, including the edge itself.
fn subtree_weight_sums(t: &UnrootedTopology, q: &[f64]) -> Vec<f64> {
    let ne = t.edge_count();
    let mut sums = vec![0.0f64; 2 * ne];
    let fill = |sums: &mut Vec<f64>, de: usize| {
        let head = t.de_head(de);
        let via = t.de_edge(de);
        let mut total = q[via];
        if !t.is_leaf(head) {
            for (w, ew) in t.neighbors(head) {
                if ew != via {
                    total += sums[t.de_toward(ew, w)];
                }
            }
        }
        sums[de] = total;
    };
    for &e in t.postorder_edges() {
        fill(&mut sums, 2 * e as usize);
    }
    for &e in t.postorder_edges().iter().rev() {
        fill(&mut sums, 2 * e as usize + 1);
    }
    sums
}

/// Adds the decompositions of all rootings of `t`, with rooting `e`
/// weighted by `w * q[e]`, in O(N) per tree.
fn accumulate_rootings(t: &UnrootedTopology, q: &[f64], w: f64, table: &mut CountsTable) {
    for (e, &qe) in q.iter().enumerate() {
        if qe > 0.0 {
            table.add_root(t.edge_split(e).clone(), w * qe);
        }
    }
    let sums = subtree_weight_sums(t, q);
    let subs = t.directed_subsplits();
    for de in 0..2 * t.edge_count() {
        if t.below(de).count() < 3 {
            continue;
        }
        let child = subs[de]
            .as_ref()
            .expect("head of a size >= 3 clade is internal");
        let e = t.de_edge(de);
        // Rooting on the edge itself: the child hangs off the root split.
        if q[e] > 0.0 {
            let key = PcspKey::new(t.edge_split(e).clone(), child.clone())
                .expect("edge split contains the head-side clade");
            table.add_pcsp(key, w * q[e]);
        }
        // Rooting anywhere beyond a neighbor subtree of the tail: the
        // parent context is the tail's subsplit seen from that neighbor,
        // identical for all those rootings.
        let tail = t.de_head(de ^ 1);
        if t.is_leaf(tail) {
            continue;
        }
        for (a, ea) in t.neighbors(tail) {
            if ea == e {
                continue;
            }
            let weight = sums[t.de_toward(ea, a)];
            if weight <= 0.0 {
                continue;
            }
            let parent = subs[t.de_toward(ea, tail)]
                .as_ref()
                .expect("tail is internal");
            let key = PcspKey::new(parent.clone(), child.clone())
                .expect("child refines the tail subsplit");
            table.add_pcsp(key, w * weight);
        }
    }
}

fn check_unrooted_sample(trees: &[(&UnrootedTopology, f64)]) -> Result<Arc<TaxonSet>, CountError> {
    validate_sample(trees)?;
    let taxa = trees[0].0.taxa().clone();
    for &(t, _) in trees {
        if *t.taxa().as_ref() != *taxa {
            return Err(CountError::TaxaMismatch);
        }
    }
    Ok(taxa)
}

/// Simple-average counts: each tree spreads weight 1/(2N-3) over its
/// rootings, so the root tallies sum to the sample weight K.
pub fn collect_sa_counts(trees: &[(&UnrootedTopology, f64)]) -> Result<CountsTable, CountError> {
    let taxa = check_unrooted_sample(trees)?;
    let mut table = CountsTable::new(taxa);
    for &(t, w) in trees {
        let q = RootingDistribution::uniform(t.edge_count());
        accumulate_rootings(t, q.probs(), w, &mut table);
        table.add_trees(w);
    }
    Ok(table)
}

/// Expected counts from one EM E-step.
#[derive(Debug, Clone)]
pub struct EmCounts {
    pub counts: CountsTable,
    /// Trees whose every rooting had zero probability under the current
    /// parameters; they contribute nothing to the tallies.
    pub zero_support_trees: usize,
    /// The data log-likelihood under the parameters the counts were taken
    /// at: sum of w * ln(sum of rooting joints), negative infinity when a
    /// tree has no support. Computed from the same joints as the counts.
    pub data_log_likelihood: f64,
}

/// E-step expected counts: per tree, rooting weights are the normalized
/// per-edge joints under `params`. Zero-support trees are skipped and
/// reported, not fatal.
pub fn collect_em_counts(
    trees: &[(&UnrootedTopology, f64)],
    params: &SbnParams,
) -> Result<EmCounts, CountError> {
    let taxa = check_unrooted_sample(trees)?;
    if *params.taxa().as_ref() != *taxa {
        return Err(CountError::TaxaMismatch);
    }
    let mut table = CountsTable::new(taxa);
    let mut zero_support = 0usize;
    let mut data_ll = 0.0f64;
    for &(t, w) in trees {
        let joints = rooting_joints(params, t, JointMode::TwoPass)?;
        let total: f64 = joints.iter().sum();
        data_ll += w * total.ln();
        match RootingDistribution::from_joints(&joints) {
            Some(q) => {
                accumulate_rootings(t, q.probs(), w, &mut table);
                table.add_trees(w);
            }
            None => zero_support += 1,
        }
    }
    Ok(EmCounts {
        counts: table,
        zero_support_trees: zero_support,
        data_log_likelihood: data_ll,
    })
}
