//! Oracle checks for the EM expected counts: the fast subtree-sum
//! accumulation must agree with explicitly rooting at every edge and
//! weighting each decomposition by the normalized joint.

use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sbn_core::counting::{
    collect_em_counts, collect_rooted_counts, collect_sa_counts, decompose_rooted, CountsTable,
    RootingDistribution,
};
use sbn_core::estimators::{fit_ml_rooted, fit_sa};
use sbn_core::evaluation::{rooting_joints, JointMode};
use sbn_core::newick::{parse_newick, ParsedTree};
use sbn_core::taxa::TaxonSet;
use sbn_core::topology::UnrootedTopology;

fn unrooted(text: &str, taxa: &Arc<TaxonSet>) -> UnrootedTopology {
    match parse_newick(text, taxa).unwrap() {
        ParsedTree::Unrooted(u) => u,
        _ => panic!("expected unrooted"),
    }
}

fn assert_tables_eq(a: &CountsTable, b: &CountsTable, tol: f64) {
    assert_eq!(a.root_counts().len(), b.root_counts().len());
    for (s, w) in a.root_counts() {
        assert!(
            (w - b.root_counts()[s]).abs() <= tol,
            "root count mismatch at {s}: {w} vs {}",
            b.root_counts()[s]
        );
    }
    assert_eq!(a.pcsp_counts().len(), b.pcsp_counts().len());
    for (k, w) in a.pcsp_counts() {
        assert!(
            (w - b.pcsp_counts()[k]).abs() <= tol,
            "pcsp count mismatch: {w} vs {}",
            b.pcsp_counts()[k]
        );
    }
}

#[test]
fn em_counts_under_single_tree_sa_params_equal_sa_counts() {
    let taxa = Arc::new(TaxonSet::new(["A", "B", "C", "D"]).unwrap());
    let u = unrooted("(A,B,(C,D));", &taxa);
    let params = fit_sa(&[(&u, 1.0)]).unwrap();
    // Every edge has a distinct root split, the joints are uniform, so the
    // E-step responsibilities are 1/(2N-3) and the expected counts are the
    // simple-average counts.
    let q = RootingDistribution::from_params(&params, &u)
        .unwrap()
        .unwrap();
    for p in q.probs() {
        assert!((p - 0.2).abs() < 1e-13);
    }
    let em = collect_em_counts(&[(&u, 1.0)], &params).unwrap();
    let sa = collect_sa_counts(&[(&u, 1.0)]).unwrap();
    assert_eq!(em.zero_support_trees, 0);
    assert_tables_eq(&em.counts, &sa, 1e-13);
}

#[test]
fn rooting_distributions_sum_to_one() {
    let taxa = TaxonSet::numbered(9);
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let trees: Vec<UnrootedTopology> = (0..8)
        .map(|_| UnrootedTopology::random(&taxa, &mut rng).unwrap())
        .collect();
    let sample: Vec<(&UnrootedTopology, f64)> = trees.iter().map(|t| (t, 1.0)).collect();
    let params = fit_sa(&sample).unwrap();
    for t in &trees {
        let q = RootingDistribution::from_params(&params, t)
            .unwrap()
            .unwrap();
        let total: f64 = q.probs().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(q.probs().iter().all(|&p| p >= 0.0));
    }
}

#[test]
fn degenerate_params_concentrate_on_the_matching_edge() {
    let taxa = Arc::new(TaxonSet::new(["A", "B", "C", "D", "E"]).unwrap());
    let u = unrooted("(A,(B,E),(C,D));", &taxa);
    // Parameters from many copies of one specific rooting put rooting
    // probability one on that edge.
    let rooted = u.root_at_edge(3).unwrap();
    let counts = collect_rooted_counts(&[(&rooted, 50.0)]).unwrap();
    let params = fit_ml_rooted(&counts).unwrap();
    let q = RootingDistribution::from_params(&params, &u)
        .unwrap()
        .unwrap();
    for (e, p) in q.probs().iter().enumerate() {
        let expect = if e == 3 { 1.0 } else { 0.0 };
        assert!((p - expect).abs() < 1e-13, "edge {e}: q = {p}");
    }
}

#[test]
fn zero_support_trees_are_skipped_and_reported() {
    let taxa = Arc::new(TaxonSet::new(["A", "B", "C", "D"]).unwrap());
    let trained = unrooted("(A,B,(C,D));", &taxa);
    let other = unrooted("(A,C,(B,D));", &taxa);
    let params = fit_sa(&[(&trained, 1.0)]).unwrap();
    assert!(RootingDistribution::from_params(&params, &other)
        .unwrap()
        .is_none());
    let em = collect_em_counts(&[(&trained, 1.0), (&other, 3.0)], &params).unwrap();
    assert_eq!(em.zero_support_trees, 1);
    // Only the supported tree contributed.
    assert!((em.counts.total_trees() - 1.0).abs() < 1e-12);
    assert!((em.counts.root_total() - 1.0).abs() < 1e-12);
}

#[test]
fn em_counts_match_brute_force_for_random_params() {
    let taxa = TaxonSet::numbered(8);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..5 {
        let trees: Vec<UnrootedTopology> = (0..6)
            .map(|_| UnrootedTopology::random(&taxa, &mut rng).unwrap())
            .collect();
        let weighted: Vec<(&UnrootedTopology, f64)> = trees
            .iter()
            .map(|t| (t, 1.0 + rng.random::<f64>() * 3.0))
            .collect();
        let params = fit_sa(&weighted).unwrap();

        let em = collect_em_counts(&weighted, &params).unwrap();
        assert_eq!(em.zero_support_trees, 0);

        let mut oracle = CountsTable::new(taxa.clone());
        for &(t, w) in &weighted {
            let joints = rooting_joints(&params, t, JointMode::Naive).unwrap();
            let total: f64 = joints.iter().sum();
            for (e, &joint) in joints.iter().enumerate() {
                let share = w * joint / total;
                let d = decompose_rooted(&t.root_at_edge(e).unwrap()).unwrap();
                oracle.add_root(d.root_split, share);
                for key in d.pcsps {
                    oracle.add_pcsp(key, share);
                }
            }
            oracle.add_trees(w);
        }
        // The fast path writes no explicit zero entries; the oracle may.
        // Compare on the union of keys by value.
        for (s, w) in oracle.root_counts() {
            let fast = em.counts.root_counts().get(s).copied().unwrap_or(0.0);
            assert!((fast - w).abs() < 1e-10, "root {s}: {fast} vs {w}");
        }
        for (k, w) in oracle.pcsp_counts() {
            let fast = em.counts.pcsp_counts().get(k).copied().unwrap_or(0.0);
            assert!((fast - w).abs() < 1e-10, "pcsp: {fast} vs {w}");
        }
        assert!((em.counts.total_trees() - oracle.total_trees()).abs() < 1e-12);
    }
}
