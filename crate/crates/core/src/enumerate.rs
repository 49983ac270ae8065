//! Exhaustive enumeration of small tree spaces.
//!
//! Unrooted trees are generated by deterministic leaf insertion: every tree
//! on k taxa arises from exactly one (tree on k-1 taxa, edge) pair, so
//! stepping taxon k through the 2(k-1)-3 insertion edges enumerates each of
//! the (2N-5)!! topologies exactly once, in a reproducible order. Rooted
//! trees are every edge-rooting of every unrooted tree, (2N-3)!! in total.

use std::sync::Arc;

use crate::taxa::TaxonSet;
use crate::topology::{insert_leaf, star_edges, RootedTopology, TreeError, UnrootedTopology};

/// Largest taxon set enumerated by default; overridable by callers.
pub const DEFAULT_ENUM_CAP: usize = 10;

/// (2n-5)!!, the number of unrooted bifurcating topologies on n >= 3 taxa.
/// `None` on overflow.
pub fn unrooted_tree_count(n: usize) -> Option<u128> {
    if n < 3 {
        return None;
    }
    let mut count: u128 = 1;
    let mut odd = 3u128;
    for _ in 3..n {
        count = count.checked_mul(odd)?;
        odd += 2;
    }
    Some(count)
}

/// (2n-3)!!, the number of rooted bifurcating topologies on n >= 2 taxa.
pub fn rooted_tree_count(n: usize) -> Option<u128> {
    if n < 2 {
        return None;
    }
    unrooted_tree_count(n + 1)
}

fn check(taxa: &TaxonSet, cap: usize) -> Result<(), TreeError> {
    let n = taxa.len();
    if n < 3 {
        return Err(TreeError::TooFewTaxa { n, min: 3 });
    }
    if n > cap {
        return Err(TreeError::CapExceeded { n, cap });
    }
    Ok(())
}

/// Streams all (2N-5)!! unrooted topologies in insertion order.
pub fn enumerate_unrooted(
    taxa: &Arc<TaxonSet>,
    cap: usize,
) -> Result<UnrootedEnumeration, TreeError> {
    check(taxa, cap)?;
    let n = taxa.len();
    Ok(UnrootedEnumeration {
        taxa: Arc::clone(taxa),
        digits: vec![0; n - 3],
        done: false,
    })
}

/// Streams all (2N-3)!! rooted topologies: each unrooted tree rooted on
/// each of its edges, in (tree, edge) order.
pub fn enumerate_rooted(taxa: &Arc<TaxonSet>, cap: usize) -> Result<RootedEnumeration, TreeError> {
    Ok(RootedEnumeration {
        inner: enumerate_unrooted(taxa, cap)?,
        current: None,
        next_edge: 0,
    })
}

pub struct UnrootedEnumeration {
    taxa: Arc<TaxonSet>,
    /// Mixed-radix counter: digit j picks the insertion edge for taxon j+3,
    /// with radix 2(j+3)-3.
    digits: Vec<usize>,
    done: bool,
}

impl UnrootedEnumeration {
    fn build(&self) -> UnrootedTopology {
        let n = self.taxa.len();
        let mut edges = star_edges(n);
        for (j, &at) in self.digits.iter().enumerate() {
            let leaf = (3 + j) as u32;
            insert_leaf(&mut edges, at, leaf, (n + 1 + j) as u32);
        }
        UnrootedTopology::from_edge_list(Arc::clone(&self.taxa), edges)
            .expect("leaf insertion yields a valid topology")
    }

    fn advance(&mut self) {
        for j in (0..self.digits.len()).rev() {
            let radix = 2 * (j + 3) - 3;
            self.digits[j] += 1;
            if self.digits[j] < radix {
                return;
            }
            self.digits[j] = 0;
        }
        self.done = true;
    }
}

impl Iterator for UnrootedEnumeration {
    type Item = UnrootedTopology;

    fn next(&mut self) -> Option<UnrootedTopology> {
        if self.done {
            return None;
        }
        let tree = self.build();
        self.advance();
        Some(tree)
    }
}

pub struct RootedEnumeration {
    inner: UnrootedEnumeration,
    current: Option<UnrootedTopology>,
    next_edge: usize,
}

impl Iterator for RootedEnumeration {
    type Item = RootedTopology;

    fn next(&mut self) -> Option<RootedTopology> {
        loop {
            match &self.current {
                Some(u) if self.next_edge < u.edge_count() => {
                    let e = self.next_edge;
                    self.next_edge += 1;
                    return Some(u.root_at_edge(e).expect("edge id in range"));
                }
                _ => {
                    self.current = Some(self.inner.next()?);
                    self.next_edge = 0;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn counts_match_double_factorials() {
        assert_eq!(unrooted_tree_count(3), Some(1));
        assert_eq!(unrooted_tree_count(4), Some(3));
        assert_eq!(unrooted_tree_count(6), Some(105));
        assert_eq!(unrooted_tree_count(8), Some(10395));
        assert_eq!(rooted_tree_count(3), Some(3));
        assert_eq!(rooted_tree_count(5), Some(105));
    }

    #[test]
    fn four_taxa_gives_three_distinct_trees() {
        let taxa = TaxonSet::numbered(4);
        let ids: BTreeSet<_> = enumerate_unrooted(&taxa, DEFAULT_ENUM_CAP)
            .unwrap()
            .map(|t| t.tree_id())
            .collect();
        assert_eq!(ids.len(), 3);
    }

    #[test]
    fn six_taxa_count_and_distinctness() {
        let taxa = TaxonSet::numbered(6);
        let ids: BTreeSet<_> = enumerate_unrooted(&taxa, DEFAULT_ENUM_CAP)
            .unwrap()
            .map(|t| t.tree_id())
            .collect();
        assert_eq!(ids.len(), 105);
    }

    #[test]
    fn rooted_enumeration_counts() {
        let taxa = TaxonSet::numbered(3);
        assert_eq!(
            enumerate_rooted(&taxa, DEFAULT_ENUM_CAP).unwrap().count(),
            3
        );
        let taxa = TaxonSet::numbered(4);
        let ids: BTreeSet<_> = enumerate_rooted(&taxa, DEFAULT_ENUM_CAP)
            .unwrap()
            .map(|t| t.tree_id())
            .collect();
        assert_eq!(ids.len(), 15);
        let taxa = TaxonSet::numbered(5);
        assert_eq!(
            enumerate_rooted(&taxa, DEFAULT_ENUM_CAP).unwrap().count(),
            105
        );
    }

    #[test]
    fn cap_is_enforced() {
        let taxa = TaxonSet::numbered(11);
        assert!(matches!(
            enumerate_unrooted(&taxa, DEFAULT_ENUM_CAP),
            Err(TreeError::CapExceeded { n: 11, cap: 10 })
        ));
        let taxa = TaxonSet::numbered(11);
        assert!(enumerate_unrooted(&taxa, 11).is_ok());
        let taxa = TaxonSet::numbered(2);
        assert!(matches!(
            enumerate_unrooted(&taxa, DEFAULT_ENUM_CAP),
            Err(TreeError::TooFewTaxa { n: 2, min: 3 })
        ));
    }

    #[test]
    fn enumeration_order_is_deterministic() {
        let taxa = TaxonSet::numbered(5);
        let a: Vec<_> = enumerate_unrooted(&taxa, 10)
            .unwrap()
            .map(|t| t.tree_id())
            .collect();
        let b: Vec<_> = enumerate_unrooted(&taxa, 10)
            .unwrap()
            .map(|t| t.tree_id())
            .collect();
        assert_eq!(a, b);
        assert_eq!(a.len(), 15);
    }
}
