//! Rooted and unrooted bifurcating topologies.
//!
//! Unrooted trees carry canonical edge identifiers: each edge induces a
//! bipartition of the taxon set, and edges are numbered 0..2N-4 by sorting
//! the bipartition side containing taxon 0 in increasing clade order. The
//! numbering is therefore an intrinsic property of the labeled topology,
//! stable across processes, and `root_at_edge`/`unroot` are mutually
//! inverse including the edge id.
//!
//! Canonical Newick text (children ordered by decreasing clade) doubles as
//! the tree identity key: two topologies are isomorphic as labeled trees
//! exactly when their [`TreeId`]s are equal.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use smallvec::SmallVec;
use thiserror::Error;

use crate::clade::Clade;
use crate::subsplit::Subsplit;
use crate::taxa::TaxonSet;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum TreeError {
    #[error("need at least {min} taxa, got {n}")]
    TooFewTaxa { n: usize, min: usize },
    #[error("edge {edge} out of range (tree has {count} edges)")]
    EdgeOutOfRange { edge: usize, count: usize },
    #[error("{n} taxa exceeds the enumeration cap of {cap}")]
    CapExceeded { n: usize, cap: usize },
    #[error("invalid topology: {0}")]
    Invalid(String),
}

/// Canonical string key for a topology. Rooted and unrooted trees render
/// differently (binary vs trifurcating root), so their ids never collide.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TreeId(String);

impl TreeId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TreeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum RNode {
    Leaf(u32),
    Internal(u32, u32),
}

/// A rooted binary tree with leaves labeled bijectively by the taxon set:
/// N leaves and N-1 internal nodes of out-degree exactly two.
#[derive(Debug, Clone)]
pub struct RootedTopology {
    taxa: Arc<TaxonSet>,
    nodes: Vec<RNode>,
    root: u32,
}

impl RootedTopology {
    pub(crate) fn from_parts(
        taxa: Arc<TaxonSet>,
        nodes: Vec<RNode>,
        root: u32,
    ) -> Result<Self, TreeError> {
        let n = taxa.len();
        if n < 1 {
            return Err(TreeError::TooFewTaxa { n, min: 1 });
        }
        let expect = 2 * n - 1;
        if nodes.len() != expect {
            return Err(TreeError::Invalid(format!(
                "rooted tree on {n} taxa needs {expect} nodes, got {}",
                nodes.len()
            )));
        }
        let mut seen_taxon = vec![false; n];
        let mut seen_node = vec![false; nodes.len()];
        let mut stack = vec![root];
        let mut visited = 0usize;
        while let Some(v) = stack.pop() {
            let v = v as usize;
            if v >= nodes.len() || seen_node[v] {
                return Err(TreeError::Invalid(
                    "node visited twice or out of range".into(),
                ));
            }
            seen_node[v] = true;
            visited += 1;
            match nodes[v] {
                RNode::Leaf(t) => {
                    let t = t as usize;
                    if t >= n || seen_taxon[t] {
                        return Err(TreeError::Invalid("taxon repeated or out of range".into()));
                    }
                    seen_taxon[t] = true;
                }
                RNode::Internal(l, r) => {
                    stack.push(l);
                    stack.push(r);
                }
            }
        }
        if visited != nodes.len() {
            return Err(TreeError::Invalid("tree has unreachable nodes".into()));
        }
        Ok(RootedTopology { taxa, nodes, root })
    }

    pub fn taxa(&self) -> &Arc<TaxonSet> {
        &self.taxa
    }

    pub fn n_taxa(&self) -> usize {
        self.taxa.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn root(&self) -> usize {
        self.root as usize
    }

    /// Children of an internal node, `None` for a leaf.
    pub fn children(&self, v: usize) -> Option<(usize, usize)> {
        match self.nodes[v] {
            RNode::Leaf(_) => None,
            RNode::Internal(l, r) => Some((l as usize, r as usize)),
        }
    }

    /// The taxon at a leaf, `None` for an internal node.
    pub fn leaf_taxon(&self, v: usize) -> Option<usize> {
        match self.nodes[v] {
            RNode::Leaf(t) => Some(t as usize),
            RNode::Internal(..) => None,
        }
    }

    /// Clade below every node, indexed by node id.
    pub fn clades(&self) -> Vec<Clade> {
        let n = self.taxa.len();
        let mut out = vec![Clade::empty(n); self.nodes.len()];
        let mut stack = vec![(self.root, false)];
        while let Some((v, expanded)) = stack.pop() {
            match self.nodes[v as usize] {
                RNode::Leaf(t) => out[v as usize] = Clade::singleton(n, t as usize),
                RNode::Internal(l, r) => {
                    if expanded {
                        out[v as usize] = out[l as usize].union(&out[r as usize]);
                    } else {
                        stack.push((v, true));
                        stack.push((l, false));
                        stack.push((r, false));
                    }
                }
            }
        }
        out
    }

    /// Canonical Newick with children in decreasing clade order, branch
    /// lengths omitted.
    pub fn write_newick(&self) -> String {
        let clades = self.clades();
        let mut out = String::new();
        self.render(self.root as usize, &clades, &mut out);
        out.push(';');
        out
    }

    fn render(&self, v: usize, clades: &[Clade], out: &mut String) {
        match self.nodes[v] {
            RNode::Leaf(t) => out.push_str(self.taxa.name(t as usize)),
            RNode::Internal(l, r) => {
                let (a, b) = if clades[l as usize] > clades[r as usize] {
                    (l, r)
                } else {
                    (r, l)
                };
                out.push('(');
                self.render(a as usize, clades, out);
                out.push(',');
                self.render(b as usize, clades, out);
                out.push(')');
            }
        }
    }

    pub fn tree_id(&self) -> TreeId {
        TreeId(self.write_newick())
    }

    /// Collapses the root and returns the unrooted topology together with
    /// the canonical id of the edge that carried the root.
    pub fn unroot(&self) -> Result<(UnrootedTopology, usize), TreeError> {
        let n = self.taxa.len();
        if n < 3 {
            return Err(TreeError::TooFewTaxa { n, min: 3 });
        }
        // Raw node ids: leaves keep their taxon index, internal non-root
        // nodes are numbered from n.
        let mut raw_id = vec![u32::MAX; self.nodes.len()];
        let mut next = n as u32;
        for (v, node) in self.nodes.iter().enumerate() {
            raw_id[v] = match node {
                RNode::Leaf(t) => *t,
                RNode::Internal(..) if v as u32 != self.root => {
                    next += 1;
                    next - 1
                }
                RNode::Internal(..) => u32::MAX,
            };
        }
        let mut edges = Vec::with_capacity(2 * n - 3);
        for (v, node) in self.nodes.iter().enumerate() {
            if let RNode::Internal(l, r) = node {
                if v as u32 == self.root {
                    edges.push((raw_id[*l as usize], raw_id[*r as usize]));
                } else {
                    edges.push((raw_id[v], raw_id[*l as usize]));
                    edges.push((raw_id[v], raw_id[*r as usize]));
                }
            }
        }
        let unrooted = UnrootedTopology::from_edge_list(self.taxa.clone(), edges)?;
        let clades = self.clades();
        let (l, r) = self.children(self.root as usize).ok_or_else(|| {
            TreeError::Invalid("root of a tree on >= 3 taxa must be internal".into())
        })?;
        let root_split = Subsplit::new(clades[l].clone(), clades[r].clone())
            .map_err(|e| TreeError::Invalid(e.to_string()))?;
        let edge = unrooted
            .find_edge_by_split(&root_split)
            .ok_or_else(|| TreeError::Invalid("root split missing after unrooting".into()))?;
        Ok((unrooted, edge))
    }
}

/// An unrooted tree: leaves of degree one labeled bijectively by the taxon
/// set, internal vertices of degree three, and 2N-3 canonically numbered
/// edges. Nodes 0..N-1 are the leaves (node id = taxon id).
#[derive(Debug, Clone)]
pub struct UnrootedTopology {
    taxa: Arc<TaxonSet>,
    adj: Vec<SmallVec<[(u32, u32); 3]>>,
    /// Edge endpoints; `.0` is on the taxon-0 side, `.1` on the far side.
    edges: Vec<(u32, u32)>,
    /// Bipartition subsplit per edge.
    splits: Vec<Subsplit>,
    /// Per directed edge `2e + d`: the clade on the head side. `2e` points
    /// at `edges[e].1` (away from taxon 0), `2e + 1` back at `edges[e].0`.
    below: Vec<Clade>,
    /// Edge ids in DFS postorder from leaf 0: every edge appears after all
    /// edges in its away-from-taxon-0 subtree.
    postorder: Vec<u32>,
}

impl UnrootedTopology {
    /// Builds and canonicalizes a topology from a raw edge list. Leaves
    /// must be numbered 0..N-1 (taxon ids) and internal vertices N..2N-3.
    pub(crate) fn from_edge_list(
        taxa: Arc<TaxonSet>,
        raw_edges: Vec<(u32, u32)>,
    ) -> Result<Self, TreeError> {
        let n = taxa.len();
        if n < 3 {
            return Err(TreeError::TooFewTaxa { n, min: 3 });
        }
        let n_nodes = 2 * n - 2;
        if raw_edges.len() != 2 * n - 3 {
            return Err(TreeError::Invalid(format!(
                "unrooted tree on {n} taxa needs {} edges, got {}",
                2 * n - 3,
                raw_edges.len()
            )));
        }
        let mut adj: Vec<SmallVec<[(u32, u32); 3]>> = vec![SmallVec::new(); n_nodes];
        for (i, &(a, b)) in raw_edges.iter().enumerate() {
            if a as usize >= n_nodes || b as usize >= n_nodes || a == b {
                return Err(TreeError::Invalid("edge endpoint out of range".into()));
            }
            adj[a as usize].push((b, i as u32));
            adj[b as usize].push((a, i as u32));
        }
        for (v, nbrs) in adj.iter().enumerate() {
            let want = if v < n { 1 } else { 3 };
            if nbrs.len() != want {
                return Err(TreeError::Invalid(format!(
                    "node {v} has degree {}, expected {want}",
                    nbrs.len()
                )));
            }
        }

        // One DFS from leaf 0 orients every edge and yields, per raw edge,
        // the clade on the side away from taxon 0.
        struct Orientation {
            n: usize,
            visited: Vec<bool>,
            far_clade: Vec<Clade>,
            far_node: Vec<u32>,
            post_raw: Vec<u32>,
        }
        impl Orientation {
            fn dfs(
                &mut self,
                adj: &[SmallVec<[(u32, u32); 3]>],
                v: usize,
                via: u32,
            ) -> Result<Clade, TreeError> {
                if self.visited[v] {
                    return Err(TreeError::Invalid("cycle detected".into()));
                }
                self.visited[v] = true;
                let mut clade = if v < self.n {
                    Clade::singleton(self.n, v)
                } else {
                    Clade::empty(self.n)
                };
                for &(w, e) in &adj[v] {
                    if e == via {
                        continue;
                    }
                    let sub = self.dfs(adj, w as usize, e)?;
                    self.far_clade[e as usize] = sub.clone();
                    self.far_node[e as usize] = w;
                    self.post_raw.push(e);
                    clade = clade.union(&sub);
                }
                Ok(clade)
            }
        }
        let mut orient = Orientation {
            n,
            visited: vec![false; n_nodes],
            far_clade: vec![Clade::empty(n); raw_edges.len()],
            far_node: vec![0; raw_edges.len()],
            post_raw: Vec::with_capacity(raw_edges.len()),
        };
        orient.dfs(&adj, 0, u32::MAX)?;
        if orient.visited.iter().any(|&x| !x) {
            return Err(TreeError::Invalid("tree is not connected".into()));
        }
        let Orientation {
            far_clade,
            far_node,
            post_raw,
            ..
        } = orient;

        // Canonical edge order: ascending by the taxon-0 side clade.
        let mut order: Vec<u32> = (0..raw_edges.len() as u32).collect();
        let near: Vec<Clade> = far_clade.iter().map(Clade::complement).collect();
        order.sort_by(|&a, &b| near[a as usize].cmp(&near[b as usize]));
        let mut rank = vec![0u32; raw_edges.len()];
        for (new_id, &raw) in order.iter().enumerate() {
            rank[raw as usize] = new_id as u32;
        }

        let mut edges = Vec::with_capacity(raw_edges.len());
        let mut splits = Vec::with_capacity(raw_edges.len());
        let mut below = Vec::with_capacity(2 * raw_edges.len());
        for &raw in &order {
            let raw = raw as usize;
            let far = far_node[raw];
            let (a, b) = raw_edges[raw];
            let near_node = if a == far { b } else { a };
            edges.push((near_node, far));
            splits.push(
                Subsplit::new(far_clade[raw].clone(), near[raw].clone())
                    .map_err(|e| TreeError::Invalid(e.to_string()))?,
            );
            below.push(far_clade[raw].clone());
            below.push(near[raw].clone());
        }
        let mut canon_adj: Vec<SmallVec<[(u32, u32); 3]>> = vec![SmallVec::new(); n_nodes];
        for v in 0..n_nodes {
            for &(w, e) in &adj[v] {
                canon_adj[v].push((w, rank[e as usize]));
            }
        }
        let postorder: Vec<u32> = post_raw.iter().map(|&e| rank[e as usize]).collect();
        Ok(UnrootedTopology {
            taxa,
            adj: canon_adj,
            edges,
            splits,
            below,
            postorder,
        })
    }

    pub fn taxa(&self) -> &Arc<TaxonSet> {
        &self.taxa
    }

    pub fn n_taxa(&self) -> usize {
        self.taxa.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_leaf(&self, v: usize) -> bool {
        v < self.taxa.len()
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    /// Neighbors of `v` as `(node, edge)` pairs.
    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adj[v].iter().map(|&(w, e)| (w as usize, e as usize))
    }

    pub fn edge_endpoints(&self, e: usize) -> (usize, usize) {
        let (a, b) = self.edges[e];
        (a as usize, b as usize)
    }

    /// The bipartition subsplit induced by edge `e`.
    pub fn edge_split(&self, e: usize) -> &Subsplit {
        &self.splits[e]
    }

    /// Directed edge along `e` whose head is `head`.
    pub fn de_toward(&self, e: usize, head: usize) -> usize {
        if self.edges[e].1 as usize == head {
            2 * e
        } else {
            debug_assert_eq!(self.edges[e].0 as usize, head);
            2 * e + 1
        }
    }

    pub fn de_head(&self, de: usize) -> usize {
        let (a, b) = self.edges[de / 2];
        if de & 1 == 0 {
            b as usize
        } else {
            a as usize
        }
    }

    pub fn de_edge(&self, de: usize) -> usize {
        de / 2
    }

    /// The clade on the head side of a directed edge.
    pub fn below(&self, de: usize) -> &Clade {
        &self.below[de]
    }

    /// Edge ids in postorder of the traversal anchored at leaf 0. For each
    /// edge, all edges strictly on its away-from-taxon-0 side come first.
    pub fn postorder_edges(&self) -> &[u32] {
        &self.postorder
    }

    /// Per directed edge: the subsplit of the head-side clade as divided by
    /// the head's two far neighbors, or `None` when the head is a leaf.
    pub fn directed_subsplits(&self) -> Vec<Option<Subsplit>> {
        let mut out = vec![None; 2 * self.edges.len()];
        for (de, slot) in out.iter_mut().enumerate() {
            let head = self.de_head(de);
            if self.is_leaf(head) {
                continue;
            }
            let via = self.de_edge(de);
            let mut parts: SmallVec<[&Clade; 2]> = SmallVec::new();
            for (w, e) in self.neighbors(head) {
                if e != via {
                    parts.push(self.below(self.de_toward(e, w)));
                }
            }
            debug_assert_eq!(parts.len(), 2);
            *slot = Some(
                Subsplit::new(parts[0].clone(), parts[1].clone())
                    .expect("sibling subtree clades are disjoint and nonempty"),
            );
        }
        out
    }

    /// Canonical id of the pendant edge of a taxon.
    pub fn pendant_edge_of(&self, taxon: usize) -> usize {
        self.adj[taxon][0].1 as usize
    }

    pub(crate) fn find_edge_by_split(&self, split: &Subsplit) -> Option<usize> {
        self.splits.iter().position(|s| s == split)
    }

    /// Roots the tree on edge `e`: the root split is the bipartition of `e`.
    pub fn root_at_edge(&self, e: usize) -> Result<RootedTopology, TreeError> {
        if e >= self.edges.len() {
            return Err(TreeError::EdgeOutOfRange {
                edge: e,
                count: self.edges.len(),
            });
        }
        let mut nodes = Vec::with_capacity(2 * self.taxa.len() - 1);
        let (a, b) = self.edges[e];
        let left = self.build_rooted(a as usize, e, &mut nodes);
        let right = self.build_rooted(b as usize, e, &mut nodes);
        nodes.push(RNode::Internal(left, right));
        let root = nodes.len() as u32 - 1;
        RootedTopology::from_parts(self.taxa.clone(), nodes, root)
    }

    fn build_rooted(&self, v: usize, via: usize, nodes: &mut Vec<RNode>) -> u32 {
        if self.is_leaf(v) {
            nodes.push(RNode::Leaf(v as u32));
            return nodes.len() as u32 - 1;
        }
        let mut children: SmallVec<[u32; 2]> = SmallVec::new();
        for (w, e) in self.neighbors(v) {
            if e != via {
                children.push(self.build_rooted(w, e, nodes));
            }
        }
        debug_assert_eq!(children.len(), 2);
        nodes.push(RNode::Internal(children[0], children[1]));
        nodes.len() as u32 - 1
    }

    /// Canonical Newick: trifurcating at the internal vertex adjacent to
    /// taxon 0, subtrees in decreasing clade order.
    pub fn write_newick(&self) -> String {
        let center = self.adj[0][0].0 as usize;
        let mut dirs: SmallVec<[usize; 3]> = SmallVec::new();
        for (w, e) in self.neighbors(center) {
            dirs.push(self.de_toward(e, w));
        }
        dirs.sort_by(|&a, &b| self.below[b].cmp(&self.below[a]));
        let mut out = String::from("(");
        for (i, &de) in dirs.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            self.render_dir(de, &mut out);
        }
        out.push_str(");");
        out
    }

    fn render_dir(&self, de: usize, out: &mut String) {
        let head = self.de_head(de);
        if self.is_leaf(head) {
            out.push_str(self.taxa.name(head));
            return;
        }
        let via = self.de_edge(de);
        let mut dirs: SmallVec<[usize; 2]> = SmallVec::new();
        for (w, e) in self.neighbors(head) {
            if e != via {
                dirs.push(self.de_toward(e, w));
            }
        }
        dirs.sort_by(|&a, &b| self.below[b].cmp(&self.below[a]));
        out.push('(');
        for (i, &d) in dirs.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            self.render_dir(d, out);
        }
        out.push(')');
    }

    pub fn tree_id(&self) -> TreeId {
        TreeId(self.write_newick())
    }

    /// A uniformly random topology, built by inserting taxa one at a time
    /// on a uniformly chosen edge (every topology has exactly one insertion
    /// history, so the result is uniform over the (2N-5)!! trees).
    pub fn random<R: Rng + ?Sized>(taxa: &Arc<TaxonSet>, rng: &mut R) -> Result<Self, TreeError> {
        let n = taxa.len();
        if n < 3 {
            return Err(TreeError::TooFewTaxa { n, min: 3 });
        }
        let mut edges = star_edges(n);
        for leaf in 3..n {
            let at = rng.random_range(0..edges.len());
            insert_leaf(&mut edges, at, leaf as u32, (n + leaf - 2) as u32);
        }
        Self::from_edge_list(taxa.clone(), edges)
    }
}

/// The three-taxon star over leaves 0,1,2 with center `n`.
pub(crate) fn star_edges(n: usize) -> Vec<(u32, u32)> {
    let c = n as u32;
    vec![(0, c), (1, c), (2, c)]
}

/// Subdivides `edges[at]` with `new_internal` and hangs `leaf` off it.
pub(crate) fn insert_leaf(edges: &mut Vec<(u32, u32)>, at: usize, leaf: u32, new_internal: u32) {
    let (a, b) = edges[at];
    edges[at] = (a, new_internal);
    edges.push((new_internal, b));
    edges.push((new_internal, leaf));
}
