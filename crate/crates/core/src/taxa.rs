//! Ordered taxon sets.
//!
//! A [`TaxonSet`] fixes the universe of leaf labels and, crucially, their
//! order: clade bit vectors and the total order on clades are defined
//! relative to taxon positions, so the ordering must not change for the
//! lifetime of a run. Serialized artifacts carry the taxon order and it is
//! authoritative on load.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Characters that would break the text formats (Newick, parameter files,
/// clade rendering) if they appeared inside a taxon name.
const FORBIDDEN: &[char] = &[',', '|', '(', ')', ':', ';', '\t', '\n', '\r', ' ', '#'];

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum TaxaError {
    #[error("taxon name may not be empty")]
    EmptyName,
    #[error("duplicate taxon name {0:?}")]
    DuplicateName(String),
    #[error("taxon name {0:?} contains a reserved character")]
    ReservedChar(String),
}

/// An ordered set of distinct taxon names. Position in the set defines the
/// bit layout of every [`crate::Clade`] built against it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaxonSet {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl TaxonSet {
    /// Builds a taxon set from names in the given order.
    pub fn new<I, S>(names: I) -> Result<Self, TaxaError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        let mut index = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            if name.is_empty() {
                return Err(TaxaError::EmptyName);
            }
            if name.contains(FORBIDDEN) {
                return Err(TaxaError::ReservedChar(name.clone()));
            }
            if index.insert(name.clone(), i).is_some() {
                return Err(TaxaError::DuplicateName(name.clone()));
            }
        }
        Ok(TaxonSet { names, index })
    }

    /// Builds a taxon set from names sorted lexicographically. This is the
    /// canonical order used when taxa are inferred from a tree file.
    pub fn sorted<I, S>(names: I) -> Result<Self, TaxaError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut names: Vec<String> = names.into_iter().map(Into::into).collect();
        names.sort();
        Self::new(names)
    }

    /// `n` taxa named `t1..tn`, in numeric order.
    pub fn numbered(n: usize) -> Arc<Self> {
        Arc::new(Self::new((1..=n).map(|i| format!("t{i}"))).expect("generated names are valid"))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }
}

impl fmt::Display for TaxonSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.names.join(","))
    }
}
