//! Clades as fixed-width bit vectors.
//!
//! A clade is a nonempty subset of the taxon set, stored as a bit vector
//! with taxon 0 in the most significant position of the first word. That
//! layout makes the total order on clades (bit-lexicographic, taxon 0 most
//! significant) a plain word-by-word integer comparison, and scales past 64
//! taxa by adding words.

use std::cmp::Ordering;
use std::fmt;

use smallvec::SmallVec;

use crate::taxa::TaxonSet;

const WORD_BITS: usize = 64;

/// A nonempty-capable subset of a fixed taxon set. Width (number of taxa)
/// is carried so that cross-set misuse is caught early; all set operations
/// require equal widths.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Clade {
    n_taxa: u32,
    words: SmallVec<[u64; 1]>,
}

impl Clade {
    /// The empty subset over `n_taxa` positions.
    pub fn empty(n_taxa: usize) -> Self {
        let n_words = n_taxa.div_ceil(WORD_BITS).max(1);
        Clade {
            n_taxa: n_taxa as u32,
            words: SmallVec::from_elem(0, n_words),
        }
    }

    /// The full set over `n_taxa` positions.
    pub fn full(n_taxa: usize) -> Self {
        let mut c = Self::empty(n_taxa);
        for i in 0..n_taxa {
            c.insert(i);
        }
        c
    }

    /// A single-taxon clade.
    pub fn singleton(n_taxa: usize, taxon: usize) -> Self {
        let mut c = Self::empty(n_taxa);
        c.insert(taxon);
        c
    }

    /// Builds a clade from taxon indices.
    pub fn from_indices(n_taxa: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut c = Self::empty(n_taxa);
        for i in indices {
            c.insert(i);
        }
        c
    }

    /// Builds a clade from taxon names, resolving them against `taxa`.
    /// Returns `None` if any name is unknown.
    pub fn from_names<'a>(
        taxa: &TaxonSet,
        names: impl IntoIterator<Item = &'a str>,
    ) -> Option<Self> {
        let mut c = Self::empty(taxa.len());
        for name in names {
            c.insert(taxa.index_of(name)?);
        }
        Some(c)
    }

    #[inline]
    fn slot(&self, taxon: usize) -> (usize, u64) {
        debug_assert!(taxon < self.n_taxa as usize, "taxon index out of range");
        // Taxon 0 occupies the MSB of word 0 so that lexicographic word
        // comparison realizes the clade order.
        (
            taxon / WORD_BITS,
            1u64 << (WORD_BITS - 1 - taxon % WORD_BITS),
        )
    }

    pub fn insert(&mut self, taxon: usize) {
        let (w, mask) = self.slot(taxon);
        self.words[w] |= mask;
    }

    pub fn contains(&self, taxon: usize) -> bool {
        let (w, mask) = self.slot(taxon);
        self.words[w] & mask != 0
    }

    /// Number of taxa in the clade.
    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Width of the underlying bit vector (the taxon-set size).
    pub fn n_taxa(&self) -> usize {
        self.n_taxa as usize
    }

    #[inline]
    fn check_width(&self, other: &Self) {
        assert_eq!(
            self.n_taxa, other.n_taxa,
            "clade width mismatch: {} vs {}",
            self.n_taxa, other.n_taxa
        );
    }

    pub fn union(&self, other: &Self) -> Self {
        self.check_width(other);
        let words = self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| a | b)
            .collect();
        Clade {
            n_taxa: self.n_taxa,
            words,
        }
    }

    pub fn intersects(&self, other: &Self) -> bool {
        self.check_width(other);
        self.words.iter().zip(&other.words).any(|(a, b)| a & b != 0)
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.check_width(other);
        self.words
            .iter()
            .zip(&other.words)
            .all(|(a, b)| a & !b == 0)
    }

    /// Complement within the taxon set.
    pub fn complement(&self) -> Self {
        let n = self.n_taxa as usize;
        let mut words: SmallVec<[u64; 1]> = self.words.iter().map(|w| !w).collect();
        // Clear padding bits past the last taxon.
        let used_last = n % WORD_BITS;
        if used_last != 0 {
            let keep = !0u64 << (WORD_BITS - used_last);
            *words.last_mut().expect("at least one word") &= keep;
        }
        Clade {
            n_taxa: self.n_taxa,
            words,
        }
    }

    /// Iterator over member taxon indices in increasing order.
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_taxa as usize).filter(move |&i| self.contains(i))
    }

    /// Index of the lowest-order member taxon, if any.
    pub fn first_index(&self) -> Option<usize> {
        for (w, &word) in self.words.iter().enumerate() {
            if word != 0 {
                return Some(w * WORD_BITS + word.leading_zeros() as usize);
            }
        }
        None
    }

    /// Renders the clade as taxon names joined by `,` in taxon-set order.
    pub fn render(&self, taxa: &TaxonSet) -> String {
        assert_eq!(taxa.len(), self.n_taxa as usize, "clade width mismatch");
        let mut out = String::new();
        for i in self.indices() {
            if !out.is_empty() {
                out.push(',');
            }
            out.push_str(taxa.name(i));
        }
        out
    }
}

/// The total order on clades: bit-lexicographic with taxon 0 most
/// significant. With the MSB-first word layout this is word-wise integer
/// comparison. Panics on width mismatch (usage error).
impl Ord for Clade {
    fn cmp(&self, other: &Self) -> Ordering {
        self.check_width(other);
        self.words.cmp(&other.words)
    }
}

impl PartialOrd for Clade {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Clade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.n_taxa as usize {
            write!(f, "{}", if self.contains(i) { '1' } else { '0' })?;
        }
        Ok(())
    }
}
