//! Subsplits and parent-child subsplit pair (PCSP) keys.
//!
//! A subsplit is an ordered pair of disjoint nonempty clades `(Y, Z)` with
//! `Y` greater under the clade order; it records how a clade splits in two.
//! A PCSP keys one shared conditional parameter: a child subsplit together
//! with the parent subsplit and the parent part (the focal clade) it
//! refines. Keys compare structurally, so the same local pair observed at
//! different tree locations lands on the same parameter.

use std::fmt;

use thiserror::Error;

use crate::clade::Clade;
use crate::taxa::TaxonSet;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum SubsplitError {
    #[error("subsplit parts must be nonempty")]
    EmptyPart,
    #[error("subsplit parts must be disjoint")]
    Overlap,
    #[error("child subsplit covers {child}, which is neither part of the parent {parent}")]
    IncompatibleChild { parent: String, child: String },
    #[error("focal clade of size {0} splits deterministically and has no stored parameter")]
    FocalTooSmall(usize),
}

/// An ordered pair of disjoint nonempty clades, normalized so `y > z`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Subsplit {
    y: Clade,
    z: Clade,
}

impl Subsplit {
    /// Normalizes `{a, b}` into the ordered pair `(Y, Z)` with `Y > Z`.
    pub fn new(a: Clade, b: Clade) -> Result<Self, SubsplitError> {
        if a.is_empty() || b.is_empty() {
            return Err(SubsplitError::EmptyPart);
        }
        if a.intersects(&b) {
            return Err(SubsplitError::Overlap);
        }
        if a > b {
            Ok(Subsplit { y: a, z: b })
        } else {
            Ok(Subsplit { y: b, z: a })
        }
    }

    pub fn y(&self) -> &Clade {
        &self.y
    }

    pub fn z(&self) -> &Clade {
        &self.z
    }

    /// The clade this subsplit divides: `Y ∪ Z`.
    pub fn clade(&self) -> Clade {
        self.y.union(&self.z)
    }

    /// Renders as `Y|Z` with each side in taxon-set order.
    pub fn render(&self, taxa: &TaxonSet) -> String {
        format!("{}|{}", self.y.render(taxa), self.z.render(taxa))
    }
}

impl fmt::Display for Subsplit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}|{}", self.y, self.z)
    }
}

/// A parent-child subsplit pair: the index of one shared conditional
/// parameter. The focal clade is the parent part the child refines; it is
/// always `child.clade()`, so it is not stored separately.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PcspKey {
    parent: Subsplit,
    child: Subsplit,
}

impl PcspKey {
    /// Validates that the child splits one part of the parent and that the
    /// focal clade is large enough to carry a parameter (size >= 3; smaller
    /// clades split deterministically).
    pub fn new(parent: Subsplit, child: Subsplit) -> Result<Self, SubsplitError> {
        let focal = child.clade();
        if focal != *parent.y() && focal != *parent.z() {
            return Err(SubsplitError::IncompatibleChild {
                parent: parent.to_string(),
                child: child.to_string(),
            });
        }
        let size = focal.count();
        if size < 3 {
            return Err(SubsplitError::FocalTooSmall(size));
        }
        Ok(PcspKey { parent, child })
    }

    pub fn parent(&self) -> &Subsplit {
        &self.parent
    }

    pub fn child(&self) -> &Subsplit {
        &self.child
    }

    /// The parent part the child refines.
    pub fn focal(&self) -> &Clade {
        if self.child.clade() == *self.parent.y() {
            self.parent.y()
        } else {
            self.parent.z()
        }
    }

    /// Renders as `parentY|parentZ→childY|childZ` for diagnostics.
    pub fn render(&self, taxa: &TaxonSet) -> String {
        format!("{}→{}", self.parent.render(taxa), self.child.render(taxa))
    }
}
