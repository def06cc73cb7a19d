//! Built-in lattice values: grow-only sets, max registers, boolean-or
//! flags and two-phase (tombstone) sets.
//!
//! Every variant is a join-semilattice: [`LatticeValue::merge`] is the least
//! upper bound and [`LatticeValue::leq`] is the induced partial order.
//! Lattice values can appear as fact arguments; when a fact lands in a
//! persisted relation, it is merged column-wise with any existing fact that
//! agrees on all non-lattice columns.

use std::collections::BTreeSet;
use std::fmt;

use crate::relspace::Value;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("lattice variant mismatch: cannot combine {left} with {right}")]
pub struct VariantMismatch {
    pub left: &'static str,
    pub right: &'static str,
}

/// Set with tombstones. An element is visible while it has been added and
/// not tombstoned; once tombstoned it stays hidden.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TwoPhaseSet {
    pub added: BTreeSet<Value>,
    pub tombstoned: BTreeSet<Value>,
}

impl TwoPhaseSet {
    pub fn new(added: impl IntoIterator<Item = Value>, tombstoned: impl IntoIterator<Item = Value>) -> Self {
        TwoPhaseSet { added: added.into_iter().collect(), tombstoned: tombstoned.into_iter().collect() }
    }

    /// `added \ tombstoned`
    pub fn visible(&self) -> BTreeSet<Value> {
        self.added.difference(&self.tombstoned).cloned().collect()
    }

    pub fn merge(&self, other: &TwoPhaseSet) -> TwoPhaseSet {
        TwoPhaseSet {
            added: self.added.union(&other.added).cloned().collect(),
            tombstoned: self.tombstoned.union(&other.tombstoned).cloned().collect(),
        }
    }

    pub fn leq(&self, other: &TwoPhaseSet) -> bool {
        self.added.is_subset(&other.added) && self.tombstoned.is_subset(&other.tombstoned)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LatticeValue {
    GSet(BTreeSet<Value>),
    MaxInt(i64),
    BoolOr(bool),
    TwoPSet(TwoPhaseSet),
}

impl LatticeValue {
    pub fn variant_name(&self) -> &'static str {
        match self {
            LatticeValue::GSet(_) => "gset",
            LatticeValue::MaxInt(_) => "maxint",
            LatticeValue::BoolOr(_) => "boolor",
            LatticeValue::TwoPSet(_) => "twopset",
        }
    }

    pub fn gset(items: impl IntoIterator<Item = Value>) -> Self {
        LatticeValue::GSet(items.into_iter().collect())
    }

    /// Least upper bound of two values of the same variant.
    pub fn merge(&self, other: &LatticeValue) -> Result<LatticeValue, VariantMismatch> {
        use LatticeValue::*;
        Ok(match (self, other) {
            (GSet(a), GSet(b)) => GSet(a.union(b).cloned().collect()),
            (MaxInt(a), MaxInt(b)) => MaxInt(*a.max(b)),
            (BoolOr(a), BoolOr(b)) => BoolOr(*a || *b),
            (TwoPSet(a), TwoPSet(b)) => TwoPSet(a.merge(b)),
            _ => return Err(self.mismatch(other)),
        })
    }

    pub fn leq(&self, other: &LatticeValue) -> Result<bool, VariantMismatch> {
        use LatticeValue::*;
        Ok(match (self, other) {
            (GSet(a), GSet(b)) => a.is_subset(b),
            (MaxInt(a), MaxInt(b)) => a <= b,
            (BoolOr(a), BoolOr(b)) => !*a || *b,
            (TwoPSet(a), TwoPSet(b)) => a.leq(b),
            _ => return Err(self.mismatch(other)),
        })
    }

    fn mismatch(&self, other: &LatticeValue) -> VariantMismatch {
        VariantMismatch { left: self.variant_name(), right: other.variant_name() }
    }
}

fn write_set(f: &mut fmt::Formatter<'_>, set: &BTreeSet<Value>) -> fmt::Result {
    f.write_str("{")?;
    for (i, v) in set.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{v}")?;
    }
    f.write_str("}")
}

impl fmt::Display for LatticeValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LatticeValue::GSet(s) => {
                f.write_str("gset")?;
                write_set(f, s)
            }
            LatticeValue::MaxInt(v) => write!(f, "maxint({v})"),
            LatticeValue::BoolOr(b) => write!(f, "boolor({b})"),
            LatticeValue::TwoPSet(s) => {
                f.write_str("2p{added: ")?;
                write_set(f, &s.added)?;
                f.write_str(", tomb: ")?;
                write_set(f, &s.tombstoned)?;
                f.write_str("}")
            }
        }
    }
}

pub fn merge(a: &LatticeValue, b: &LatticeValue) -> Result<LatticeValue, VariantMismatch> {
    a.merge(b)
}

pub fn leq(a: &LatticeValue, b: &LatticeValue) -> Result<bool, VariantMismatch> {
    a.leq(b)
}

pub fn twopset_visible(s: &TwoPhaseSet) -> LatticeValue {
    LatticeValue::GSet(s.visible())
}
