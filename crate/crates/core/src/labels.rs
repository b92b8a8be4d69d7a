//! Edge labels and their classification.
//!
//! Labels are opaque atoms. A label is either a semaphore call (`p(s)` /
//! `v(s)`), a block that touches a shared variable (SV), or a block that
//! does not (NSV). The zero element of the algebra is never stored: it is
//! the absence of a matrix entry.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LabelError {
    #[error("label `{0}` is not part of the label partition")]
    Unknown(String),
    #[error("label `{0}` appears in more than one partition class")]
    Overlap(String),
}

/// Class of a label.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LabelClass {
    /// P-call on the named semaphore.
    P(Arc<str>),
    /// V-call on the named semaphore.
    V(Arc<str>),
    /// Block accessing exactly one shared variable (or one atomic
    /// multi-variable statement).
    Sv,
    /// Block accessing no shared variable.
    Nsv,
}

impl LabelClass {
    pub fn is_sync(&self) -> bool {
        matches!(self, LabelClass::P(_) | LabelClass::V(_))
    }

    pub fn semaphore(&self) -> Option<&str> {
        match self {
            LabelClass::P(s) | LabelClass::V(s) => Some(s),
            LabelClass::Sv | LabelClass::Nsv => None,
        }
    }
}

impl fmt::Display for LabelClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelClass::P(s) => write!(f, "P({s})"),
            LabelClass::V(s) => write!(f, "V({s})"),
            LabelClass::Sv => f.write_str("SV"),
            LabelClass::Nsv => f.write_str("NSV"),
        }
    }
}

/// An atomic edge label. Cloning is cheap.
///
/// Ordering is by name first, which is what the label-choice heuristics
/// of the NSV reduction use for tie-breaking.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Label {
    name: Arc<str>,
    class: LabelClass,
}

impl Label {
    pub fn p(sem: &str) -> Self {
        Label {
            name: format!("p({sem})").into(),
            class: LabelClass::P(sem.into()),
        }
    }

    pub fn v(sem: &str) -> Self {
        Label {
            name: format!("v({sem})").into(),
            class: LabelClass::V(sem.into()),
        }
    }

    pub fn sv(name: &str) -> Self {
        Label {
            name: name.into(),
            class: LabelClass::Sv,
        }
    }

    pub fn nsv(name: &str) -> Self {
        Label {
            name: name.into(),
            class: LabelClass::Nsv,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn class(&self) -> &LabelClass {
        &self.class
    }

    pub fn is_sync(&self) -> bool {
        self.class.is_sync()
    }

    pub fn is_p(&self) -> bool {
        matches!(self.class, LabelClass::P(_))
    }

    pub fn is_v(&self) -> bool {
        matches!(self.class, LabelClass::V(_))
    }

    pub fn is_nsv(&self) -> bool {
        self.class == LabelClass::Nsv
    }

    pub fn semaphore(&self) -> Option<&str> {
        self.class.semaphore()
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.class {
            LabelClass::P(_) | LabelClass::V(_) => f.write_str(&self.name),
            LabelClass::Sv => write!(f, "sv:{}", self.name),
            LabelClass::Nsv => write!(f, "nsv:{}", self.name),
        }
    }
}

/// Label product used when two automata synchronize: `p·p = p`,
/// `v·v = v`, everything else annihilates (`None` is the zero element).
pub fn sync_product(a: &Label, b: &Label) -> Option<Label> {
    (a == b && a.is_sync()).then(|| a.clone())
}

/// A finite set of labels, used by the filtered and selective operators.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelSet(BTreeSet<Label>);

impl LabelSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, label: Label) -> bool {
        self.0.insert(label)
    }

    pub fn contains(&self, label: &Label) -> bool {
        self.0.contains(label)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Label> {
        self.0.iter()
    }

    pub fn union(&self, other: &LabelSet) -> LabelSet {
        LabelSet(self.0.union(&other.0).cloned().collect())
    }
}

impl FromIterator<Label> for LabelSet {
    fn from_iter<I: IntoIterator<Item = Label>>(iter: I) -> Self {
        LabelSet(iter.into_iter().collect())
    }
}

impl<'a> IntoIterator for &'a LabelSet {
    type Item = &'a Label;
    type IntoIter = std::collections::btree_set::Iter<'a, Label>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// The three disjoint label classes of a system: synchronization labels,
/// shared-variable labels and non-shared labels.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelPartition {
    sync_labels: LabelSet,
    sv_labels: LabelSet,
    nsv_labels: LabelSet,
}

impl LabelPartition {
    /// Sorts labels into their classes. Duplicates are collapsed.
    pub fn from_labels<'a, I>(labels: I) -> Self
    where
        I: IntoIterator<Item = &'a Label>,
    {
        let mut partition = LabelPartition::default();
        for label in labels {
            let set = match label.class() {
                LabelClass::P(_) | LabelClass::V(_) => &mut partition.sync_labels,
                LabelClass::Sv => &mut partition.sv_labels,
                LabelClass::Nsv => &mut partition.nsv_labels,
            };
            set.insert(label.clone());
        }
        partition
    }

    /// Builds a partition from explicit sets, checking disjointness and
    /// that every label sits in the set matching its class.
    pub fn new(
        sync_labels: LabelSet,
        sv_labels: LabelSet,
        nsv_labels: LabelSet,
    ) -> Result<Self, LabelError> {
        for l in sync_labels.iter() {
            if sv_labels.contains(l) || nsv_labels.contains(l) || !l.is_sync() {
                return Err(LabelError::Overlap(l.to_string()));
            }
        }
        for l in sv_labels.iter() {
            if nsv_labels.contains(l) || *l.class() != LabelClass::Sv {
                return Err(LabelError::Overlap(l.to_string()));
            }
        }
        if let Some(l) = nsv_labels.iter().find(|l| !l.is_nsv()) {
            return Err(LabelError::Overlap(l.to_string()));
        }
        Ok(LabelPartition {
            sync_labels,
            sv_labels,
            nsv_labels,
        })
    }

    pub fn sync_labels(&self) -> &LabelSet {
        &self.sync_labels
    }

    pub fn sv_labels(&self) -> &LabelSet {
        &self.sv_labels
    }

    pub fn nsv_labels(&self) -> &LabelSet {
        &self.nsv_labels
    }

    /// All non-synchronization labels (SV ∪ NSV).
    pub fn variable_labels(&self) -> LabelSet {
        self.sv_labels.union(&self.nsv_labels)
    }

    pub fn all_labels(&self) -> LabelSet {
        self.sync_labels.union(&self.variable_labels())
    }

    pub fn classify(&self, label: &Label) -> Result<LabelClass, LabelError> {
        if self.sync_labels.contains(label)
            || self.sv_labels.contains(label)
            || self.nsv_labels.contains(label)
        {
            Ok(label.class().clone())
        } else {
            Err(LabelError::Unknown(label.to_string()))
        }
    }
}
