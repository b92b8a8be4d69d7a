//! Kronecker algebra over label matrices.
//!
//! Thread and semaphore graphs are explicit [`SparseMatrix`] values. Every
//! composed matrix is a [`LazyMatrix`]: an immutable expression tree that
//! answers `successors(row)` on demand and never materializes its entries.
//!
//! Row and column indices of composed matrices are [`CompositeIndex`]
//! values, one digit per leaf in left-to-right order. For `A ∘ B` the flat
//! index of `(i, p)` is `i·o(B) + p`.

mod lazy;
mod sparse;

use std::fmt;

use num_bigint::BigUint;
use smallvec::SmallVec;
use thiserror::Error;

use crate::labels::{sync_product, Label};

pub use lazy::{
    filtered, identity, identity_tensor_right, kfold_product, kfold_sum, kron_product, kron_sum,
    merry, plus, selective_kron, LazyMatrix, RowProbe,
};
pub use sparse::SparseMatrix;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AlgebraError {
    #[error("matrix order must be positive")]
    EmptyMatrix,
    #[error("entry ({row}, {col}) lies outside a matrix of order {order}")]
    IndexOutOfRange { row: usize, col: usize, order: usize },
    #[error("two labels on entry ({row}, {col})")]
    DuplicateEntry { row: usize, col: usize },
    #[error("k-fold operation over an empty list")]
    EmptyFold,
    #[error("operands of + have different shapes")]
    ShapeMismatch,
    #[error("operands of + both have an entry at the same position")]
    PlusCollision,
    #[error("row {0} is not a valid index of this matrix")]
    RowOutOfRange(CompositeIndex),
    #[error("semaphore matrix contains the non-synchronization label `{0}`")]
    NonSyncSemaphoreLabel(String),
    #[error("matrix of order {0} is too large to enumerate")]
    TooLarge(BigUint),
}

/// Entry value of a composed matrix: a word over labels.
///
/// A single label is an atom. The empty word is the unit entry of an
/// identity matrix. The generic Kronecker product concatenates words, so
/// products of atoms stay formal and associative.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Term(SmallVec<[Label; 1]>);

impl Term {
    pub fn unit() -> Self {
        Term(SmallVec::new())
    }

    pub fn atom(label: Label) -> Self {
        let mut word = SmallVec::new();
        word.push(label);
        Term(word)
    }

    pub fn is_unit(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_atom(&self) -> Option<&Label> {
        match self.0.as_slice() {
            [l] => Some(l),
            _ => None,
        }
    }

    pub fn factors(&self) -> &[Label] {
        &self.0
    }

    pub fn times(&self, other: &Term) -> Term {
        let mut word = self.0.clone();
        word.extend(other.0.iter().cloned());
        Term(word)
    }

    /// Collapses the word with the synchronization rule (`p·p = p`,
    /// `v·v = v`). Returns `None` when the product is zero or not a
    /// semaphore label.
    pub fn sync_collapse(&self) -> Option<Label> {
        let (first, rest) = self.0.split_first()?;
        rest.iter()
            .try_fold(first.clone(), |acc, l| sync_product(&acc, l))
            .filter(Label::is_sync)
    }
}

impl From<Label> for Term {
    fn from(label: Label) -> Self {
        Term::atom(label)
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("1");
        }
        for (k, l) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str("·")?;
            }
            write!(f, "{l}")?;
        }
        Ok(())
    }
}

/// Mixed-radix row/column index of a composed matrix: one digit per leaf
/// operand, most significant first. The radices live with the matrix.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct CompositeIndex(pub SmallVec<[u32; 8]>);

impl CompositeIndex {
    pub fn zero(arity: usize) -> Self {
        CompositeIndex(std::iter::repeat_n(0, arity).collect())
    }

    pub fn from_digits(digits: &[u32]) -> Self {
        CompositeIndex(digits.iter().copied().collect())
    }

    pub fn digits(&self) -> &[u32] {
        &self.0
    }

    pub fn arity(&self) -> usize {
        self.0.len()
    }

    /// Flat index `(((d0·r1 + d1)·r2 + d2)…)`.
    pub fn linear(&self, radices: &[usize]) -> BigUint {
        debug_assert_eq!(radices.len(), self.0.len());
        self.0
            .iter()
            .zip(radices)
            .fold(BigUint::default(), |acc, (&d, &r)| acc * r + d)
    }

    /// Flat index as `u64`, if it fits.
    pub fn linear_u64(&self, radices: &[usize]) -> Option<u64> {
        self.0.iter().zip(radices).try_fold(0u64, |acc, (&d, &r)| {
            acc.checked_mul(r as u64)?.checked_add(d as u64)
        })
    }

    pub fn from_linear(mut index: u64, radices: &[usize]) -> Self {
        let mut digits: SmallVec<[u32; 8]> = SmallVec::from_elem(0, radices.len());
        for (slot, &r) in digits.iter_mut().zip(radices).rev() {
            *slot = (index % r as u64) as u32;
            index /= r as u64;
        }
        CompositeIndex(digits)
    }
}

impl fmt::Display for CompositeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (k, d) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str(".")?;
            }
            write!(f, "{d}")?;
        }
        f.write_str(")")
    }
}
