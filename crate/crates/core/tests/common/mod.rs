#![allow(dead_code)]

use std::collections::BTreeSet;

use cpgkit::kronecker::{LazyMatrix, SparseMatrix, Term};
use cpgkit::labels::Label;
use rand::seq::SliceRandom;
use rand::Rng;

pub fn pool() -> Vec<Label> {
    vec![
        Label::nsv("a"),
        Label::nsv("b"),
        Label::sv("x"),
        Label::p("s1"),
        Label::v("s1"),
        Label::p("s2"),
        Label::v("s2"),
    ]
}

pub fn sync_pool() -> Vec<Label> {
    pool().into_iter().filter(Label::is_sync).collect()
}

/// Random matrix of order `n`, at most `per_row` entries per row.
pub fn random_matrix<R: Rng>(rng: &mut R, n: usize, labels: &[Label], per_row: usize, zero_diagonal: bool) -> SparseMatrix {
    let mut entries = Vec::new();
    for i in 0..n {
        let mut cols: Vec<usize> = (0..n).filter(|&j| !(zero_diagonal && i == j)).collect();
        cols.shuffle(rng);
        let k = rng.gen_range(0..=per_row.min(cols.len()));
        for &j in &cols[..k] {
            entries.push((i, j, labels.choose(rng).expect("labels").clone()));
        }
    }
    SparseMatrix::from_triples(n, entries).expect("distinct positions")
}

/// Two matrices with disjoint supports, and their sum.
pub fn disjoint_pair<R: Rng>(rng: &mut R, n: usize, zero_diagonal: bool) -> (SparseMatrix, SparseMatrix, SparseMatrix) {
    let sum = random_matrix(rng, n, &pool(), n, zero_diagonal);
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for e in sum.entries() {
        if rng.gen_bool(0.5) {
            a.push(e.clone());
        } else {
            b.push(e.clone());
        }
    }
    (
        SparseMatrix::from_triples(n, a).unwrap(),
        SparseMatrix::from_triples(n, b).unwrap(),
        sum,
    )
}

/// Sync-only p-v-symmetric matrix of order `n`.
pub fn random_symmetric<R: Rng>(rng: &mut R, n: usize) -> SparseMatrix {
    let mut used = BTreeSet::new();
    let mut entries = Vec::new();
    for _ in 0..rng.gen_range(0..=n) {
        let (i, j) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if i == j || used.contains(&(i, j)) || used.contains(&(j, i)) {
            continue;
        }
        used.insert((i, j));
        let s = format!("s{}", rng.gen_range(1..=2));
        entries.push((i, j, Label::p(&s)));
        entries.push((j, i, Label::v(&s)));
    }
    SparseMatrix::from_triples(n, entries).unwrap()
}

pub fn leaf(m: &SparseMatrix) -> LazyMatrix {
    LazyMatrix::leaf(m.clone())
}

pub fn entries(m: &LazyMatrix) -> Vec<(u64, u64, Term)> {
    m.materialize(1 << 16).expect("small matrix")
}

/// Multiset union of materialized entries, sorted.
pub fn union(parts: &[&LazyMatrix]) -> Vec<(u64, u64, Term)> {
    let mut all: Vec<_> = parts.iter().flat_map(|m| entries(m)).collect();
    all.sort();
    all
}
