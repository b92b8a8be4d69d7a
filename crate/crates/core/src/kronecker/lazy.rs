use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use num_bigint::BigUint;
use num_traits::ToPrimitive;
use smallvec::SmallVec;

use crate::labels::{Label, LabelPartition, LabelSet};

use super::{AlgebraError, CompositeIndex, SparseMatrix, Term};

type Digits = SmallVec<[u32; 8]>;
type Row = Vec<(Digits, Term)>;

enum Node {
    Leaf(SparseMatrix),
    Identity,
    KronProduct(LazyMatrix, LazyMatrix),
    KronSum(LazyMatrix, LazyMatrix),
    SelectiveKron(LazyMatrix, LazyMatrix, Arc<LabelSet>),
    Filtered(LazyMatrix, Arc<LabelSet>),
    /// `inner ⊗ I`; the identity radices are the trailing ones of the node.
    IdentityTensorRight(LazyMatrix),
    Plus(LazyMatrix, LazyMatrix),
    Probe(LazyMatrix, RowProbe),
}

/// Immutable expression tree over label matrices.
///
/// Only the operands and the operation are stored; `successors` walks the
/// tree for one row at a time. Clones share the tree.
#[derive(Clone)]
pub struct LazyMatrix {
    node: Arc<Node>,
    radices: Arc<[usize]>,
    order: Arc<BigUint>,
}

impl std::fmt::Debug for LazyMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LazyMatrix")
            .field("kind", &self.kind())
            .field("radices", &self.radices)
            .finish()
    }
}

/// Records every row evaluated through a probed matrix.
#[derive(Clone, Default)]
pub struct RowProbe {
    inner: Arc<ProbeState>,
}

#[derive(Default)]
struct ProbeState {
    calls: AtomicUsize,
    rows: Mutex<Vec<CompositeIndex>>,
}

impl RowProbe {
    pub fn calls(&self) -> usize {
        self.inner.calls.load(Ordering::SeqCst)
    }

    pub fn rows(&self) -> Vec<CompositeIndex> {
        self.inner.rows.lock().expect("probe lock poisoned").clone()
    }

    fn record(&self, row: &[u32]) {
        self.inner.calls.fetch_add(1, Ordering::SeqCst);
        self.inner
            .rows
            .lock()
            .expect("probe lock poisoned")
            .push(CompositeIndex::from_digits(row));
    }
}

impl LazyMatrix {
    fn build(node: Node, radices: Vec<usize>) -> Self {
        let order = radices
            .iter()
            .fold(BigUint::from(1u32), |acc, &r| acc * r);
        LazyMatrix {
            node: Arc::new(node),
            radices: radices.into(),
            order: Arc::new(order),
        }
    }

    pub fn leaf(matrix: SparseMatrix) -> Self {
        let order = matrix.order();
        Self::build(Node::Leaf(matrix), vec![order])
    }

    /// Order of the matrix, the product of all leaf orders.
    pub fn order(&self) -> &BigUint {
        &self.order
    }

    /// Orders of the leaves, i.e. the radices of this matrix's indices.
    pub fn radices(&self) -> &[usize] {
        &self.radices
    }

    pub fn arity(&self) -> usize {
        self.radices.len()
    }

    pub fn entry_index(&self) -> CompositeIndex {
        CompositeIndex::zero(self.arity())
    }

    pub fn kind(&self) -> &'static str {
        match *self.node {
            Node::Leaf(_) => "leaf",
            Node::Identity => "identity",
            Node::KronProduct(..) => "kron-product",
            Node::KronSum(..) => "kron-sum",
            Node::SelectiveKron(..) => "selective-kron",
            Node::Filtered(..) => "filtered",
            Node::IdentityTensorRight(..) => "identity-tensor-right",
            Node::Plus(..) => "plus",
            Node::Probe(..) => "probe",
        }
    }

    /// Wraps the matrix so every evaluated row is recorded.
    pub fn probed(&self) -> (LazyMatrix, RowProbe) {
        let probe = RowProbe::default();
        let m = Self::build(
            Node::Probe(self.clone(), probe.clone()),
            self.radices.to_vec(),
        );
        (m, probe)
    }

    /// Labels stored in the leaves of this tree.
    pub fn leaf_labels(&self) -> Vec<Label> {
        let mut out = Vec::new();
        self.collect_leaf_labels(&mut out);
        out
    }

    fn collect_leaf_labels(&self, out: &mut Vec<Label>) {
        match &*self.node {
            Node::Leaf(m) => out.extend(m.labels().cloned()),
            Node::Identity => {}
            Node::KronProduct(l, r)
            | Node::KronSum(l, r)
            | Node::SelectiveKron(l, r, _)
            | Node::Plus(l, r) => {
                l.collect_leaf_labels(out);
                r.collect_leaf_labels(out);
            }
            Node::Filtered(inner, _)
            | Node::IdentityTensorRight(inner)
            | Node::Probe(inner, _) => inner.collect_leaf_labels(out),
        }
    }

    /// Non-zero entries of `row`, sorted by destination then label.
    pub fn successors(&self, row: &CompositeIndex) -> Result<Vec<(CompositeIndex, Term)>, AlgebraError> {
        let digits = row.digits();
        let valid = digits.len() == self.arity()
            && digits.iter().zip(self.radices.iter()).all(|(&d, &r)| (d as usize) < r);
        if !valid {
            return Err(AlgebraError::RowOutOfRange(row.clone()));
        }
        let mut out: Vec<_> = self
            .eval(digits)?
            .into_iter()
            .map(|(d, t)| (CompositeIndex(d), t))
            .collect();
        out.sort();
        Ok(out)
    }

    fn eval(&self, row: &[u32]) -> Result<Row, AlgebraError> {
        match &*self.node {
            Node::Leaf(m) => Ok(m
                .row(row[0] as usize)
                .iter()
                .map(|(_, c, l)| (smallvec::smallvec![*c as u32], Term::atom(l.clone())))
                .collect()),
            Node::Identity => Ok(vec![(Digits::from_slice(row), Term::unit())]),
            Node::KronProduct(l, r) => {
                let (lrow, rrow) = row.split_at(l.arity());
                let left = l.eval(lrow)?;
                if left.is_empty() {
                    return Ok(Vec::new());
                }
                let right = r.eval(rrow)?;
                let mut out = Vec::with_capacity(left.len() * right.len());
                for (ld, lt) in &left {
                    for (rd, rt) in &right {
                        out.push((concat(ld, rd), lt.times(rt)));
                    }
                }
                Ok(out)
            }
            Node::KronSum(l, r) => {
                let (lrow, rrow) = row.split_at(l.arity());
                let mut out: Row = l
                    .eval(lrow)?
                    .into_iter()
                    .map(|(d, t)| (concat(&d, rrow), t))
                    .collect();
                out.extend(
                    r.eval(rrow)?
                        .into_iter()
                        .map(|(d, t)| (concat(lrow, &d), t)),
                );
                Ok(out)
            }
            Node::SelectiveKron(l, r, set) => {
                let (lrow, rrow) = row.split_at(l.arity());
                let left: Row = l
                    .eval(lrow)?
                    .into_iter()
                    .filter(|(_, t)| t.as_atom().is_some_and(|a| set.contains(a)))
                    .collect();
                if left.is_empty() {
                    return Ok(Vec::new());
                }
                let right = r.eval(rrow)?;
                let mut out = Vec::new();
                for (ld, lt) in &left {
                    for (rd, rt) in &right {
                        if lt == rt {
                            out.push((concat(ld, rd), lt.clone()));
                        }
                    }
                }
                Ok(out)
            }
            Node::Filtered(inner, set) => Ok(inner
                .eval(row)?
                .into_iter()
                .filter(|(_, t)| t.as_atom().is_some_and(|a| set.contains(a)))
                .collect()),
            Node::IdentityTensorRight(inner) => {
                let (irow, rest) = row.split_at(inner.arity());
                Ok(inner
                    .eval(irow)?
                    .into_iter()
                    .map(|(d, t)| (concat(&d, rest), t))
                    .collect())
            }
            Node::Plus(l, r) => {
                let mut out = l.eval(row)?;
                let right = r.eval(row)?;
                if right
                    .iter()
                    .any(|(rd, _)| out.iter().any(|(ld, _)| ld == rd))
                {
                    return Err(AlgebraError::PlusCollision);
                }
                out.extend(right);
                Ok(out)
            }
            Node::Probe(inner, probe) => {
                probe.record(row);
                inner.eval(row)
            }
        }
    }

    /// Enumerates every entry with flat `u64` indices. Only meant for small
    /// matrices (tests, oracles); refuses orders above `max_order`.
    pub fn materialize(&self, max_order: u64) -> Result<Vec<(u64, u64, Term)>, AlgebraError> {
        let order = self
            .order
            .to_u64()
            .filter(|&o| o <= max_order)
            .ok_or_else(|| AlgebraError::TooLarge((*self.order).clone()))?;
        let mut out = Vec::new();
        for row in 0..order {
            let idx = CompositeIndex::from_linear(row, &self.radices);
            for (dst, term) in self.successors(&idx)? {
                let col = dst
                    .linear_u64(&self.radices)
                    .expect("column fits when the order does");
                out.push((row, col, term));
            }
        }
        out.sort();
        Ok(out)
    }

    /// Number of stored entries (with multiplicity), by enumeration.
    pub fn count_entries(&self, max_order: u64) -> Result<usize, AlgebraError> {
        Ok(self.materialize(max_order)?.len())
    }
}

fn concat(a: &[u32], b: &[u32]) -> Digits {
    let mut d = Digits::with_capacity(a.len() + b.len());
    d.extend_from_slice(a);
    d.extend_from_slice(b);
    d
}

fn joined(a: &LazyMatrix, b: &LazyMatrix) -> Vec<usize> {
    a.radices.iter().chain(b.radices.iter()).copied().collect()
}

/// Identity matrix `I_n` whose diagonal holds the unit entry.
pub fn identity(n: usize) -> Result<LazyMatrix, AlgebraError> {
    if n == 0 {
        return Err(AlgebraError::EmptyMatrix);
    }
    Ok(LazyMatrix::build(Node::Identity, vec![n]))
}

/// `A ⊗ B`: joint steps, labels multiplied formally.
pub fn kron_product(a: &LazyMatrix, b: &LazyMatrix) -> LazyMatrix {
    LazyMatrix::build(Node::KronProduct(a.clone(), b.clone()), joined(a, b))
}

/// `A ⊕ B = A ⊗ I + I ⊗ B`: all interleavings of the two operands.
pub fn kron_sum(a: &LazyMatrix, b: &LazyMatrix) -> LazyMatrix {
    LazyMatrix::build(Node::KronSum(a.clone(), b.clone()), joined(a, b))
}

/// `A ⊘_L B`: entry `l` where both operands carry the same `l ∈ L`.
pub fn selective_kron(a: &LazyMatrix, b: &LazyMatrix, labels: &LabelSet) -> LazyMatrix {
    LazyMatrix::build(
        Node::SelectiveKron(a.clone(), b.clone(), Arc::new(labels.clone())),
        joined(a, b),
    )
}

/// `M_L`: the entries of `M` whose label is in `L`.
pub fn filtered(m: &LazyMatrix, labels: &LabelSet) -> LazyMatrix {
    LazyMatrix::build(
        Node::Filtered(m.clone(), Arc::new(labels.clone())),
        m.radices.to_vec(),
    )
}

/// `M ⊗ I` with the identity spanning `radices` (their product is its order).
pub fn identity_tensor_right(m: &LazyMatrix, radices: &[usize]) -> LazyMatrix {
    let mut all = m.radices.to_vec();
    all.extend_from_slice(radices);
    LazyMatrix::build(Node::IdentityTensorRight(m.clone()), all)
}

/// Entry-wise sum of two matrices with disjoint supports. Shapes are checked
/// here; a shared position is reported when the row is evaluated.
pub fn plus(a: &LazyMatrix, b: &LazyMatrix) -> Result<LazyMatrix, AlgebraError> {
    if a.radices != b.radices {
        return Err(AlgebraError::ShapeMismatch);
    }
    Ok(LazyMatrix::build(
        Node::Plus(a.clone(), b.clone()),
        a.radices.to_vec(),
    ))
}

fn kfold(
    list: &[LazyMatrix],
    op: fn(&LazyMatrix, &LazyMatrix) -> LazyMatrix,
) -> Result<LazyMatrix, AlgebraError> {
    let (first, rest) = list.split_first().ok_or(AlgebraError::EmptyFold)?;
    Ok(rest.iter().fold(first.clone(), |acc, m| op(&acc, m)))
}

/// Left-associated `M1 ⊕ M2 ⊕ … ⊕ Mk`.
pub fn kfold_sum(list: &[LazyMatrix]) -> Result<LazyMatrix, AlgebraError> {
    kfold(list, kron_sum)
}

/// Left-associated `M1 ⊗ M2 ⊗ … ⊗ Mk`.
pub fn kfold_product(list: &[LazyMatrix]) -> Result<LazyMatrix, AlgebraError> {
    kfold(list, kron_product)
}

/// The program matrix `T ⊙ S = T ⊘_{L_SP} S + T_{L_V} ⊗ I_{o(S)}`.
///
/// `threads` interleaves the thread graphs, `semaphores` the semaphore
/// graphs; the latter may only carry P/V labels.
pub fn merry(
    threads: &LazyMatrix,
    semaphores: &LazyMatrix,
    partition: &LabelPartition,
) -> Result<LazyMatrix, AlgebraError> {
    if let Some(l) = semaphores.leaf_labels().into_iter().find(|l| !l.is_sync()) {
        return Err(AlgebraError::NonSyncSemaphoreLabel(l.to_string()));
    }
    let sync = selective_kron(threads, semaphores, partition.sync_labels());
    let local = identity_tensor_right(
        &filtered(threads, &partition.variable_labels()),
        semaphores.radices(),
    );
    plus(&sync, &local)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(order: usize, entries: &[(usize, usize, Label)]) -> LazyMatrix {
        LazyMatrix::leaf(SparseMatrix::from_triples(order, entries.to_vec()).unwrap())
    }

    fn atoms(m: &LazyMatrix) -> Vec<(u64, u64, String)> {
        m.materialize(1 << 16)
            .unwrap()
            .into_iter()
            .map(|(r, c, t)| (r, c, t.to_string()))
            .collect()
    }

    fn labelled(name: &str) -> Label {
        Label::sv(name)
    }

    // A 2×2 and a 3×3 operand.
    fn ex_a() -> LazyMatrix {
        leaf(
            2,
            &[
                (0, 0, labelled("a11")),
                (0, 1, labelled("a12")),
                (1, 0, labelled("a21")),
                (1, 1, labelled("a22")),
            ],
        )
    }

    fn ex_b() -> LazyMatrix {
        let mut entries = Vec::new();
        for i in 0..3 {
            for j in 0..3 {
                entries.push((i, j, labelled(&format!("b{}{}", i + 1, j + 1))));
            }
        }
        leaf(3, &entries)
    }

    fn entry(m: &LazyMatrix, row: u64, col: u64) -> Vec<String> {
        atoms(m)
            .into_iter()
            .filter(|&(r, c, _)| r == row && c == col)
            .map(|(_, _, t)| t)
            .collect()
    }

    #[test]
    fn kron_product_block_structure() {
        let c = kron_product(&ex_a(), &ex_b());
        assert_eq!(*c.order(), BigUint::from(6u32));
        assert_eq!(entry(&c, 0, 0), vec!["sv:a11·sv:b11"]);
        assert_eq!(entry(&c, 0, 3), vec!["sv:a12·sv:b11"]);
        assert_eq!(entry(&c, 5, 2), vec!["sv:a21·sv:b33"]);
        assert_eq!(atoms(&c).len(), 36);
    }

    #[test]
    fn kron_sum_block_structure() {
        let a = ex_a();
        let b = ex_b();
        let s = kron_sum(&a, &b);
        assert_eq!(entry(&s, 0, 3), vec!["sv:a12"]);
        assert_eq!(entry(&s, 0, 1), vec!["sv:b12"]);
        // Diagonal positions carry a_ii + b_pp as two entries.
        assert_eq!(entry(&s, 0, 0).len(), 2);
        assert_eq!(entry(&s, 3, 1), Vec::<String>::new());
    }

    #[test]
    fn identity_is_neutral_for_product() {
        let a = ex_a();
        let i1 = identity(1).unwrap();
        assert_eq!(atoms(&kron_product(&a, &i1)), atoms(&a));
        assert_eq!(atoms(&kron_product(&i1, &a)), atoms(&a));
    }

    #[test]
    fn zero_is_neutral_for_sum() {
        let a = ex_a();
        let z1 = leaf(1, &[]);
        assert_eq!(atoms(&kron_sum(&a, &z1)), atoms(&a));
    }

    #[test]
    fn selective_kron_single_entry() {
        let a = leaf(2, &[(0, 1, Label::p("s1"))]);
        let sync: LabelSet = [Label::p("s1")].into_iter().collect();
        let m = selective_kron(&a, &a, &sync);
        assert_eq!(atoms(&m), vec![(0, 3, "p(s1)".to_string())]);
        assert!(atoms(&selective_kron(&a, &a, &LabelSet::new())).is_empty());
    }

    #[test]
    fn filtered_keeps_only_members() {
        let m = leaf(
            4,
            &[(0, 1, Label::p("s1")), (1, 2, labelled("a")), (2, 3, Label::v("s1"))],
        );
        let sync: LabelSet = [Label::p("s1"), Label::v("s1")].into_iter().collect();
        assert_eq!(
            atoms(&filtered(&m, &sync)),
            vec![(0, 1, "p(s1)".to_string()), (2, 3, "v(s1)".to_string())]
        );
        let all = LabelPartition::from_labels(&m.leaf_labels()).all_labels();
        assert_eq!(atoms(&filtered(&m, &all)), atoms(&m));
        assert!(atoms(&filtered(&m, &LabelSet::new())).is_empty());
    }

    #[test]
    fn plus_rejects_shape_mismatch_and_collisions() {
        let a = leaf(2, &[(0, 1, labelled("a"))]);
        let b = leaf(3, &[]);
        assert_eq!(plus(&a, &b).unwrap_err(), AlgebraError::ShapeMismatch);
        let c = leaf(2, &[(0, 1, labelled("c"))]);
        let sum = plus(&a, &c).unwrap();
        assert_eq!(
            sum.successors(&CompositeIndex::zero(1)).unwrap_err(),
            AlgebraError::PlusCollision
        );
    }

    #[test]
    fn merry_rejects_non_sync_semaphores() {
        let t = leaf(2, &[(0, 1, labelled("a"))]);
        let s = leaf(2, &[(0, 1, labelled("a"))]);
        let partition = LabelPartition::from_labels(&[labelled("a")]);
        assert!(matches!(
            merry(&t, &s, &partition),
            Err(AlgebraError::NonSyncSemaphoreLabel(_))
        ));
    }

    #[test]
    fn successors_validate_rows() {
        let m = kron_sum(&ex_a(), &ex_b());
        assert!(m.successors(&CompositeIndex::from_digits(&[2, 0])).is_err());
        assert!(m.successors(&CompositeIndex::from_digits(&[0])).is_err());
        assert!(m.successors(&CompositeIndex::from_digits(&[1, 2])).is_ok());
    }

    #[test]
    fn kfold_rejects_empty_list() {
        assert_eq!(kfold_sum(&[]).unwrap_err(), AlgebraError::EmptyFold);
        assert_eq!(kfold_product(&[]).unwrap_err(), AlgebraError::EmptyFold);
        let a = ex_a();
        assert_eq!(atoms(&kfold_sum(std::slice::from_ref(&a)).unwrap()), atoms(&a));
        let cube = kfold_sum(&[a.clone(), a.clone(), a]).unwrap();
        assert_eq!(*cube.order(), BigUint::from(8u32));
    }

    #[test]
    fn probe_counts_rows() {
        let (m, probe) = ex_a().probed();
        m.successors(&CompositeIndex::zero(1)).unwrap();
        m.successors(&CompositeIndex::from_digits(&[1])).unwrap();
        assert_eq!(probe.calls(), 2);
        assert_eq!(probe.rows()[1], CompositeIndex::from_digits(&[1]));
    }
}
