//! p-v-symmetry and a structural deadlock-freedom certificate.
//!
//! A matrix is p-v-symmetric when every `p_r` entry at `(i, j)` is matched
//! by a `v_r` entry at `(j, i)` and vice versa. Labels that are not
//! semaphore calls are ignored.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::kronecker::{kfold_sum, AlgebraError, LazyMatrix, SparseMatrix, Term};
use crate::labels::{Label, LabelClass};
use crate::model::{
    semaphore_matrix, BasicBlock, Cfg, Edge, ModelError, SemaphoreSpec, Statement, SystemModel,
};

/// `p`: `(i, j, r)` for every `m[i][j] = p_r`; `v`: `(j, i, r)` for every
/// `m[i][j] = v_r`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PvSets {
    pub p: BTreeSet<(u64, u64, String)>,
    pub v: BTreeSet<(u64, u64, String)>,
}

impl PvSets {
    fn scan(entries: impl IntoIterator<Item = (u64, u64, Option<Label>)>) -> Self {
        let mut sets = PvSets::default();
        for (i, j, label) in entries {
            match label.as_ref().map(Label::class) {
                Some(LabelClass::P(r)) => {
                    sets.p.insert((i, j, r.to_string()));
                }
                Some(LabelClass::V(r)) => {
                    sets.v.insert((j, i, r.to_string()));
                }
                _ => {}
            }
        }
        sets
    }

    pub fn is_symmetric(&self) -> bool {
        self.p == self.v
    }
}

pub fn pv_sets(m: &SparseMatrix) -> PvSets {
    PvSets::scan(
        m.entries()
            .iter()
            .map(|(i, j, l)| (*i as u64, *j as u64, Some(l.clone()))),
    )
}

/// Sets of a composed matrix. Product words collapse with `p·p = p` and
/// `v·v = v`; any other word is not a semaphore call.
pub fn pv_sets_lazy(m: &LazyMatrix, max_order: u64) -> Result<PvSets, AlgebraError> {
    Ok(PvSets::scan(
        m.materialize(max_order)?
            .into_iter()
            .map(|(i, j, t): (u64, u64, Term)| (i, j, t.sync_collapse())),
    ))
}

pub fn is_pv_symmetric(m: &SparseMatrix) -> bool {
    pv_sets(m).is_symmetric()
}

pub fn is_pv_symmetric_lazy(m: &LazyMatrix, max_order: u64) -> Result<bool, AlgebraError> {
    Ok(pv_sets_lazy(m, max_order)?.is_symmetric())
}

/// Rows and columns without any entry.
pub fn zero_lines(m: &SparseMatrix) -> (BTreeSet<usize>, BTreeSet<usize>) {
    let mut rows: BTreeSet<usize> = (0..m.order()).collect();
    let mut cols = rows.clone();
    for (i, j, _) in m.entries() {
        rows.remove(i);
        cols.remove(j);
    }
    (rows, cols)
}

/// Outcome of [`certify_deadlock_free`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Certificate {
    pub certified: bool,
    pub reason: String,
    /// Per thread (after contraction) and per semaphore.
    pub per_component_symmetry: BTreeMap<String, bool>,
}

/// A thread with its always-enabled straight-line steps removed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Contracted {
    pub entry: usize,
    pub edges: BTreeSet<(usize, usize, Label)>,
}

impl Contracted {
    fn pv(&self) -> PvSets {
        PvSets::scan(
            self.edges
                .iter()
                .map(|(i, j, l)| (*i as u64, *j as u64, Some(l.clone()))),
        )
    }

    fn has_variable_edges(&self) -> bool {
        self.edges.iter().any(|(_, _, l)| !l.is_sync())
    }
}

/// Repeatedly merges the source of a non-sync edge into its destination
/// when that edge is the only way out of its source.
pub fn contract(cfg: &Cfg, labels: impl Fn(&Edge) -> Label) -> Contracted {
    let mut edges: Vec<(usize, usize, Label)> =
        cfg.edges.iter().map(|e| (e.src, e.dst, labels(e))).collect();
    let mut entry = cfg.entry();
    loop {
        let pick = edges.iter().position(|(u, w, l)| {
            !l.is_sync() && u != w && edges.iter().filter(|(s, _, _)| s == u).count() == 1
        });
        let Some(k) = pick else { break };
        let (u, w, _) = edges.swap_remove(k);
        for e in &mut edges {
            if e.1 == u {
                e.1 = w;
            }
        }
        if entry == u {
            entry = w;
        }
    }
    Contracted {
        entry,
        edges: edges.into_iter().collect(),
    }
}

/// Tries to prove that no reachable state of the system is a deadlock,
/// for any number of replicas of its threads.
///
/// Non-sync edges that are the only exit of their node are always enabled
/// and are contracted away first. The certificate is issued when no other
/// non-sync edge remains, every contracted thread and every semaphore is
/// p-v-symmetric, and the entry is either final or can take a `p`. A system
/// without semaphore calls is certified outright. Anything else is
/// inconclusive; this never claims a deadlock.
pub fn certify_deadlock_free(system: &SystemModel) -> Certificate {
    let mut per = BTreeMap::new();
    let has_sync = system
        .threads
        .iter()
        .any(|t| t.matrix.labels().any(Label::is_sync));
    if !has_sync {
        for t in &system.threads {
            per.insert(t.name.clone(), true);
        }
        for s in &system.semaphores {
            per.insert(s.spec.id.clone(), is_pv_symmetric(&s.matrix));
        }
        return Certificate {
            certified: true,
            reason: "no semaphore operations: every edge is always enabled".into(),
            per_component_symmetry: per,
        };
    }

    let mut problems = Vec::new();
    let mut can_start = false;
    let mut all_trivial = true;
    for t in &system.threads {
        let c = contract(&t.rcfg, |e| e.block.label());
        let symmetric = c.pv().is_symmetric();
        per.insert(t.name.clone(), symmetric);
        if c.has_variable_edges() {
            problems.push(format!("thread `{}` branches on non-semaphore edges", t.name));
        }
        if !symmetric {
            problems.push(format!("thread `{}` is not p-v-symmetric", t.name));
        }
        if !c.edges.is_empty() {
            all_trivial = false;
        }
        if c.edges.iter().any(|(s, _, l)| *s == c.entry && l.is_p()) {
            can_start = true;
        }
    }
    for s in &system.semaphores {
        let symmetric = is_pv_symmetric(&s.matrix);
        per.insert(s.spec.id.clone(), symmetric);
        if !symmetric {
            problems.push(format!("semaphore `{}` is not p-v-symmetric", s.spec.id));
        }
    }
    if !all_trivial && !can_start {
        problems.push("no thread can leave the entry with a p operation".into());
    }

    if problems.is_empty() {
        Certificate {
            certified: true,
            reason: "all components are p-v-symmetric after contracting straight-line steps"
                .into(),
            per_component_symmetry: per,
        }
    } else {
        Certificate {
            certified: false,
            reason: format!("inconclusive: {}", problems.join("; ")),
            per_component_symmetry: per,
        }
    }
}

fn sem_name(r: usize) -> String {
    format!("s{r}")
}

/// Star of order `k + 1`: `p_r` at `(0, r)` and `v_r` at `(r, 0)`.
pub fn make_mk(k: usize) -> SparseMatrix {
    assert!(k >= 1);
    let mut entries = Vec::with_capacity(2 * k);
    for r in 1..=k {
        entries.push((0, r, Label::p(&sem_name(r))));
        entries.push((r, 0, Label::v(&sem_name(r))));
    }
    SparseMatrix::from_triples(k + 1, entries).expect("star entries are distinct")
}

/// Kronecker sum of `r` binary semaphores `s1 … sr`.
pub fn make_sem_chain(r: usize) -> LazyMatrix {
    assert!(r >= 1);
    let sems: Vec<LazyMatrix> = (1..=r)
        .map(|i| {
            let spec = SemaphoreSpec {
                id: sem_name(i),
                capacity: 1,
            };
            LazyMatrix::leaf(semaphore_matrix(&spec).expect("binary semaphore"))
        })
        .collect();
    kfold_sum(&sems).expect("non-empty list")
}

/// `n` threads shaped like [`make_mk`] over `k` binary semaphores.
pub fn mk_system(k: usize, n: usize) -> Result<SystemModel, ModelError> {
    let edges: Vec<Edge> = (1..=k)
        .flat_map(|r| {
            let s = sem_name(r);
            [
                Edge {
                    src: 0,
                    dst: r,
                    block: BasicBlock::new(vec![Statement::p(&s)]),
                },
                Edge {
                    src: r,
                    dst: 0,
                    block: BasicBlock::new(vec![Statement::v(&s)]),
                },
            ]
        })
        .collect();
    let cfg = Cfg::new(k + 1, edges);
    let threads = (1..=n).map(|t| (format!("M{t}"), cfg.clone())).collect();
    let sems = (1..=k)
        .map(|r| SemaphoreSpec {
            id: sem_name(r),
            capacity: 1,
        })
        .collect();
    SystemModel::new(threads, sems)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpg::{build_system_cpg, detect_deadlocks, BuildOptions};
    use crate::kronecker::{kron_product, kron_sum, merry};
    use crate::labels::LabelPartition;
    use crate::model::parse_system;
    use proptest::prelude::*;

    fn sparse(order: usize, entries: &[(usize, usize, Label)]) -> SparseMatrix {
        SparseMatrix::from_triples(order, entries.to_vec()).unwrap()
    }

    #[test]
    fn binary_semaphore_sets() {
        let s = sparse(2, &[(0, 1, Label::p("s1")), (1, 0, Label::v("s1"))]);
        let sets = pv_sets(&s);
        let expected: BTreeSet<_> = [(0, 1, "s1".to_string())].into();
        assert_eq!(sets.p, expected);
        assert_eq!(sets.v, expected);
    }

    #[test]
    fn unmatched_p_is_asymmetric() {
        assert!(!is_pv_symmetric(&sparse(2, &[(0, 1, Label::p("s"))])));
        let path = sparse(3, &[(0, 1, Label::p("s1")), (1, 2, Label::p("s2"))]);
        assert!(!is_pv_symmetric(&path));
    }

    #[test]
    fn counting_semaphore_is_symmetric() {
        for capacity in 1..5 {
            let spec = SemaphoreSpec {
                id: "c".into(),
                capacity,
            };
            assert!(is_pv_symmetric(&semaphore_matrix(&spec).unwrap()));
        }
    }

    #[test]
    fn variable_labels_are_ignored() {
        let m = sparse(
            3,
            &[
                (0, 1, Label::p("s")),
                (1, 0, Label::v("s")),
                (1, 2, Label::nsv("a")),
            ],
        );
        assert!(is_pv_symmetric(&m));
    }

    #[test]
    fn star_generator() {
        assert_eq!(
            make_mk(2).to_dense_names(),
            [
                ["0", "p(s1)", "p(s2)"],
                ["v(s1)", "0", "0"],
                ["v(s2)", "0", "0"]
            ]
        );
        assert_eq!(make_mk(1).to_dense_names(), [["0", "p(s1)"], ["v(s1)", "0"]]);
        assert!(is_pv_symmetric(&make_mk(4)));
        assert!(is_pv_symmetric_lazy(&make_sem_chain(3), 64).unwrap());
    }

    #[test]
    fn star_systems_are_deadlock_free() {
        for n in 1..=3 {
            for k in 1..=2 {
                let sys = mk_system(k, n).unwrap();
                let cpg = build_system_cpg(&sys, &BuildOptions::default()).unwrap();
                assert!(detect_deadlocks(&cpg).is_deadlock_free(), "n={n} k={k}");
                assert!(certify_deadlock_free(&sys).certified, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn client_loop_is_certified() {
        let sys = parse_system(
            "semaphore s\nshared g\n\
             thread c1\n edge 0 -> 1 : p(s)\n edge 1 -> 2 : a writes g\n edge 2 -> 0 : v(s)\n\
             thread c2\n edge 0 -> 1 : p(s)\n edge 1 -> 2 : a writes g\n edge 2 -> 0 : v(s)\n",
        )
        .unwrap();
        let cert = certify_deadlock_free(&sys);
        assert!(cert.certified, "{}", cert.reason);
        assert_eq!(cert.per_component_symmetry.len(), 3);
        let json = serde_json::to_value(&cert).unwrap();
        assert_eq!(json["certified"], true);
        assert!(json["per_component_symmetry"]["s"].as_bool().unwrap());
    }

    #[test]
    fn crossed_locks_are_inconclusive() {
        let sys = parse_system(
            "semaphore s1\nsemaphore s2\n\
             thread a\n edge 0 -> 1 : p(s1)\n edge 1 -> 2 : p(s2)\n edge 2 -> 3 : v(s2)\n edge 3 -> 4 : v(s1)\n\
             thread b\n edge 0 -> 1 : p(s2)\n edge 1 -> 2 : p(s1)\n edge 2 -> 3 : v(s1)\n edge 3 -> 4 : v(s2)\n",
        )
        .unwrap();
        let cert = certify_deadlock_free(&sys);
        assert!(!cert.certified);
        assert!(cert.reason.starts_with("inconclusive"));
        assert!(!cert.per_component_symmetry["a"]);
    }

    fn philosophers(n: usize) -> SystemModel {
        let mut text = String::new();
        for i in 0..n {
            text.push_str(&format!("semaphore f{i}\n"));
        }
        for i in 0..n {
            let (l, r) = (i, (i + 1) % n);
            text.push_str(&format!(
                "thread phil{i}\n edge 0 -> 1 : p(f{l})\n edge 1 -> 2 : p(f{r})\n \
                 edge 2 -> 3 : eat{i}\n edge 3 -> 4 : v(f{r})\n edge 4 -> 0 : v(f{l})\n"
            ));
        }
        parse_system(&text).unwrap()
    }

    #[test]
    fn dining_philosophers_stay_inconclusive() {
        for n in 2..=4 {
            let sys = philosophers(n);
            assert!(!certify_deadlock_free(&sys).certified);
            let cpg = build_system_cpg(&sys, &BuildOptions::default()).unwrap();
            assert!(!detect_deadlocks(&cpg).is_deadlock_free());
        }
    }

    #[test]
    fn blocked_entry_is_not_certified() {
        // Symmetric but starts with a v on a free semaphore.
        let sys = parse_system("semaphore s\nthread t\n edge 0 -> 1 : v(s)\n edge 1 -> 0 : p(s)\n").unwrap();
        assert!(!certify_deadlock_free(&sys).certified);
        let cpg = build_system_cpg(&sys, &BuildOptions::default()).unwrap();
        assert!(!detect_deadlocks(&cpg).is_deadlock_free());
    }

    #[test]
    fn semaphore_free_system_is_certified() {
        let sys = parse_system("thread t\n edge 0 -> 1 : a\n edge 0 -> 2 : b\n").unwrap();
        assert!(certify_deadlock_free(&sys).certified);
    }

    #[test]
    fn contraction_merges_straight_line_steps() {
        let sys = parse_system(
            "semaphore s\nthread t\n edge 0 -> 1 : x\n edge 1 -> 2 : p(s)\n edge 2 -> 3 : y\n edge 3 -> 1 : v(s)\n",
        )
        .unwrap();
        let c = contract(&sys.threads[0].rcfg, |e| e.block.label());
        assert_eq!(c.entry, 1);
        let names: Vec<_> = c.edges.iter().map(|(a, b, l)| (*a, *b, l.name().to_string())).collect();
        assert_eq!(names, [(1, 3, "p(s)".to_string()), (3, 1, "v(s)".to_string())]);
    }

    /// Random sync-only p-v-symmetric matrix of the given order.
    fn arb_symmetric(max_order: usize) -> impl Strategy<Value = SparseMatrix> {
        (2..=max_order).prop_flat_map(|n| {
            prop::collection::vec((0..n, 0..n, 1..3usize), 0..4).prop_map(move |pairs| {
                let mut used = BTreeSet::new();
                let mut entries = Vec::new();
                for (i, j, r) in pairs {
                    if i == j || used.contains(&(i, j)) || used.contains(&(j, i)) {
                        continue;
                    }
                    used.insert((i, j));
                    entries.push((i, j, Label::p(&sem_name(r))));
                    entries.push((j, i, Label::v(&sem_name(r))));
                }
                SparseMatrix::from_triples(n, entries).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn zero_rows_pair_with_zero_columns(m in arb_symmetric(5)) {
            prop_assert!(is_pv_symmetric(&m));
            let (rows, cols) = zero_lines(&m);
            prop_assert_eq!(rows, cols);
        }

        #[test]
        fn symmetry_is_closed_under_composition(m in arb_symmetric(4), n in arb_symmetric(4)) {
            let (a, b) = (LazyMatrix::leaf(m.clone()), LazyMatrix::leaf(n.clone()));
            prop_assert!(is_pv_symmetric_lazy(&kron_sum(&a, &b), 64).unwrap());
            prop_assert!(is_pv_symmetric_lazy(&kron_product(&a, &b), 64).unwrap());
            let labels: Vec<Label> = m.labels().chain(n.labels()).cloned().collect();
            let partition = LabelPartition::from_labels(&labels);
            let merged = merry(&a, &b, &partition).unwrap();
            prop_assert!(is_pv_symmetric_lazy(&merged, 64).unwrap());
        }
    }
}
