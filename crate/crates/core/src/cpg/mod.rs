//! Concurrent Program Graph construction and analysis.
//!
//! The CPG is the part of `P = T ⊙ S` reachable from the entry node. It is
//! built by breadth-first search over [`LazyMatrix::successors`], so rows of
//! `P` that cannot be reached are never evaluated.

mod dot;

use std::collections::{HashMap, VecDeque};
use std::time::{Duration, Instant};

use num_bigint::BigUint;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::kronecker::{kfold_sum, merry, AlgebraError, CompositeIndex, LazyMatrix, Term};
use crate::labels::Label;
use crate::model::SystemModel;

pub use dot::{emit_dot, DotOptions};

/// Default cap on visited nodes.
pub const DEFAULT_MAX_NODES: usize = 10_000_000;

#[derive(Debug, Error)]
pub enum CpgError {
    #[error("node cap of {limit} exceeded after {nodes} nodes and {edges} edges")]
    NodeCap {
        limit: usize,
        nodes: usize,
        edges: usize,
    },
    #[error("matrix shape {matrix:?} does not match the system components {system:?}")]
    ShapeMismatch {
        matrix: Vec<usize>,
        system: Vec<usize>,
    },
    #[error("entry {0} is not a single label")]
    CompositeLabel(String),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

#[derive(Debug, Clone, Copy)]
pub struct BuildOptions {
    pub max_nodes: usize,
    /// Worker threads for successor evaluation. Results are identical for
    /// any value; 1 evaluates on the calling thread.
    pub workers: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            max_nodes: DEFAULT_MAX_NODES,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeInfo {
    pub dense_id: usize,
    /// One digit per thread, then one per semaphore.
    pub composite: CompositeIndex,
    pub all_threads_terminal: bool,
    pub semaphores_at_entry: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CpgEdge {
    pub src: usize,
    pub dst: usize,
    pub label: Label,
}

#[derive(Debug, Clone)]
pub struct Cpg {
    pub nodes: Vec<NodeInfo>,
    pub edges: Vec<CpgEdge>,
    /// Component orders (threads first), the radices of node composites.
    pub radices: Vec<usize>,
    pub thread_count: usize,
    /// Order of `P`: the product of all component orders.
    pub potential_order: BigUint,
    pub build_time: Duration,
    out: Vec<Vec<usize>>,
    /// BFS tree: edge index that first discovered each node.
    parent_edge: Vec<Option<usize>>,
}

/// The program matrix `(⊕ threads) ⊙ (⊕ semaphores)`. Without semaphores
/// this is the plain interleaving of the threads.
pub fn program_matrix(system: &SystemModel) -> Result<LazyMatrix, AlgebraError> {
    let threads: Vec<LazyMatrix> = system
        .threads
        .iter()
        .map(|t| LazyMatrix::leaf(t.matrix.clone()))
        .collect();
    let t = kfold_sum(&threads)?;
    if system.semaphores.is_empty() {
        return Ok(t);
    }
    let sems: Vec<LazyMatrix> = system
        .semaphores
        .iter()
        .map(|s| LazyMatrix::leaf(s.matrix.clone()))
        .collect();
    merry(&t, &kfold_sum(&sems)?, &system.partition)
}

impl Cpg {
    /// Assembles a CPG from nodes given by composite index and edges between
    /// them. `parent_edge` may be empty, in which case witnesses are
    /// recomputed by BFS.
    pub(crate) fn assemble(
        system: &SystemModel,
        composites: Vec<CompositeIndex>,
        edges: Vec<CpgEdge>,
        parent_edge: Vec<Option<usize>>,
        potential_order: BigUint,
        build_time: Duration,
    ) -> Cpg {
        let thread_count = system.threads.len();
        let nodes = composites
            .into_iter()
            .enumerate()
            .map(|(dense_id, composite)| {
                let digits = composite.digits();
                let all_threads_terminal = system
                    .threads
                    .iter()
                    .zip(digits)
                    .all(|(t, &d)| t.is_terminal(d as usize));
                let semaphores_at_entry = digits[thread_count..].iter().all(|&d| d == 0);
                NodeInfo {
                    dense_id,
                    composite,
                    all_threads_terminal,
                    semaphores_at_entry,
                }
            })
            .collect::<Vec<_>>();
        let mut out = vec![Vec::new(); nodes.len()];
        for (k, e) in edges.iter().enumerate() {
            out[e.src].push(k);
        }
        let mut cpg = Cpg {
            nodes,
            edges,
            radices: system.radices(),
            thread_count,
            potential_order,
            build_time,
            out,
            parent_edge,
        };
        if cpg.parent_edge.len() != cpg.nodes.len() {
            cpg.parent_edge = cpg.bfs_parents();
        }
        cpg
    }

    fn bfs_parents(&self) -> Vec<Option<usize>> {
        let mut parent = vec![None; self.nodes.len()];
        let mut seen = vec![false; self.nodes.len()];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(n) = queue.pop_front() {
            for &k in &self.out[n] {
                let d = self.edges[k].dst;
                if !seen[d] {
                    seen[d] = true;
                    parent[d] = Some(k);
                    queue.push_back(d);
                }
            }
        }
        parent
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn out_edges(&self, node: usize) -> impl Iterator<Item = &CpgEdge> {
        self.out[node].iter().map(|&k| &self.edges[k])
    }

    /// Indices into `edges` of the out-edges of `node`.
    pub fn out_edge_indices(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.out[node].iter().copied()
    }

    pub fn out_degree(&self, node: usize) -> usize {
        self.out[node].len()
    }

    /// Dense id of the node with the given composite index.
    pub fn find(&self, composite: &CompositeIndex) -> Option<usize> {
        self.nodes.iter().position(|n| &n.composite == composite)
    }

    /// Edges of the shortest path from the entry to `node`.
    pub fn witness_edges(&self, node: usize) -> Vec<&CpgEdge> {
        let mut path = Vec::new();
        let mut cur = node;
        while let Some(k) = self.parent_edge[cur] {
            path.push(&self.edges[k]);
            cur = self.edges[k].src;
        }
        path.reverse();
        path
    }

    /// Label sequence of the shortest path from the entry to `node`.
    pub fn witness(&self, node: usize) -> Vec<Label> {
        self.witness_edges(node).into_iter().map(|e| e.label.clone()).collect()
    }

    /// Edges as `(src composite, dst composite, label)` triples.
    pub fn triples(&self) -> Vec<(CompositeIndex, CompositeIndex, Label)> {
        let mut t: Vec<_> = self
            .edges
            .iter()
            .map(|e| {
                (
                    self.nodes[e.src].composite.clone(),
                    self.nodes[e.dst].composite.clone(),
                    e.label.clone(),
                )
            })
            .collect();
        t.sort();
        t
    }
}

fn atom(term: Term) -> Result<Label, CpgError> {
    match term.as_atom() {
        Some(l) => Ok(l.clone()),
        None => Err(CpgError::CompositeLabel(term.to_string())),
    }
}

/// Explores the reachable part of `p` from composite index 0.
///
/// Levels are expanded in ascending composite order and successors in
/// ascending (destination, label) order; dense ids follow first discovery.
pub fn build_cpg(
    p: &LazyMatrix,
    system: &SystemModel,
    options: &BuildOptions,
) -> Result<Cpg, CpgError> {
    let start = Instant::now();
    let radices = system.radices();
    if p.radices() != radices.as_slice() {
        return Err(CpgError::ShapeMismatch {
            matrix: p.radices().to_vec(),
            system: radices,
        });
    }

    let pool = if options.workers > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(options.workers)
                .build()
                .expect("failed to start worker pool"),
        )
    } else {
        None
    };

    let entry = p.entry_index();
    let mut ids: HashMap<CompositeIndex, usize> = HashMap::from([(entry.clone(), 0)]);
    let mut composites = vec![entry.clone()];
    let mut parent_edge: Vec<Option<usize>> = vec![None];
    let mut edges: Vec<CpgEdge> = Vec::new();
    let mut level = vec![entry];

    while !level.is_empty() {
        level.sort();
        let expanded: Vec<_> = match &pool {
            Some(pool) => pool.install(|| level.par_iter().map(|n| p.successors(n)).collect()),
            None => level.iter().map(|n| p.successors(n)).collect(),
        };
        let mut next = Vec::new();
        for (node, succs) in level.iter().zip(expanded) {
            let src = ids[node];
            for (dst, term) in succs? {
                let label = atom(term)?;
                let dst_id = match ids.get(&dst) {
                    Some(&id) => id,
                    None => {
                        let id = composites.len();
                        if id >= options.max_nodes {
                            return Err(CpgError::NodeCap {
                                limit: options.max_nodes,
                                nodes: composites.len(),
                                edges: edges.len(),
                            });
                        }
                        ids.insert(dst.clone(), id);
                        composites.push(dst.clone());
                        parent_edge.push(Some(edges.len()));
                        next.push(dst);
                        id
                    }
                };
                edges.push(CpgEdge {
                    src,
                    dst: dst_id,
                    label,
                });
            }
        }
        level = next;
    }

    Ok(Cpg::assemble(
        system,
        composites,
        edges,
        parent_edge,
        p.order().clone(),
        start.elapsed(),
    ))
}

/// Builds the CPG of a system with default options.
pub fn build_system_cpg(system: &SystemModel, options: &BuildOptions) -> Result<Cpg, CpgError> {
    build_cpg(&program_matrix(system)?, system, options)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Deadlock {
    pub node: usize,
    pub composite: String,
    pub witness: Vec<String>,
    /// Composite indices along the witness, entry first.
    pub path: Vec<String>,
    #[serde(skip)]
    pub witness_labels: Vec<Label>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DeadlockReport {
    pub deadlocked: Vec<Deadlock>,
    /// Final nodes in which some semaphore is still held.
    pub warnings: Vec<usize>,
}

impl DeadlockReport {
    pub fn is_deadlock_free(&self) -> bool {
        self.deadlocked.is_empty()
    }
}

/// Reachable nodes without successors that are not final, each with a
/// shortest witness path from the entry.
///
/// A node is final when every thread sits on a node without outgoing edges.
/// Static reports may be infeasible at run time; an empty report means the
/// program cannot deadlock.
pub fn detect_deadlocks(cpg: &Cpg) -> DeadlockReport {
    let mut report = DeadlockReport::default();
    for n in &cpg.nodes {
        if cpg.out_degree(n.dense_id) > 0 {
            continue;
        }
        if n.all_threads_terminal {
            if !n.semaphores_at_entry {
                report.warnings.push(n.dense_id);
            }
            continue;
        }
        let edges = cpg.witness_edges(n.dense_id);
        let path = std::iter::once(0)
            .chain(edges.iter().map(|e| e.dst))
            .map(|k| cpg.nodes[k].composite.to_string())
            .collect();
        let witness_labels: Vec<Label> = edges.iter().map(|e| e.label.clone()).collect();
        report.deadlocked.push(Deadlock {
            node: n.dense_id,
            composite: n.composite.to_string(),
            witness: witness_labels.iter().map(|l| l.name().to_string()).collect(),
            path,
            witness_labels,
        });
    }
    report
}

fn decimal<S: serde::Serializer>(n: &BigUint, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&n.to_str_radix(10))
}

/// Summary statistics of a CPG.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CpgStats {
    pub nodes: usize,
    pub edges: usize,
    #[serde(serialize_with = "decimal")]
    pub potential_nodes: BigUint,
    pub build_ms: f64,
    pub deadlocks: usize,
}

pub fn stats(cpg: &Cpg) -> CpgStats {
    CpgStats {
        nodes: cpg.node_count(),
        edges: cpg.edge_count(),
        potential_nodes: cpg.potential_order.clone(),
        build_ms: cpg.build_time.as_secs_f64() * 1e3,
        deadlocks: detect_deadlocks(cpg).deadlocked.len(),
    }
}

/// Nodes, edges and statistics as a JSON document.
pub fn graph_json(cpg: &Cpg) -> serde_json::Value {
    let nodes: Vec<_> = cpg
        .nodes
        .iter()
        .map(|n| {
            serde_json::json!({
                "id": n.dense_id,
                "composite": n.composite.to_string(),
                "final": n.all_threads_terminal,
            })
        })
        .collect();
    let edges: Vec<_> = cpg
        .edges
        .iter()
        .map(|e| serde_json::json!({ "src": e.src, "dst": e.dst, "label": e.label.name() }))
        .collect();
    serde_json::json!({ "nodes": nodes, "edges": edges, "stats": stats(cpg) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_system;

    const MUTEX: &str = "\
semaphore s1 capacity 1
thread T1
  edge 0 -> 1 : p(s1)
  edge 1 -> 2 : a writes x
  edge 2 -> 3 : v(s1)
thread T2
  edge 0 -> 1 : p(s1)
  edge 1 -> 2 : b writes x
  edge 2 -> 3 : v(s1)
";

    const CROSSED: &str = "\
semaphore s1
semaphore s2
thread T1
  edge 0 -> 1 : p(s1)
  edge 1 -> 2 : p(s2)
  edge 2 -> 3 : v(s2)
  edge 3 -> 4 : v(s1)
thread T2
  edge 0 -> 1 : p(s2)
  edge 1 -> 2 : p(s1)
  edge 2 -> 3 : v(s1)
  edge 3 -> 4 : v(s2)
";

    fn build(text: &str) -> Cpg {
        build_system_cpg(&parse_system(text).unwrap(), &BuildOptions::default()).unwrap()
    }

    #[test]
    fn mutual_exclusion_cpg() {
        let cpg = build(MUTEX);
        assert_eq!(cpg.node_count(), 12);
        assert_eq!(cpg.edge_count(), 12);
        assert_eq!(cpg.potential_order, BigUint::from(32u32));
        assert!(detect_deadlocks(&cpg).is_deadlock_free());
        assert_eq!(cpg.nodes[0].composite, CompositeIndex::zero(3));
    }

    #[test]
    fn single_thread_path() {
        let cpg = build("thread t\n edge 0 -> 1 : a\n edge 1 -> 2 : b\n");
        assert_eq!((cpg.node_count(), cpg.edge_count()), (3, 2));
        let report = detect_deadlocks(&cpg);
        assert!(report.is_deadlock_free());
        assert!(report.warnings.is_empty());
        assert!(cpg.nodes[2].all_threads_terminal);
    }

    #[test]
    fn crossed_locks_deadlock_with_witness() {
        let cpg = build(CROSSED);
        let report = detect_deadlocks(&cpg);
        assert_eq!(report.deadlocked.len(), 1);
        let d = &report.deadlocked[0];
        assert_eq!(
            cpg.nodes[d.node].composite,
            CompositeIndex::from_digits(&[1, 1, 1, 1])
        );
        assert_eq!(d.witness_labels.len(), 2);
        assert_eq!(d.witness, vec!["p(s2)", "p(s1)"]);
    }

    #[test]
    fn held_semaphore_at_exit_is_a_warning() {
        let cpg = build("semaphore s\nthread t\n edge 0 -> 1 : p(s)\n");
        let report = detect_deadlocks(&cpg);
        assert!(report.is_deadlock_free());
        assert_eq!(report.warnings, vec![1]);
    }

    #[test]
    fn node_cap_aborts() {
        let sys = parse_system(MUTEX).unwrap();
        let err = build_system_cpg(
            &sys,
            &BuildOptions {
                max_nodes: 5,
                workers: 1,
            },
        )
        .unwrap_err();
        assert!(matches!(err, CpgError::NodeCap { limit: 5, nodes: 5, .. }));
    }

    #[test]
    fn parallel_build_matches_sequential() {
        let sys = parse_system(CROSSED).unwrap();
        let a = build_system_cpg(&sys, &BuildOptions::default()).unwrap();
        let b = build_system_cpg(
            &sys,
            &BuildOptions {
                workers: 4,
                ..BuildOptions::default()
            },
        )
        .unwrap();
        assert_eq!(a.nodes, b.nodes);
        assert_eq!(a.edges, b.edges);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let sys = parse_system(MUTEX).unwrap();
        let other = parse_system("thread t\n edge 0 -> 1 : a\n").unwrap();
        let p = program_matrix(&other).unwrap();
        assert!(matches!(
            build_cpg(&p, &sys, &BuildOptions::default()),
            Err(CpgError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn graph_json_lists_everything() {
        let cpg = build(MUTEX);
        let json = graph_json(&cpg);
        assert_eq!(json["nodes"].as_array().unwrap().len(), 12);
        assert_eq!(json["edges"].as_array().unwrap().len(), 12);
        assert_eq!(json["nodes"][0]["composite"], "(0.0.0)");
        assert_eq!(json["stats"]["potential_nodes"], "32");
    }

    #[test]
    fn stats_serialize_potential_as_string() {
        let json = serde_json::to_value(stats(&build(MUTEX))).unwrap();
        assert_eq!(json["nodes"], 12);
        assert_eq!(json["edges"], 12);
        assert_eq!(json["potential_nodes"], "32");
        assert_eq!(json["deadlocks"], 0);
    }
}
