//! Brute-force interleaving semantics, used to cross-check the algebra.
//!
//! States are explicit program counters plus held-permit counts; nothing
//! here touches matrices.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::cpg::{Cpg, DEFAULT_MAX_NODES};
use crate::kronecker::CompositeIndex;
use crate::labels::{Label, LabelClass};
use crate::model::{BasicBlock, Cfg, Edge, SemaphoreSpec, Statement, SystemModel};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("state limit of {limit} exceeded")]
    StateCap { limit: usize },
    #[error("graph has a cycle; maximal paths are unbounded")]
    Cyclic,
    #[error("more than {limit} maximal paths")]
    PathLimit { limit: usize },
}

/// Program counter per thread and held permits per semaphore.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ExecState {
    pub pcs: Vec<usize>,
    pub sems: Vec<usize>,
}

impl ExecState {
    pub fn composite(&self) -> CompositeIndex {
        let digits: Vec<u32> = self
            .pcs
            .iter()
            .chain(&self.sems)
            .map(|&d| d as u32)
            .collect();
        CompositeIndex::from_digits(&digits)
    }
}

pub type Transition = (CompositeIndex, CompositeIndex, Label);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleGraph {
    pub entry: CompositeIndex,
    pub states: BTreeSet<CompositeIndex>,
    pub transitions: BTreeSet<Transition>,
}

/// Enabled moves of `state`: `(label, successor)`.
fn moves(system: &SystemModel, sem_index: &BTreeMap<&str, usize>, state: &ExecState) -> Vec<(Label, ExecState)> {
    let mut out = Vec::new();
    for (t, thread) in system.threads.iter().enumerate() {
        for e in thread.rcfg.edges.iter().filter(|e| e.src == state.pcs[t]) {
            let label = e.block.label();
            let mut next = state.clone();
            next.pcs[t] = e.dst;
            match label.class() {
                LabelClass::P(s) => {
                    let k = sem_index[s.as_ref()];
                    if state.sems[k] >= system.semaphores[k].spec.capacity {
                        continue;
                    }
                    next.sems[k] += 1;
                }
                LabelClass::V(s) => {
                    let k = sem_index[s.as_ref()];
                    if state.sems[k] == 0 {
                        continue;
                    }
                    next.sems[k] -= 1;
                }
                LabelClass::Sv | LabelClass::Nsv => {}
            }
            out.push((label, next));
        }
    }
    out
}

/// Breadth-first exploration of every interleaving from the all-zero state.
pub fn explore(system: &SystemModel, max_states: usize) -> Result<OracleGraph, OracleError> {
    let sem_index: BTreeMap<&str, usize> = system
        .semaphores
        .iter()
        .enumerate()
        .map(|(k, s)| (s.spec.id.as_str(), k))
        .collect();
    let init = ExecState {
        pcs: vec![0; system.threads.len()],
        sems: vec![0; system.semaphores.len()],
    };
    let mut seen = BTreeSet::from([init.clone()]);
    let mut queue = VecDeque::from([init.clone()]);
    let mut transitions = BTreeSet::new();
    while let Some(state) = queue.pop_front() {
        let src = state.composite();
        for (label, next) in moves(system, &sem_index, &state) {
            transitions.insert((src.clone(), next.composite(), label));
            if seen.insert(next.clone()) {
                if seen.len() > max_states {
                    return Err(OracleError::StateCap { limit: max_states });
                }
                queue.push_back(next);
            }
        }
    }
    Ok(OracleGraph {
        entry: init.composite(),
        states: seen.iter().map(ExecState::composite).collect(),
        transitions,
    })
}

pub fn explore_default(system: &SystemModel) -> Result<OracleGraph, OracleError> {
    explore(system, DEFAULT_MAX_NODES)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TripleText {
    pub src: String,
    pub dst: String,
    pub label: String,
}

impl From<&Transition> for TripleText {
    fn from((s, d, l): &Transition) -> Self {
        TripleText {
            src: s.to_string(),
            dst: d.to_string(),
            label: l.name().to_string(),
        }
    }
}

/// Differences between the oracle and a CPG. `missing` holds what only the
/// oracle has, `extra` what only the CPG has.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EquivalenceReport {
    pub equal: bool,
    pub missing: Vec<TripleText>,
    pub extra: Vec<TripleText>,
    pub missing_states: Vec<String>,
    pub extra_states: Vec<String>,
}

pub fn compare_with_cpg(g: &OracleGraph, cpg: &Cpg) -> EquivalenceReport {
    let cpg_states: BTreeSet<CompositeIndex> = cpg.nodes.iter().map(|n| n.composite.clone()).collect();
    let cpg_triples: BTreeSet<Transition> = cpg.triples().into_iter().collect();
    let missing: Vec<TripleText> = g.transitions.difference(&cpg_triples).map(Into::into).collect();
    let extra: Vec<TripleText> = cpg_triples.difference(&g.transitions).map(Into::into).collect();
    let missing_states: Vec<String> = g.states.difference(&cpg_states).map(|c| c.to_string()).collect();
    let extra_states: Vec<String> = cpg_states.difference(&g.states).map(|c| c.to_string()).collect();
    EquivalenceReport {
        equal: missing.is_empty() && extra.is_empty() && missing_states.is_empty() && extra_states.is_empty(),
        missing,
        extra,
        missing_states,
        extra_states,
    }
}

/// All label sequences from the entry to a state without successors, in
/// lexicographic order.
pub fn enumerate_maximal_paths(g: &OracleGraph, limit: usize) -> Result<Vec<Vec<String>>, OracleError> {
    let mut succ: BTreeMap<&CompositeIndex, Vec<(&str, &CompositeIndex)>> = BTreeMap::new();
    for (s, d, l) in &g.transitions {
        succ.entry(s).or_default().push((l.name(), d));
    }

    // Kahn's algorithm over the reachable states detects cycles.
    let mut indegree: BTreeMap<&CompositeIndex, usize> = g.states.iter().map(|s| (s, 0)).collect();
    for (_, d, _) in &g.transitions {
        *indegree.get_mut(d).expect("transition targets are states") += 1;
    }
    let mut ready: Vec<&CompositeIndex> = indegree.iter().filter(|(_, &d)| d == 0).map(|(s, _)| *s).collect();
    let mut visited = 0;
    while let Some(s) = ready.pop() {
        visited += 1;
        for (_, d) in succ.get(s).into_iter().flatten() {
            let k = indegree.get_mut(d).expect("state");
            *k -= 1;
            if *k == 0 {
                ready.push(d);
            }
        }
    }
    if visited != g.states.len() {
        return Err(OracleError::Cyclic);
    }

    let mut paths = Vec::new();
    let mut stack: Vec<(&CompositeIndex, Vec<String>)> = vec![(&g.entry, Vec::new())];
    while let Some((s, path)) = stack.pop() {
        match succ.get(s) {
            None => {
                if paths.len() == limit {
                    return Err(OracleError::PathLimit { limit });
                }
                paths.push(path);
            }
            Some(out) => {
                for (l, d) in out {
                    let mut p = path.clone();
                    p.push(l.to_string());
                    stack.push((d, p));
                }
            }
        }
    }
    paths.sort();
    Ok(paths)
}

/// Bounds of the random system family.
#[derive(Debug, Clone, Copy)]
pub struct RandomShape {
    pub max_threads: usize,
    pub max_nodes: usize,
    pub max_semaphores: usize,
    pub max_capacity: usize,
    /// Probability of adding an extra edge from a node with a free slot.
    pub extra_edge_probability: f64,
    /// Allow two outgoing edges per node; otherwise threads are a chain
    /// with at most one extra edge from its end.
    pub branching: bool,
}

impl Default for RandomShape {
    fn default() -> Self {
        RandomShape {
            max_threads: 3,
            max_nodes: 5,
            max_semaphores: 2,
            max_capacity: 2,
            extra_edge_probability: 0.3,
            branching: true,
        }
    }
}

/// Random valid system: every thread is a spanning tree from node 0 plus
/// some extra edges, out-degree at most 2 (or 1 without branching).
pub fn random_system_with<R: Rng>(rng: &mut R, shape: &RandomShape) -> SystemModel {
    let sem_count = rng.gen_range(0..=shape.max_semaphores);
    let sems: Vec<SemaphoreSpec> = (0..sem_count)
        .map(|k| SemaphoreSpec {
            id: format!("s{k}"),
            capacity: rng.gen_range(1..=shape.max_capacity),
        })
        .collect();
    let thread_count = rng.gen_range(1..=shape.max_threads);
    let threads = (0..thread_count)
        .map(|t| {
            let n = rng.gen_range(1..=shape.max_nodes);
            let mut pairs: Vec<(usize, usize)> = Vec::new();
            let max_degree = if shape.branching { 2 } else { 1 };
            let degree = |pairs: &[(usize, usize)], u: usize| pairs.iter().filter(|(s, _)| *s == u).count();
            for k in 1..n {
                let open: Vec<usize> = (0..k).filter(|&u| degree(&pairs, u) < max_degree).collect();
                let parent = *open.choose(rng).expect("a chain always leaves a free slot");
                pairs.push((parent, k));
            }
            for u in 0..n {
                if degree(&pairs, u) < max_degree && rng.gen_bool(shape.extra_edge_probability) {
                    let v = rng.gen_range(0..n);
                    if !pairs.contains(&(u, v)) {
                        pairs.push((u, v));
                    }
                }
            }
            let edges = pairs
                .into_iter()
                .enumerate()
                .map(|(k, (src, dst))| {
                    let stmt = match rng.gen_range(0..4) {
                        0 if !sems.is_empty() => Statement::p(&sems.choose(rng).expect("non-empty").id),
                        1 if !sems.is_empty() => Statement::v(&sems.choose(rng).expect("non-empty").id),
                        2 => Statement::new(&format!("t{t}w{k}"), [["x", "y"].choose(rng).expect("non-empty").to_string()]),
                        _ => Statement::new(&format!("t{t}l{k}"), Vec::<String>::new()),
                    };
                    Edge {
                        src,
                        dst,
                        block: BasicBlock::new(vec![stmt]),
                    }
                })
                .collect();
            (format!("T{t}"), Cfg::new(n, edges))
        })
        .collect();
    SystemModel::new(threads, sems).expect("generated systems are valid")
}

pub fn random_system(seed: u64) -> SystemModel {
    random_system_with(&mut ChaCha8Rng::seed_from_u64(seed), &RandomShape::default())
}
