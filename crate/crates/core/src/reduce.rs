//! CPG output with elimination of redundant NSV interleavings.
//!
//! Edges whose label accesses no shared variable (NSV) are deferred while
//! the graph is emitted. Once nothing else can be processed, one NSV label
//! is picked and only a subset of its deferred edges is emitted: enough
//! edges that the subset is reachable from every node emitted so far.
//! Eliminated edges are remembered together with the set of emitted nodes;
//! if a later edge leads back into that region they are reconsidered, so
//! loops of the full graph are never cut.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::time::Instant;

use crate::cpg::{build_cpg, BuildOptions, Cpg, CpgEdge, CpgError};
use crate::kronecker::{CompositeIndex, LazyMatrix};
use crate::labels::Label;
use crate::model::SystemModel;

/// Heuristic for picking the NSV label whose deferred edges are emitted next.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelChoice {
    /// Smallest non-empty set first, ties by label name.
    #[default]
    SmallestSet,
    /// Largest non-empty set first, ties by label name.
    LargestSet,
    /// First non-empty set in label order.
    ByName,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ReduceOptions {
    pub build: BuildOptions,
    pub label_choice: LabelChoice,
}

type Arc2 = (usize, usize);

/// Reachability queries over a fixed graph, memoized per source.
pub struct Reachability {
    adj: Vec<Vec<usize>>,
    memo: HashMap<usize, Vec<bool>>,
}

impl Reachability {
    pub fn new(adj: Vec<Vec<usize>>) -> Self {
        Reachability {
            adj,
            memo: HashMap::new(),
        }
    }

    /// Whether `to` is reachable from `from` (every node reaches itself).
    pub fn reaches(&mut self, from: usize, to: usize) -> bool {
        let adj = &self.adj;
        self.memo
            .entry(from)
            .or_insert_with(|| {
                let mut seen = vec![false; adj.len()];
                let mut stack = vec![from];
                seen[from] = true;
                while let Some(n) = stack.pop() {
                    for &m in &adj[n] {
                        if !seen[m] {
                            seen[m] = true;
                            stack.push(m);
                        }
                    }
                }
                seen
            })[to]
    }
}

fn coverage(edge: Arc2, done: &BTreeSet<usize>, reach: &mut Reachability) -> BTreeSet<usize> {
    done.iter()
        .copied()
        .filter(|&d| reach.reaches(d, edge.0))
        .collect()
}

/// Greedy set cover: the universe is `done`, and an edge `n → i` covers the
/// done-nodes from which `n` is reachable. Picks the edge covering the most
/// uncovered nodes until all are covered, ties by ascending `(src, dst)`.
/// Returns an empty set when no cover exists.
pub fn smallest_subset(
    candidates: &BTreeSet<Arc2>,
    done: &BTreeSet<usize>,
    reach: &mut Reachability,
) -> BTreeSet<Arc2> {
    let covers: Vec<(Arc2, BTreeSet<usize>)> = candidates
        .iter()
        .map(|&e| (e, coverage(e, done, reach)))
        .collect();
    let mut uncovered = done.clone();
    let mut chosen = BTreeSet::new();
    while !uncovered.is_empty() {
        let best = covers
            .iter()
            .filter(|(e, _)| !chosen.contains(e))
            .map(|(e, c)| (c.intersection(&uncovered).count(), e, c))
            // max_by_key keeps the last maximum; reverse so the smallest edge wins.
            .rev()
            .max_by_key(|(gain, _, _)| *gain);
        match best {
            Some((gain, e, c)) if gain > 0 => {
                chosen.insert(*e);
                uncovered.retain(|d| !c.contains(d));
            }
            _ => return BTreeSet::new(),
        }
    }
    chosen
}

/// Exact minimum cover by enumeration, for cross-checking the greedy
/// choice on small instances (at most 16 candidates). `None` when no cover
/// exists.
pub fn exact_smallest_subset(
    candidates: &BTreeSet<Arc2>,
    done: &BTreeSet<usize>,
    reach: &mut Reachability,
) -> Option<BTreeSet<Arc2>> {
    assert!(candidates.len() <= 16, "exact cover is exponential");
    let covers: Vec<(Arc2, BTreeSet<usize>)> = candidates
        .iter()
        .map(|&e| (e, coverage(e, done, reach)))
        .collect();
    let mut best: Option<BTreeSet<Arc2>> = None;
    for mask in 0u32..(1 << covers.len()) {
        let size = mask.count_ones() as usize;
        if best.as_ref().is_some_and(|b| b.len() <= size) {
            continue;
        }
        let mut covered = BTreeSet::new();
        for (k, (_, c)) in covers.iter().enumerate() {
            if mask & (1 << k) != 0 {
                covered.extend(c.iter().copied());
            }
        }
        if done.is_subset(&covered) {
            best = Some(
                covers
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| mask & (1 << k) != 0)
                    .map(|(_, (e, _))| *e)
                    .collect(),
            );
        }
    }
    best
}

/// Picks the label whose deferred edges are emitted next.
pub fn choose_label<T>(tbdnsv: &BTreeMap<Label, BTreeSet<T>>, choice: LabelChoice) -> Option<Label> {
    let nonempty = tbdnsv.iter().filter(|(_, s)| !s.is_empty());
    let picked = match choice {
        LabelChoice::SmallestSet => nonempty.min_by(|a, b| a.1.len().cmp(&b.1.len()).then(a.0.cmp(b.0))),
        LabelChoice::LargestSet => nonempty.min_by(|a, b| b.1.len().cmp(&a.1.len()).then(a.0.cmp(b.0))),
        LabelChoice::ByName => nonempty.min_by(|a, b| a.0.cmp(b.0)),
    };
    picked.map(|(l, _)| l.clone())
}

/// What one iteration of the output loop did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceAction {
    Processed(CompositeIndex),
    Chose {
        label: Label,
        emitted: Vec<(CompositeIndex, CompositeIndex)>,
        eliminated: Vec<(CompositeIndex, CompositeIndex)>,
    },
}

/// State of the output loop after one iteration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceStep {
    pub iteration: usize,
    pub action: TraceAction,
    pub tbd: Vec<CompositeIndex>,
    /// Non-empty deferred sets only.
    pub tbdnsv: BTreeMap<Label, Vec<(CompositeIndex, CompositeIndex)>>,
    pub done: Vec<CompositeIndex>,
    pub reconsider: usize,
}

#[derive(Debug, Clone)]
pub struct Reduction {
    pub cpg: Cpg,
    /// The unreduced CPG the reduction worked on.
    pub full: Cpg,
    pub trace: Vec<TraceStep>,
}

struct Reconsider {
    done: BTreeSet<usize>,
    edges: BTreeSet<(usize, usize, Label)>,
}

impl Reconsider {
    fn triggered_by(&self, i: usize) -> bool {
        self.done.contains(&i) || self.edges.iter().any(|(m, j, _)| *m == i || *j == i)
    }
}

/// Builds the CPG of `p` and emits it with NSV reduction.
///
/// Nodes are ranked by composite index; the loop always takes the smallest
/// pending node and visits edges in ascending (destination, label) order.
/// The result is renumbered with the same breadth-first order as
/// [`build_cpg`], so a system without NSV labels yields an identical graph.
pub fn output_cpg_reduced(
    p: &LazyMatrix,
    system: &SystemModel,
    options: &ReduceOptions,
) -> Result<Reduction, CpgError> {
    let full = build_cpg(p, system, &options.build)?;
    let start = Instant::now();

    // Rank space: node ids sorted by composite index.
    let mut by_rank: Vec<usize> = (0..full.node_count()).collect();
    by_rank.sort_by(|&a, &b| full.nodes[a].composite.cmp(&full.nodes[b].composite));
    let mut rank = vec![0; by_rank.len()];
    for (r, &id) in by_rank.iter().enumerate() {
        rank[id] = r;
    }
    let adj: Vec<Vec<(usize, Label)>> = by_rank
        .iter()
        .map(|&id| {
            let mut out: Vec<_> = full
                .out_edges(id)
                .map(|e| (rank[e.dst], e.label.clone()))
                .collect();
            out.sort();
            out
        })
        .collect();
    let mut reach = Reachability::new(
        adj.iter()
            .map(|out| out.iter().map(|(d, _)| *d).collect())
            .collect(),
    );
    let composite = |r: usize| full.nodes[by_rank[r]].composite.clone();

    let mut tbd: BTreeSet<usize> = BTreeSet::from([rank[0]]);
    let mut tbdnsv: BTreeMap<Label, BTreeSet<Arc2>> = BTreeMap::new();
    let mut done: BTreeSet<usize> = BTreeSet::new();
    let mut reconsider: Vec<Reconsider> = Vec::new();
    let mut kept: BTreeSet<(usize, usize, Label)> = BTreeSet::new();
    let mut trace = Vec::new();

    loop {
        let action = if let Some(n) = tbd.pop_first() {
            for (i, label) in &adj[n] {
                let i = *i;
                if label.is_nsv() {
                    tbdnsv.entry(label.clone()).or_default().insert((n, i));
                } else {
                    tbd.insert(i);
                    kept.insert((n, i, label.clone()));
                }
                while let Some(k) = reconsider.iter().position(|r| r.triggered_by(i)) {
                    for (m, j, l) in reconsider.swap_remove(k).edges {
                        tbdnsv.entry(l).or_default().insert((m, j));
                    }
                }
            }
            done.insert(n);
            tbd.retain(|x| !done.contains(x));
            TraceAction::Processed(composite(n))
        } else if let Some(label) = choose_label(&tbdnsv, options.label_choice) {
            let candidates = std::mem::take(tbdnsv.get_mut(&label).expect("chosen label present"));
            let mut subset = smallest_subset(&candidates, &done, &mut reach);
            if subset.is_empty() {
                subset = candidates.clone();
            }
            let eliminated: BTreeSet<Arc2> = candidates.difference(&subset).copied().collect();
            if !eliminated.is_empty() {
                reconsider.push(Reconsider {
                    done: done.clone(),
                    edges: eliminated
                        .iter()
                        .map(|&(m, j)| (m, j, label.clone()))
                        .collect(),
                });
            }
            for &(n, i) in &subset {
                kept.insert((n, i, label.clone()));
                if !done.contains(&i) {
                    tbd.insert(i);
                }
            }
            TraceAction::Chose {
                label,
                emitted: subset.iter().map(|&(a, b)| (composite(a), composite(b))).collect(),
                eliminated: eliminated
                    .iter()
                    .map(|&(a, b)| (composite(a), composite(b)))
                    .collect(),
            }
        } else {
            break;
        };
        trace.push(TraceStep {
            iteration: trace.len() + 1,
            action,
            tbd: tbd.iter().map(|&r| composite(r)).collect(),
            tbdnsv: tbdnsv
                .iter()
                .filter(|(_, s)| !s.is_empty())
                .map(|(l, s)| {
                    (
                        l.clone(),
                        s.iter().map(|&(a, b)| (composite(a), composite(b))).collect(),
                    )
                })
                .collect(),
            done: done.iter().map(|&r| composite(r)).collect(),
            reconsider: reconsider.len(),
        });
    }

    // Keep the edges of the full graph in their stored order.
    let keep: Vec<bool> = full
        .edges
        .iter()
        .map(|e| kept.contains(&(rank[e.src], rank[e.dst], e.label.clone())))
        .collect();
    let mut cpg = subgraph(&full, system, &keep);
    cpg.build_time = full.build_time + start.elapsed();
    Ok(Reduction { cpg, full, trace })
}

/// Re-explores `full` from its entry over the kept edges only, with the
/// level-sorted breadth-first numbering of [`build_cpg`].
fn subgraph(full: &Cpg, system: &SystemModel, keep: &[bool]) -> Cpg {
    let mut ids: HashMap<usize, usize> = HashMap::from([(0, 0)]);
    let mut composites = vec![full.nodes[0].composite.clone()];
    let mut parent_edge = vec![None];
    let mut edges = Vec::new();
    let mut level = vec![0usize];
    while !level.is_empty() {
        level.sort_by(|&a, &b| full.nodes[a].composite.cmp(&full.nodes[b].composite));
        let mut next = Vec::new();
        for &old in &level {
            let mut out: Vec<(usize, &CpgEdge)> = full
                .out_edge_indices(old)
                .filter(|&k| keep[k])
                .map(|k| (k, &full.edges[k]))
                .collect();
            out.sort_by(|a, b| {
                (&full.nodes[a.1.dst].composite, &a.1.label)
                    .cmp(&(&full.nodes[b.1.dst].composite, &b.1.label))
            });
            for (_, e) in out {
                let dst = match ids.get(&e.dst) {
                    Some(&d) => d,
                    None => {
                        let d = composites.len();
                        ids.insert(e.dst, d);
                        composites.push(full.nodes[e.dst].composite.clone());
                        parent_edge.push(Some(edges.len()));
                        next.push(e.dst);
                        d
                    }
                };
                edges.push(CpgEdge {
                    src: ids[&old],
                    dst,
                    label: e.label.clone(),
                });
            }
        }
        level = next;
    }
    Cpg::assemble(
        system,
        composites,
        edges,
        parent_edge,
        full.potential_order.clone(),
        full.build_time,
    )
}
