//! Threads, semaphores and their control flow graphs.
//!
//! A thread is a CFG whose edges carry basic blocks. Before composition the
//! CFG is refined by [`split_edges`] so that every edge touches at most one
//! shared variable and every semaphore call sits alone on its edge; the
//! refined graph is then turned into a label matrix by [`thread_matrix`].

mod parse;
mod split;

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::kronecker::{AlgebraError, SparseMatrix};
use crate::labels::{Label, LabelPartition};

pub use parse::parse_system;
pub use split::split_edges;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("thread `{thread}`: node {node} is not reachable from the entry")]
    Unreachable { thread: String, node: usize },
    #[error("thread `{thread}`: node {node} has {degree} outgoing edges (at most 2 allowed)")]
    OutDegree {
        thread: String,
        node: usize,
        degree: usize,
    },
    #[error("thread `{thread}` calls undeclared semaphore `{semaphore}`")]
    UndeclaredSemaphore { thread: String, semaphore: String },
    #[error("thread `{thread}`: two edges from {src} to {dst}")]
    DuplicateEdge {
        thread: String,
        src: usize,
        dst: usize,
    },
    #[error("thread `{thread}`: edge {src} -> {dst} has an empty basic block")]
    EmptyBlock {
        thread: String,
        src: usize,
        dst: usize,
    },
    #[error("semaphore `{0}` must have capacity >= 1")]
    Capacity(String),
    #[error("`{0}` is declared twice")]
    Redeclared(String),
    #[error("the system declares no threads")]
    NoThreads,
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

/// Semaphore operation of a statement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SemOp {
    P,
    V,
}

/// A single statement of a basic block.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Statement {
    pub text: String,
    /// Shared variables read or written. Empty for semaphore calls.
    pub accesses: BTreeSet<String>,
    pub sem_call: Option<(SemOp, String)>,
    /// Statement touches two or more shared variables and must stay whole.
    pub atomic_multi: bool,
}

impl Statement {
    /// Plain statement; `atomic_multi` follows from the access count.
    pub fn new<I, S>(text: &str, accesses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let accesses: BTreeSet<String> = accesses.into_iter().map(Into::into).collect();
        Statement {
            text: text.to_string(),
            atomic_multi: accesses.len() >= 2,
            accesses,
            sem_call: None,
        }
    }

    pub fn p(sem: &str) -> Self {
        Self::sem(SemOp::P, sem)
    }

    pub fn v(sem: &str) -> Self {
        Self::sem(SemOp::V, sem)
    }

    fn sem(op: SemOp, sem: &str) -> Self {
        let text = match op {
            SemOp::P => format!("p({sem})"),
            SemOp::V => format!("v({sem})"),
        };
        Statement {
            text,
            accesses: BTreeSet::new(),
            sem_call: Some((op, sem.to_string())),
            atomic_multi: false,
        }
    }

    pub fn accesses_shared(&self) -> bool {
        !self.accesses.is_empty()
    }
}

/// Ordered statements attached to one edge.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BasicBlock {
    pub statements: Vec<Statement>,
}

impl BasicBlock {
    pub fn new(statements: Vec<Statement>) -> Self {
        BasicBlock { statements }
    }

    /// Number of statements that touch shared variables.
    pub fn numsv(&self) -> usize {
        self.statements.iter().filter(|s| s.accesses_shared()).count()
    }

    /// Distinct shared variables touched by the whole block.
    pub fn shared_variables(&self) -> BTreeSet<&str> {
        self.statements
            .iter()
            .flat_map(|s| s.accesses.iter().map(String::as_str))
            .collect()
    }

    pub fn has_sem_call(&self) -> bool {
        self.statements.iter().any(|s| s.sem_call.is_some())
    }

    /// Label of an edge carrying this block.
    ///
    /// A lone semaphore call maps to `p(s)`/`v(s)`; any other block is named
    /// by its statements joined with `;` and classed SV when it touches a
    /// shared variable, NSV otherwise.
    pub fn label(&self) -> Label {
        if let [Statement {
            sem_call: Some((op, sem)),
            ..
        }] = self.statements.as_slice()
        {
            return match op {
                SemOp::P => Label::p(sem),
                SemOp::V => Label::v(sem),
            };
        }
        let name = self
            .statements
            .iter()
            .map(|s| s.text.as_str())
            .collect::<Vec<_>>()
            .join(";");
        if self.numsv() > 0 {
            Label::sv(&name)
        } else {
            Label::nsv(&name)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub block: BasicBlock,
}

/// Control flow graph with entry node 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cfg {
    pub node_count: usize,
    pub edges: Vec<Edge>,
}

impl Cfg {
    pub fn new(node_count: usize, edges: Vec<Edge>) -> Self {
        Cfg { node_count, edges }
    }

    /// Single chain `0 -> 1 -> … -> n` with one block per edge.
    pub fn chain(blocks: Vec<BasicBlock>) -> Self {
        let edges = blocks
            .into_iter()
            .enumerate()
            .map(|(k, block)| Edge {
                src: k,
                dst: k + 1,
                block,
            })
            .collect::<Vec<_>>();
        Cfg {
            node_count: edges.len() + 1,
            edges,
        }
    }

    pub const fn entry(&self) -> usize {
        0
    }

    pub fn out_degree(&self, node: usize) -> usize {
        self.edges.iter().filter(|e| e.src == node).count()
    }

    /// Checks entry reachability, the out-degree bound and block shape.
    pub fn validate(&self, thread: &str) -> Result<(), ModelError> {
        let mut adjacency = vec![Vec::new(); self.node_count];
        for e in &self.edges {
            if e.block.statements.is_empty() {
                return Err(ModelError::EmptyBlock {
                    thread: thread.to_string(),
                    src: e.src,
                    dst: e.dst,
                });
            }
            adjacency[e.src].push(e.dst);
        }
        for (node, succ) in adjacency.iter().enumerate() {
            if succ.len() > 2 {
                return Err(ModelError::OutDegree {
                    thread: thread.to_string(),
                    node,
                    degree: succ.len(),
                });
            }
        }
        let mut seen = vec![false; self.node_count];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(n) = stack.pop() {
            for &m in &adjacency[n] {
                if !seen[m] {
                    seen[m] = true;
                    stack.push(m);
                }
            }
        }
        if let Some(node) = seen.iter().position(|s| !s) {
            return Err(ModelError::Unreachable {
                thread: thread.to_string(),
                node,
            });
        }
        Ok(())
    }
}

/// Declared semaphore. Capacity 1 is a binary semaphore.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemaphoreSpec {
    pub id: String,
    pub capacity: usize,
}

/// Adjacency matrix of a semaphore: `capacity + 1` states counting held
/// permits, `p` on the superdiagonal and `v` on the subdiagonal.
pub fn semaphore_matrix(spec: &SemaphoreSpec) -> Result<SparseMatrix, ModelError> {
    if spec.capacity == 0 {
        return Err(ModelError::Capacity(spec.id.clone()));
    }
    let mut entries = Vec::with_capacity(2 * spec.capacity);
    for k in 0..spec.capacity {
        entries.push((k, k + 1, Label::p(&spec.id)));
        entries.push((k + 1, k, Label::v(&spec.id)));
    }
    Ok(SparseMatrix::from_triples(spec.capacity + 1, entries)?)
}

/// Adjacency matrix of a refined CFG.
pub fn thread_matrix(rcfg: &Cfg) -> Result<SparseMatrix, ModelError> {
    thread_matrix_named(rcfg, "")
}

fn thread_matrix_named(rcfg: &Cfg, thread: &str) -> Result<SparseMatrix, ModelError> {
    let entries = rcfg
        .edges
        .iter()
        .map(|e| (e.src, e.dst, e.block.label()))
        .collect();
    SparseMatrix::from_triples(rcfg.node_count, entries).map_err(|err| match err {
        AlgebraError::DuplicateEntry { row, col } => ModelError::DuplicateEdge {
            thread: thread.to_string(),
            src: row,
            dst: col,
        },
        other => other.into(),
    })
}

/// A thread after edge splitting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Thread {
    pub name: String,
    pub rcfg: Cfg,
    pub matrix: SparseMatrix,
}

impl Thread {
    /// Nodes with no outgoing edge.
    pub fn is_terminal(&self, node: usize) -> bool {
        self.matrix.out_degree(node) == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Semaphore {
    pub spec: SemaphoreSpec,
    pub matrix: SparseMatrix,
}

/// A validated system: threads (already refined), semaphores and the label
/// partition over everything that occurs in them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemModel {
    pub threads: Vec<Thread>,
    pub semaphores: Vec<Semaphore>,
    pub partition: LabelPartition,
}

impl SystemModel {
    /// Splits, validates and assembles a system from raw CFGs.
    pub fn new(
        threads: Vec<(String, Cfg)>,
        semaphores: Vec<SemaphoreSpec>,
    ) -> Result<Self, ModelError> {
        if threads.is_empty() {
            return Err(ModelError::NoThreads);
        }
        let mut names = BTreeSet::new();
        for name in threads
            .iter()
            .map(|(n, _)| n)
            .chain(semaphores.iter().map(|s| &s.id))
        {
            if !names.insert(name.as_str()) {
                return Err(ModelError::Redeclared(name.clone()));
            }
        }
        let sems = semaphores
            .into_iter()
            .map(|spec| {
                let matrix = semaphore_matrix(&spec)?;
                Ok(Semaphore { spec, matrix })
            })
            .collect::<Result<Vec<_>, ModelError>>()?;

        let mut built = Vec::with_capacity(threads.len());
        for (name, cfg) in threads {
            cfg.validate(&name)?;
            for e in &cfg.edges {
                for s in &e.block.statements {
                    if let Some((_, sem)) = &s.sem_call {
                        if !sems.iter().any(|d| &d.spec.id == sem) {
                            return Err(ModelError::UndeclaredSemaphore {
                                thread: name.clone(),
                                semaphore: sem.clone(),
                            });
                        }
                    }
                }
            }
            let rcfg = split_edges(&cfg);
            let matrix = thread_matrix_named(&rcfg, &name)?;
            built.push(Thread { name, rcfg, matrix });
        }

        let labels: Vec<Label> = built
            .iter()
            .flat_map(|t| t.matrix.labels().cloned())
            .chain(sems.iter().flat_map(|s| s.matrix.labels().cloned()))
            .collect();
        let partition = LabelPartition::from_labels(&labels);
        Ok(SystemModel {
            threads: built,
            semaphores: sems,
            partition,
        })
    }

    /// Orders of all components: threads first, then semaphores.
    pub fn radices(&self) -> Vec<usize> {
        self.threads
            .iter()
            .map(|t| t.matrix.order())
            .chain(self.semaphores.iter().map(|s| s.matrix.order()))
            .collect()
    }
}

impl fmt::Display for SystemModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.semaphores {
            writeln!(f, "semaphore {} capacity {}", s.spec.id, s.spec.capacity)?;
        }
        for t in &self.threads {
            writeln!(f, "thread {}", t.name)?;
            for e in &t.rcfg.edges {
                writeln!(f, "  edge {} -> {} : {}", e.src, e.dst, e.block.label())?;
            }
        }
        Ok(())
    }
}
