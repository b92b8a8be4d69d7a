//! Line-oriented system description format.
//!
//! ```text
//! # comment
//! semaphore s capacity 1
//! shared counter
//! thread T1
//!   node 0 1 2
//!   edge 0 -> 1 : p(s)
//!   edge 1 -> 2 : r:=counter reads counter; inc writes counter
//! ```
//!
//! Node ids are arbitrary tokens numbered in order of first mention; the
//! first node mentioned in a thread is its entry. A variable is shared when
//! it is declared `shared` or accessed by at least two threads.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::{BasicBlock, Cfg, Edge, ModelError, SemaphoreSpec, Statement, SystemModel};

struct RawStatement {
    text: String,
    vars: BTreeSet<String>,
    sem: Option<Statement>,
}

struct RawThread {
    name: String,
    nodes: HashMap<String, usize>,
    edges: Vec<(usize, usize, Vec<RawStatement>)>,
}

impl RawThread {
    fn node(&mut self, id: &str) -> usize {
        let next = self.nodes.len();
        *self.nodes.entry(id.to_string()).or_insert(next)
    }
}

fn err(line: usize, column: usize, message: impl Into<String>) -> ModelError {
    ModelError::Parse {
        line,
        column,
        message: message.into(),
    }
}

/// Column (1-based) of `part` inside `line`; `part` must be a subslice.
fn col(line: &str, part: &str) -> usize {
    (part.as_ptr() as usize).saturating_sub(line.as_ptr() as usize) + 1
}

fn is_ident(s: &str) -> bool {
    !s.is_empty()
        && s
            .chars()
            .all(|c| c.is_alphanumeric() || matches!(c, '_' | '.' | '-' | '[' | ']'))
}

/// Parses a system description into a validated, edge-split model.
pub fn parse_system(text: &str) -> Result<SystemModel, ModelError> {
    let mut semaphores: Vec<SemaphoreSpec> = Vec::new();
    let mut declared_shared: BTreeSet<String> = BTreeSet::new();
    let mut threads: Vec<RawThread> = Vec::new();

    for (lineno, raw_line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = raw_line.split('#').next().unwrap_or("");
        let mut words = line.split_whitespace();
        let Some(keyword) = words.next() else {
            continue;
        };
        match keyword {
            "semaphore" => {
                let parts: Vec<&str> = words.collect();
                match parts.as_slice() {
                    [id, "capacity", n] if is_ident(id) => {
                        let capacity = n.parse::<usize>().map_err(|_| {
                            err(lineno, col(raw_line, n), format!("invalid capacity `{n}`"))
                        })?;
                        if capacity == 0 {
                            return Err(err(lineno, col(raw_line, n), "capacity must be >= 1"));
                        }
                        semaphores.push(SemaphoreSpec {
                            id: id.to_string(),
                            capacity,
                        });
                    }
                    [id] if is_ident(id) => semaphores.push(SemaphoreSpec {
                        id: id.to_string(),
                        capacity: 1,
                    }),
                    _ => {
                        return Err(err(
                            lineno,
                            col(raw_line, keyword),
                            "expected `semaphore <id> capacity <n>`",
                        ))
                    }
                }
            }
            "shared" => {
                let rest = &line[col(line, keyword) - 1 + keyword.len()..];
                for var in rest.split(',').map(str::trim).filter(|v| !v.is_empty()) {
                    if !is_ident(var) {
                        return Err(err(lineno, col(raw_line, var), format!("invalid variable `{var}`")));
                    }
                    declared_shared.insert(var.to_string());
                }
            }
            "thread" => {
                let parts: Vec<&str> = words.collect();
                match parts.as_slice() {
                    [name] if is_ident(name) => threads.push(RawThread {
                        name: name.to_string(),
                        nodes: HashMap::new(),
                        edges: Vec::new(),
                    }),
                    _ => return Err(err(lineno, col(raw_line, keyword), "expected `thread <name>`")),
                }
            }
            "node" => {
                let thread = threads
                    .last_mut()
                    .ok_or_else(|| err(lineno, col(raw_line, keyword), "`node` outside a thread"))?;
                for id in words {
                    if !is_ident(id) {
                        return Err(err(lineno, col(raw_line, id), format!("invalid node id `{id}`")));
                    }
                    thread.node(id);
                }
            }
            "edge" => {
                let thread = threads
                    .last_mut()
                    .ok_or_else(|| err(lineno, col(raw_line, keyword), "`edge` outside a thread"))?;
                let after = &line[col(line, keyword) - 1 + keyword.len()..];
                let colon = after
                    .find(':')
                    .ok_or_else(|| err(lineno, col(raw_line, keyword), "expected `:` after edge endpoints"))?;
                let (head, body) = (&after[..colon], &after[colon + 1..]);
                let (src, dst) = head
                    .split_once("->")
                    .map(|(s, d)| (s.trim(), d.trim()))
                    .filter(|(s, d)| is_ident(s) && is_ident(d))
                    .ok_or_else(|| err(lineno, col(raw_line, head), "expected `<src> -> <dst>`"))?;
                let stmts = body
                    .split(';')
                    .map(|s| parse_statement(raw_line, lineno, s))
                    .collect::<Result<Vec<_>, _>>()?;
                let (src, dst) = (thread.node(src), thread.node(dst));
                thread.edges.push((src, dst, stmts));
            }
            other => {
                return Err(err(
                    lineno,
                    col(raw_line, other),
                    format!("unknown directive `{other}`"),
                ))
            }
        }
    }

    // Variables touched by two or more threads are shared.
    let mut users: BTreeMap<&str, BTreeSet<usize>> = BTreeMap::new();
    for (t, thread) in threads.iter().enumerate() {
        for (_, _, stmts) in &thread.edges {
            for s in stmts {
                for v in &s.vars {
                    users.entry(v).or_default().insert(t);
                }
            }
        }
    }
    let shared: BTreeSet<String> = users
        .into_iter()
        .filter(|(_, ts)| ts.len() >= 2)
        .map(|(v, _)| v.to_string())
        .chain(declared_shared)
        .collect();

    let cfgs = threads
        .into_iter()
        .map(|t| {
            let node_count = t.nodes.len().max(1);
            let edges = t
                .edges
                .into_iter()
                .map(|(src, dst, stmts)| Edge {
                    src,
                    dst,
                    block: BasicBlock::new(
                        stmts
                            .into_iter()
                            .map(|s| match s.sem {
                                Some(call) => call,
                                None => Statement::new(
                                    &s.text,
                                    s.vars.into_iter().filter(|v| shared.contains(v)),
                                ),
                            })
                            .collect(),
                    ),
                })
                .collect();
            (t.name, Cfg::new(node_count, edges))
        })
        .collect();
    SystemModel::new(cfgs, semaphores)
}

fn parse_statement(line: &str, lineno: usize, text: &str) -> Result<RawStatement, ModelError> {
    let mut words = text.split_whitespace();
    let head = words
        .next()
        .ok_or_else(|| err(lineno, col(line, text), "empty statement"))?;
    for (prefix, make) in [("p(", Statement::p as fn(&str) -> Statement), ("v(", Statement::v)] {
        if let Some(rest) = head.strip_prefix(prefix) {
            let sem = rest
                .strip_suffix(')')
                .filter(|s| is_ident(s))
                .ok_or_else(|| err(lineno, col(line, head), format!("malformed semaphore call `{head}`")))?;
            if let Some(extra) = words.next() {
                return Err(err(lineno, col(line, extra), "semaphore calls take no clauses"));
            }
            return Ok(RawStatement {
                text: head.to_string(),
                vars: BTreeSet::new(),
                sem: Some(make(sem)),
            });
        }
    }

    let mut vars = BTreeSet::new();
    let mut in_list = false;
    for w in words {
        match w {
            "reads" | "writes" => in_list = true,
            "atomic" => in_list = false,
            _ if in_list => {
                for v in w.split(',').filter(|v| !v.is_empty()) {
                    if !is_ident(v) {
                        return Err(err(lineno, col(line, w), format!("invalid variable `{v}`")));
                    }
                    vars.insert(v.to_string());
                }
            }
            _ => {
                return Err(err(
                    lineno,
                    col(line, w),
                    format!("unexpected `{w}` (expected reads, writes or atomic)"),
                ))
            }
        }
    }
    Ok(RawStatement {
        text: head.to_string(),
        vars,
        sem: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::Label;

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

    #[test]
    fn parses_mutual_exclusion() {
        let sys = parse_system(MUTEX).unwrap();
        assert_eq!(sys.threads.len(), 2);
        assert_eq!(sys.semaphores.len(), 1);
        assert_eq!(sys.semaphores[0].matrix.order(), 2);
        assert_eq!(
            sys.threads[0].matrix.to_dense_names(),
            vec![
                vec!["0", "p(s1)", "0", "0"],
                vec!["0", "0", "a", "0"],
                vec!["0", "0", "0", "v(s1)"],
                vec!["0", "0", "0", "0"],
            ]
        );
        assert!(sys.partition.sv_labels().contains(&Label::sv("a")));
        assert!(sys.partition.sync_labels().contains(&Label::p("s1")));
        assert_eq!(sys.radices(), vec![4, 4, 2]);
    }

    #[test]
    fn single_edge_thread_without_semaphores() {
        let sys = parse_system("thread t\n edge start -> end : work\n").unwrap();
        assert_eq!(sys.threads[0].matrix.order(), 2);
        assert_eq!(sys.threads[0].matrix.get(0, 1), Some(&Label::nsv("work")));
        assert!(sys.semaphores.is_empty());
    }

    #[test]
    fn variables_used_by_one_thread_are_local() {
        let sys = parse_system(
            "thread a\n edge 0 -> 1 : x writes v\nthread b\n edge 0 -> 1 : y writes w\n",
        )
        .unwrap();
        assert!(sys.partition.sv_labels().is_empty());
        let sys = parse_system("shared v\nthread a\n edge 0 -> 1 : x writes v\n").unwrap();
        assert!(sys.partition.sv_labels().contains(&Label::sv("x")));
    }

    #[test]
    fn edges_are_split_while_parsing() {
        let sys = parse_system(
            "semaphore s\nshared sv\nthread T2\n  edge 0 -> 1 : t:=sv reads sv; p(s); t:=t+1; sv:=t writes sv; v(s)\n",
        )
        .unwrap();
        let t = &sys.threads[0];
        assert_eq!(t.matrix.order(), 5);
        let labels: Vec<_> = t.rcfg.edges.iter().map(|e| e.block.label()).collect();
        assert_eq!(
            labels,
            vec![
                Label::sv("t:=sv"),
                Label::p("s"),
                Label::sv("t:=t+1;sv:=t"),
                Label::v("s")
            ]
        );
    }

    #[test]
    fn reports_positions() {
        let e = parse_system("thread t\n  edge 0 -> 1 : p(s\n").unwrap_err();
        assert_eq!(
            e,
            ModelError::Parse {
                line: 2,
                column: 17,
                message: "malformed semaphore call `p(s`".into()
            }
        );
        let e = parse_system("edge 0 -> 1 : a\n").unwrap_err();
        assert!(matches!(e, ModelError::Parse { line: 1, column: 1, .. }));
        let e = parse_system("thread t\n  frobnicate\n").unwrap_err();
        assert!(matches!(e, ModelError::Parse { line: 2, column: 3, .. }));
        let e = parse_system("thread t\n  edge 0 -> 1 : a bogus x\n").unwrap_err();
        assert!(matches!(e, ModelError::Parse { line: 2, .. }));
        let e = parse_system("semaphore s capacity 0\n").unwrap_err();
        assert!(matches!(e, ModelError::Parse { line: 1, column: 22, .. }));
    }

    #[test]
    fn validation_failures_surface() {
        assert!(matches!(
            parse_system("thread t\n edge 0 -> 1 : p(s)\n"),
            Err(ModelError::UndeclaredSemaphore { .. })
        ));
        assert!(matches!(
            parse_system("thread t\n node 0 1 2\n edge 0 -> 1 : a\n"),
            Err(ModelError::Unreachable { node: 2, .. })
        ));
        assert!(matches!(
            parse_system("thread t\n edge 0 -> 1 : a\n edge 0 -> 2 : b\n edge 0 -> 3 : c\n"),
            Err(ModelError::OutDegree { .. })
        ));
        assert!(matches!(
            parse_system("thread t\n edge 0 -> 1 : a\n edge 0 -> 1 : b\n"),
            Err(ModelError::DuplicateEdge { .. })
        ));
        assert_eq!(parse_system("# nothing\n"), Err(ModelError::NoThreads));
    }

    #[test]
    fn comments_blank_lines_and_lone_threads() {
        let sys = parse_system("\n# header\nthread idle # no edges\n").unwrap();
        assert_eq!(sys.threads[0].matrix.order(), 1);
    }
}
