use super::{BasicBlock, Cfg, Edge, Statement};

/// Refines a CFG so that every edge accesses at most one shared variable
/// (except a lone atomic multi-variable statement) and every semaphore call
/// is the only statement on its edge.
///
/// Non-accessing statements travel with the next accessing statement;
/// trailing ones stay with the last. New interior nodes are numbered after
/// the existing ones in edge order. Concatenating the blocks of a split
/// chain gives back the original block.
pub fn split_edges(cfg: &Cfg) -> Cfg {
    let mut node_count = cfg.node_count;
    let mut edges = Vec::with_capacity(cfg.edges.len());
    for edge in &cfg.edges {
        let parts = split_block(&edge.block);
        let last = parts.len() - 1;
        let mut src = edge.src;
        for (k, block) in parts.into_iter().enumerate() {
            let dst = if k == last {
                edge.dst
            } else {
                node_count += 1;
                node_count - 1
            };
            edges.push(Edge { src, dst, block });
            src = dst;
        }
    }
    Cfg { node_count, edges }
}

fn split_block(block: &BasicBlock) -> Vec<BasicBlock> {
    let mut parts: Vec<Vec<Statement>> = Vec::new();
    // Whether the last part is a plain shared-access part that may absorb
    // following non-accessing statements.
    let mut open = false;
    let mut pending: Vec<Statement> = Vec::new();

    let flush = |parts: &mut Vec<Vec<Statement>>, pending: &mut Vec<Statement>, open: bool| {
        if pending.is_empty() {
            return;
        }
        match parts.last_mut() {
            Some(last) if open => last.append(pending),
            _ => parts.push(std::mem::take(pending)),
        }
    };

    for s in &block.statements {
        if s.sem_call.is_some() || s.atomic_multi {
            flush(&mut parts, &mut pending, open);
            parts.push(vec![s.clone()]);
            open = false;
        } else if s.accesses_shared() {
            let mut part = std::mem::take(&mut pending);
            part.push(s.clone());
            parts.push(part);
            open = true;
        } else {
            pending.push(s.clone());
        }
    }
    flush(&mut parts, &mut pending, open);
    if parts.is_empty() {
        parts.push(Vec::new());
    }
    parts.into_iter().map(BasicBlock::new).collect()
}
