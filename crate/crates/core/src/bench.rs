//! Client-server scaling benchmark.
//!
//! Each client loops through `p(s)`, a write to the shared `server`
//! variable and `v(s)`; `s` is a binary semaphore. The CPG grows linearly
//! (2k + 1 nodes, 3k edges) while the composed order is 2·3^k.

use serde::Serialize;

use crate::cpg::{build_system_cpg, stats, BuildOptions, CpgError, CpgStats};
use crate::model::{BasicBlock, Cfg, Edge, SemaphoreSpec, Statement, SystemModel};

pub fn client_server_system(clients: usize) -> SystemModel {
    assert!(clients >= 1);
    let client = Cfg::new(
        3,
        vec![
            Edge {
                src: 0,
                dst: 1,
                block: BasicBlock::new(vec![Statement::p("s")]),
            },
            Edge {
                src: 1,
                dst: 2,
                block: BasicBlock::new(vec![Statement::new("a", ["server"])]),
            },
            Edge {
                src: 2,
                dst: 0,
                block: BasicBlock::new(vec![Statement::v("s")]),
            },
        ],
    );
    let threads = (1..=clients)
        .map(|k| (format!("client{k}"), client.clone()))
        .collect();
    let sem = SemaphoreSpec {
        id: "s".into(),
        capacity: 1,
    };
    SystemModel::new(threads, vec![sem]).expect("client-server system is valid")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub clients: usize,
    #[serde(flatten)]
    pub stats: CpgStats,
}

pub fn bench_client_server(clients: usize, options: &BuildOptions) -> Result<BenchRow, CpgError> {
    let cpg = build_system_cpg(&client_server_system(clients), options)?;
    Ok(BenchRow {
        clients,
        stats: stats(&cpg),
    })
}
