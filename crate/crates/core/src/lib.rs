//! Concurrent Program Graphs for semaphore-synchronized shared-memory programs.
//!
//! Threads and semaphores are control flow graphs turned into label
//! matrices. Kronecker sums interleave them, a selective Kronecker product
//! synchronizes P/V calls, and the reachable part of the result is the
//! Concurrent Program Graph (CPG), built lazily from the entry node.

pub mod kronecker;
pub mod labels;
pub mod model;
pub mod cpg;
pub mod reduce;
pub mod verify;
pub mod oracle;
pub mod bench;
