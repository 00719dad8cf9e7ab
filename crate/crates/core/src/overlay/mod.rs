//! Pastry-style key-based routing.
//!
//! Ids are 32 hex digits (b = 4). Each node keeps a leaf set of its 8
//! circular neighbours and a 32 × 16 prefix routing table. Messages move one
//! node at a time, each hop either extending the shared prefix with the key
//! or, inside the leaf-set range, jumping straight to the closest node.

mod leaf_set;
mod node;
pub(crate) mod protocol;
mod routing_table;

pub use leaf_set::{LeafSet, LEAF_SET_SIZE};
pub use node::{NodeStatus, OverlayNode};
pub use protocol::{DepartureReport, JoinReport};
pub use routing_table::RoutingTable;

use thiserror::Error;

use crate::id::{IdError, NodeId};
use crate::simnet::SimError;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OverlayError {
    #[error(transparent)]
    Id(#[from] IdError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("node {0} already present")]
    DuplicateNode(NodeId),
    #[error("bootstrap {0} is not reachable")]
    BootstrapUnreachable(NodeId),
    #[error("a bootstrap node is required to join a non-empty network")]
    BootstrapRequired,
    #[error("no such node {0}")]
    NoSuchNode(NodeId),
    #[error("node {0} is not live")]
    NotLive(NodeId),
    #[error("routing failed after {} hops", path.len())]
    RoutingFailure { path: Vec<NodeId> },
    #[error("join of {0} did not complete")]
    JoinFailed(NodeId),
}

/// Upper bound on route length: one hop per digit, a leaf-set walk and the
/// final delivery.
pub const MAX_ROUTE_HOPS: usize = crate::id::DIGITS + LEAF_SET_SIZE / 2 + 1;
