//! Peer-to-peer deployment of software components.
//!
//! Layers, bottom up:
//!
//! * [`simnet`]: deterministic discrete-event transport standing in for IP;
//! * [`overlay`]: Pastry-style prefix routing over 128-bit ids;
//! * [`store`]: publish/lookup/remove of components keyed by name, with
//!   trail deposition, lookup-path caching and handoff on churn;
//! * [`repo`]: `p2p://` URIs, bundle descriptors, dependency resolution and
//!   a gateway lifecycle;
//! * [`cli`]: scenario runner and metrics documents.

pub mod cli;
pub mod id;
pub mod overlay;
pub mod repo;
pub mod simnet;
pub mod store;

pub use id::{derive_key, root_of, Id, Key, NodeId};
pub use overlay::{OverlayError, OverlayNode};
pub use simnet::{SimConfig, SimNetwork, Tick};
pub use store::{ComponentPayload, Role, StoreConfig, StoreError};
