//! OSGi-like repository layer on top of the component store.
//!
//! Bundles are addressed by `p2p://<name>` URIs. A gateway keeps a
//! [`RepositoryIndex`] of descriptors (shipped to it out-of-band), resolves
//! import/export dependencies against it and fetches each archive through the
//! overlay before marking it installed.

mod descriptor;
mod gateway;
mod resolve;
mod uri;

pub use descriptor::{ComponentDescriptor, ParseError, RepositoryIndex, Version};
pub use gateway::{GatewayState, InstallReport, LifecycleState};
pub use resolve::{resolve, resolve_with_base, InstallGroup, InstallPlan};
pub use uri::{parse_uri, BundleLocation, P2pUri, SCHEME_PREFIX};

use thiserror::Error;

use crate::store::StoreError;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RepoError {
    #[error("malformed uri `{0}`")]
    MalformedUri(String),
    #[error("`{0}` is not a p2p:// uri; fetch it elsewhere")]
    Passthrough(String),
    #[error("unknown bundle `{0}`")]
    UnknownBundle(String),
    #[error("`{bundle}` imports `{package}` which nothing exports")]
    Unresolvable { bundle: String, package: String },
    #[error("invalid descriptor: {0}")]
    InvalidDescriptor(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("integrity error on `{name}`: expected digest {expected:032x}, got {found:032x}")]
    Integrity {
        name: String,
        expected: u128,
        found: u128,
    },
    #[error(
        "install of `{bundle}` aborted: dependency `{dependency}` could not be fetched: {cause}"
    )]
    InstallAborted {
        bundle: String,
        dependency: String,
        cause: StoreError,
    },
    #[error("cannot {action} `{name}`: {reason} (current state: {})", state.map_or("UNINSTALLED", LifecycleState::as_str))]
    Lifecycle {
        name: String,
        action: &'static str,
        state: Option<LifecycleState>,
        reason: String,
    },
    #[error(transparent)]
    Store(#[from] StoreError),
}
