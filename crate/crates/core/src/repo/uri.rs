use std::fmt;
use std::str::FromStr;

use super::RepoError;

pub const SCHEME_PREFIX: &str = "p2p://";

/// `p2p://<bundleName>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct P2pUri {
    bundle_name: String,
}

impl P2pUri {
    pub fn new(bundle_name: &str) -> Result<Self, RepoError> {
        if bundle_name.is_empty() || bundle_name.contains('/') {
            return Err(RepoError::MalformedUri(format!(
                "{SCHEME_PREFIX}{bundle_name}"
            )));
        }
        Ok(Self {
            bundle_name: bundle_name.to_string(),
        })
    }

    pub fn bundle_name(&self) -> &str {
        &self.bundle_name
    }
}

impl fmt::Display for P2pUri {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{SCHEME_PREFIX}{}", self.bundle_name)
    }
}

/// Result of looking at a bundle location.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BundleLocation {
    P2p(P2pUri),
    /// Some other scheme; fetched by whatever handles it, not by the overlay.
    Passthrough(String),
}

pub fn parse_uri(text: &str) -> Result<BundleLocation, RepoError> {
    if let Some(rest) = text.strip_prefix(SCHEME_PREFIX) {
        return P2pUri::new(rest).map(BundleLocation::P2p);
    }
    if text.starts_with("p2p:") {
        return Err(RepoError::MalformedUri(text.to_string()));
    }
    Ok(BundleLocation::Passthrough(text.to_string()))
}

impl FromStr for P2pUri {
    type Err = RepoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match parse_uri(s)? {
            BundleLocation::P2p(uri) => Ok(uri),
            BundleLocation::Passthrough(other) => Err(RepoError::Passthrough(other)),
        }
    }
}
