//! Per-gateway bundle container.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{
    parse_uri, resolve_with_base, BundleLocation, ComponentDescriptor, InstallPlan, RepoError,
    RepositoryIndex,
};
use crate::id::NodeId;
use crate::simnet::SimNetwork;
use crate::store::{ComponentPayload, PublishTrail, StoreError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LifecycleState {
    Installed,
    Active,
}

impl LifecycleState {
    pub fn as_str(self) -> &'static str {
        match self {
            LifecycleState::Installed => "INSTALLED",
            LifecycleState::Active => "ACTIVE",
        }
    }
}

impl fmt::Display for LifecycleState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
struct InstalledBundle {
    descriptor: ComponentDescriptor,
    state: LifecycleState,
    payload: ComponentPayload,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstallReport {
    pub bundle: String,
    /// Bundles that still needed fetching, in install order.
    pub plan: InstallPlan,
    pub fetched: Vec<String>,
    /// Forward hops of each fetch, parallel to `fetched`.
    pub hops: Vec<usize>,
}

/// One gateway: an overlay node plus the bundles installed on it.
#[derive(Debug, Clone)]
pub struct GatewayState {
    node: NodeId,
    index: RepositoryIndex,
    base_exports: BTreeSet<String>,
    installed: BTreeMap<String, InstalledBundle>,
}

impl GatewayState {
    pub fn new(node: NodeId) -> Self {
        Self {
            node,
            index: RepositoryIndex::new(),
            base_exports: BTreeSet::new(),
            installed: BTreeMap::new(),
        }
    }

    pub fn with_base_exports<I, S>(mut self, packages: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.base_exports = packages.into_iter().map(Into::into).collect();
        self
    }

    pub fn node(&self) -> NodeId {
        self.node
    }

    pub fn index(&self) -> &RepositoryIndex {
        &self.index
    }

    /// Adds or replaces descriptors from an index received out-of-band.
    pub fn merge_index(&mut self, other: &RepositoryIndex) {
        for d in other.entries() {
            self.index.upsert(d.clone());
        }
    }

    pub fn state(&self, name: &str) -> Option<LifecycleState> {
        self.installed.get(name).map(|b| b.state)
    }

    pub fn installed(&self) -> impl Iterator<Item = (&str, LifecycleState)> {
        self.installed.iter().map(|(n, b)| (n.as_str(), b.state))
    }

    pub fn payload(&self, name: &str) -> Option<&ComponentPayload> {
        self.installed.get(name).map(|b| &b.payload)
    }

    /// Packages currently provided by the platform or installed bundles.
    fn provided(&self) -> BTreeSet<String> {
        let mut out = self.base_exports.clone();
        for b in self.installed.values() {
            out.extend(b.descriptor.exports.iter().cloned());
        }
        out
    }

    fn is_provided(&self, package: &str, excluding: Option<&str>) -> bool {
        self.base_exports.contains(package)
            || self
                .installed
                .iter()
                .filter(|(n, _)| Some(n.as_str()) != excluding)
                .any(|(_, b)| b.descriptor.exports.iter().any(|e| e == package))
    }

    /// Resolves `uri_text`, fetches every missing bundle through the overlay
    /// and marks them INSTALLED. Nothing is installed if any fetch fails.
    pub fn install(
        &mut self,
        net: &mut SimNetwork,
        uri_text: &str,
    ) -> Result<InstallReport, RepoError> {
        let uri = match parse_uri(uri_text)? {
            BundleLocation::P2p(uri) => uri,
            BundleLocation::Passthrough(other) => return Err(RepoError::Passthrough(other)),
        };
        if !net.is_live(self.node) {
            return Err(StoreError::NotLive(self.node).into());
        }
        let name = uri.bundle_name().to_string();
        let mut report = InstallReport {
            bundle: name.clone(),
            plan: InstallPlan::default(),
            fetched: Vec::new(),
            hops: Vec::new(),
        };
        if self.installed.contains_key(&name) {
            return Ok(report);
        }
        let plan = resolve_with_base(&self.index, &name, &self.provided())?;

        let mut staged: Vec<InstalledBundle> = Vec::new();
        for bundle in plan.order() {
            if self.installed.contains_key(bundle) {
                continue;
            }
            let descriptor = self.index.get(bundle).expect("resolved from index").clone();
            let found =
                net.lookup(self.node, bundle)
                    .map_err(|cause| RepoError::InstallAborted {
                        bundle: name.clone(),
                        dependency: bundle.to_string(),
                        cause,
                    })?;
            let payload = found.payload;
            let actual = crate::id::digest128(payload.bytes());
            if actual != descriptor.digest || payload.digest() != descriptor.digest {
                return Err(RepoError::Integrity {
                    name: bundle.to_string(),
                    expected: descriptor.digest,
                    found: actual,
                });
            }
            report.fetched.push(bundle.to_string());
            report.hops.push(found.hops);
            staged.push(InstalledBundle {
                descriptor,
                state: LifecycleState::Installed,
                payload,
            });
        }
        for b in staged {
            self.installed.insert(b.descriptor.name.clone(), b);
        }
        report.plan = plan;
        Ok(report)
    }

    fn lifecycle_error(
        &self,
        name: &str,
        action: &'static str,
        reason: impl Into<String>,
    ) -> RepoError {
        RepoError::Lifecycle {
            name: name.to_string(),
            action,
            state: self.state(name),
            reason: reason.into(),
        }
    }

    pub fn start(&mut self, name: &str) -> Result<LifecycleState, RepoError> {
        let Some(b) = self.installed.get(name) else {
            return Err(self.lifecycle_error(name, "start", "bundle is not installed"));
        };
        if b.state == LifecycleState::Active {
            return Err(self.lifecycle_error(name, "start", "bundle is already active"));
        }
        if let Some(missing) = b
            .descriptor
            .imports
            .iter()
            .find(|p| !self.is_provided(p, None))
        {
            let reason = format!("no installed provider for `{missing}`");
            return Err(self.lifecycle_error(name, "start", reason));
        }
        self.installed.get_mut(name).expect("checked").state = LifecycleState::Active;
        Ok(LifecycleState::Active)
    }

    pub fn stop(&mut self, name: &str) -> Result<LifecycleState, RepoError> {
        match self.installed.get_mut(name) {
            Some(b) if b.state == LifecycleState::Active => {
                b.state = LifecycleState::Installed;
                Ok(LifecycleState::Installed)
            }
            Some(_) => Err(self.lifecycle_error(name, "stop", "bundle is not active")),
            None => Err(self.lifecycle_error(name, "stop", "bundle is not installed")),
        }
    }

    pub fn uninstall(&mut self, name: &str) -> Result<(), RepoError> {
        let Some(b) = self.installed.get(name) else {
            return Err(self.lifecycle_error(name, "uninstall", "bundle is not installed"));
        };
        if b.state == LifecycleState::Active {
            return Err(self.lifecycle_error(name, "uninstall", "bundle is active; stop it first"));
        }
        for (dependent, d) in &self.installed {
            if dependent == name || d.state != LifecycleState::Active {
                continue;
            }
            let orphaned = d
                .descriptor
                .imports
                .iter()
                .find(|p| b.descriptor.exports.contains(p) && !self.is_provided(p, Some(name)));
            if let Some(p) = orphaned {
                let reason =
                    format!("active bundle `{dependent}` needs `{p}` which only it exports");
                return Err(self.lifecycle_error(name, "uninstall", reason));
            }
        }
        self.installed.remove(name);
        Ok(())
    }

    /// Publishes a bundle from this gateway's node and records its
    /// descriptor locally.
    pub fn publish_local(
        &mut self,
        net: &mut SimNetwork,
        mut descriptor: ComponentDescriptor,
        payload: ComponentPayload,
    ) -> Result<PublishTrail, RepoError> {
        let actual = crate::id::digest128(payload.bytes());
        if actual != descriptor.digest || payload.digest() != descriptor.digest {
            return Err(RepoError::Integrity {
                name: descriptor.name,
                expected: descriptor.digest,
                found: actual,
            });
        }
        if descriptor.size != payload.size() as u64 {
            return Err(RepoError::InvalidDescriptor(format!(
                "`{}` declares {} bytes but the payload has {}",
                descriptor.name,
                descriptor.size,
                payload.size()
            )));
        }
        descriptor.source_uri = format!("{}{}", super::SCHEME_PREFIX, descriptor.name);
        descriptor.validate()?;
        let trail = net.publish(self.node, &descriptor.name, payload)?;
        self.index.upsert(descriptor);
        Ok(trail)
    }

    /// True when every ACTIVE bundle has each import provided.
    pub fn is_consistent(&self) -> bool {
        self.installed
            .values()
            .filter(|b| b.state == LifecycleState::Active)
            .all(|b| {
                b.descriptor
                    .imports
                    .iter()
                    .all(|p| self.is_provided(p, None))
            })
    }
}
