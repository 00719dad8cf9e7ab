//! Key-addressed component storage.
//!
//! Each node keeps a [`Store`] of entries. A publish leaves a SOURCE copy on
//! the publisher, a ROOT copy on the node closest to the key and TRAIL
//! associations on every node in between. Lookups stop at the first node on
//! their path that knows the key and cache the payload on the way back.

pub(crate) mod protocol;

pub use protocol::{LookupResult, PublishTrail, RemovalReport};

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::id::{digest128, IdError, Key, NodeId};
use crate::simnet::{SimError, Tick};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StoreError {
    #[error(transparent)]
    Id(#[from] IdError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("node {0} is not live")]
    NotLive(NodeId),
    #[error("payload digest {found:032x} does not match declared {expected:032x}")]
    DigestMismatch { expected: u128, found: u128 },
    #[error("`{name}` is already published with different content")]
    VersionConflict { name: String },
    #[error("publish of `{name}` failed after {} hops; retry", path.len())]
    PublishFailed { name: String, path: Vec<NodeId> },
    #[error("`{name}` not found")]
    NotFound { name: String },
    #[error("`{name}` is known but every payload holder is unreachable")]
    Unavailable { name: String },
    #[error("lookup of `{name}` timed out after {} hops; retry", path.len())]
    LookupFailed { name: String, path: Vec<NodeId> },
    #[error("node {requester} does not own `{name}`")]
    NotOwner { name: String, requester: NodeId },
}

impl StoreError {
    /// Transient failures a caller may retry.
    pub fn is_retriable(&self) -> bool {
        matches!(
            self,
            StoreError::PublishFailed { .. } | StoreError::LookupFailed { .. }
        )
    }
}

/// Opaque archive bytes with their content digest.
#[derive(Clone, PartialEq, Eq)]
pub struct ComponentPayload {
    bytes: Arc<[u8]>,
    digest: u128,
}

impl ComponentPayload {
    pub fn new(bytes: impl Into<Arc<[u8]>>) -> Self {
        let bytes = bytes.into();
        let digest = digest128(&bytes);
        Self { bytes, digest }
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn digest(&self) -> u128 {
        self.digest
    }

    pub fn size(&self) -> usize {
        self.bytes.len()
    }

    /// Recomputes the digest from the bytes.
    pub fn is_intact(&self) -> bool {
        digest128(&self.bytes) == self.digest
    }
}

impl fmt::Debug for ComponentPayload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ComponentPayload")
            .field("digest", &format_args!("{:032x}", self.digest))
            .field("size", &self.bytes.len())
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Role {
    Source,
    Root,
    Trail,
    Cache,
    Retained,
}

impl Role {
    /// Pinned roles survive every eviction pass.
    pub fn is_pinned(self) -> bool {
        matches!(self, Role::Source | Role::Root | Role::Retained)
    }

    pub fn carries_payload(self) -> bool {
        self != Role::Trail
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Source => "SOURCE",
            Role::Root => "ROOT",
            Role::Trail => "TRAIL",
            Role::Cache => "CACHE",
            Role::Retained => "RETAINED",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoreConfig {
    /// Max TRAIL + CACHE entries per node.
    pub cache_capacity: usize,
    /// Idle time after which TRAIL/CACHE entries may be evicted.
    pub ttl: Tick,
    pub cache_on_lookup: bool,
}

impl Default for StoreConfig {
    fn default() -> Self {
        Self {
            cache_capacity: 64,
            ttl: 1000,
            cache_on_lookup: true,
        }
    }
}

/// A component's presence on one node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoreEntry {
    pub key: Key,
    pub name: String,
    pub role: Role,
    pub payload: Option<ComponentPayload>,
    /// Published content digest, kept even where the payload is absent.
    pub digest: u128,
    /// Original publisher.
    pub source: NodeId,
    /// Root at the time the entry was written; for TRAIL entries the first
    /// place to fetch the payload from.
    pub root: NodeId,
    pub last_access: Tick,
    pub hits: u64,
    pub deposited_at: Tick,
}

impl StoreEntry {
    pub fn with_payload(
        key: Key,
        name: &str,
        role: Role,
        payload: ComponentPayload,
        source: NodeId,
        root: NodeId,
        now: Tick,
    ) -> Self {
        debug_assert!(role.carries_payload());
        Self {
            key,
            name: name.to_string(),
            role,
            digest: payload.digest(),
            payload: Some(payload),
            source,
            root,
            last_access: now,
            hits: 0,
            deposited_at: now,
        }
    }

    pub fn trail(
        key: Key,
        name: &str,
        digest: u128,
        source: NodeId,
        root: NodeId,
        now: Tick,
    ) -> Self {
        Self {
            key,
            name: name.to_string(),
            role: Role::Trail,
            payload: None,
            digest,
            source,
            root,
            last_access: now,
            hits: 0,
            deposited_at: now,
        }
    }

    /// Nodes believed to hold the payload, root first.
    pub fn locations(&self) -> Vec<NodeId> {
        if self.root == self.source {
            vec![self.root]
        } else {
            vec![self.root, self.source]
        }
    }

    pub fn touch(&mut self, now: Tick) {
        self.last_access = self.last_access.max(now);
        self.hits += 1;
    }

    fn is_consistent(&self) -> bool {
        match self.role {
            Role::Trail => self.payload.is_none(),
            _ => self
                .payload
                .as_ref()
                .is_some_and(|p| p.digest() == self.digest),
        }
    }
}

/// One node's component store.
#[derive(Debug, Clone)]
pub struct Store {
    config: StoreConfig,
    entries: BTreeMap<Key, StoreEntry>,
    stored_bytes: usize,
}

impl Store {
    pub fn new(config: StoreConfig) -> Self {
        Self {
            config,
            entries: BTreeMap::new(),
            stored_bytes: 0,
        }
    }

    pub fn config(&self) -> &StoreConfig {
        &self.config
    }

    pub fn get(&self, key: &Key) -> Option<&StoreEntry> {
        self.entries.get(key)
    }

    pub fn get_mut(&mut self, key: &Key) -> Option<&mut StoreEntry> {
        self.entries.get_mut(key)
    }

    pub fn entries(&self) -> impl Iterator<Item = &StoreEntry> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn stored_bytes(&self) -> usize {
        self.stored_bytes
    }

    /// Writes `entry`, replacing any previous entry for its key.
    pub fn put(&mut self, entry: StoreEntry) {
        debug_assert!(entry.is_consistent(), "inconsistent entry {entry:?}");
        self.stored_bytes += entry.payload.as_ref().map_or(0, |p| p.size());
        if let Some(old) = self.entries.insert(entry.key, entry) {
            self.stored_bytes -= old.payload.as_ref().map_or(0, |p| p.size());
        }
    }

    pub fn take(&mut self, key: &Key) -> Option<StoreEntry> {
        let old = self.entries.remove(key)?;
        self.stored_bytes -= old.payload.as_ref().map_or(0, |p| p.size());
        Some(old)
    }

    /// Changes the role of an existing entry. Payload-bearing roles need a
    /// payload already in place.
    pub fn set_role(&mut self, key: &Key, role: Role) -> bool {
        match self.entries.get_mut(key) {
            Some(e) if e.payload.is_some() || role == Role::Trail => {
                if role == Role::Trail {
                    if let Some(p) = e.payload.take() {
                        self.stored_bytes -= p.size();
                    }
                }
                e.role = role;
                true
            }
            _ => false,
        }
    }

    fn unpinned_count(&self) -> usize {
        self.entries
            .values()
            .filter(|e| !e.role.is_pinned())
            .count()
    }

    /// Removes idle TRAIL/CACHE entries, then least-recently-used unpinned
    /// entries until the capacity bound holds. Pinned entries are never
    /// touched.
    pub fn evict(&mut self, now: Tick) -> Vec<Key> {
        let ttl = self.config.ttl;
        let mut victims: Vec<Key> = self
            .entries
            .values()
            .filter(|e| !e.role.is_pinned() && now.saturating_sub(e.last_access) > ttl)
            .map(|e| e.key)
            .collect();
        for key in &victims {
            self.drop_unpinned(key);
        }
        victims.extend(self.enforce_capacity());
        victims
    }

    /// LRU pass only; used right after inserting an unpinned entry.
    pub fn enforce_capacity(&mut self) -> Vec<Key> {
        let excess = self
            .unpinned_count()
            .saturating_sub(self.config.cache_capacity);
        if excess == 0 {
            return Vec::new();
        }
        let mut unpinned: Vec<(Tick, Key)> = self
            .entries
            .values()
            .filter(|e| !e.role.is_pinned())
            .map(|e| (e.last_access, e.key))
            .collect();
        unpinned.sort_unstable();
        let victims: Vec<Key> = unpinned.into_iter().take(excess).map(|(_, k)| k).collect();
        for key in &victims {
            self.drop_unpinned(key);
        }
        victims
    }

    fn drop_unpinned(&mut self, key: &Key) {
        let role = self.entries.get(key).map(|e| e.role);
        assert!(
            !role.is_some_and(Role::is_pinned),
            "eviction reached pinned {role:?} entry"
        );
        self.take(key);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::id::Id;

    fn payload(tag: u8) -> ComponentPayload {
        ComponentPayload::new(vec![tag; 16])
    }

    fn entry(key: u128, role: Role, at: Tick) -> StoreEntry {
        let k = Id::new(key);
        if role == Role::Trail {
            StoreEntry::trail(k, "x", payload(1).digest(), Id::new(1), Id::new(2), at)
        } else {
            StoreEntry::with_payload(k, "x", role, payload(1), Id::new(1), Id::new(2), at)
        }
    }

    fn store(capacity: usize) -> Store {
        Store::new(StoreConfig {
            cache_capacity: capacity,
            ttl: 1000,
            cache_on_lookup: true,
        })
    }

    #[test]
    fn pinned_entries_never_evicted() {
        let mut s = store(0);
        s.put(entry(1, Role::Root, 0));
        s.put(entry(2, Role::Source, 0));
        s.put(entry(3, Role::Retained, 0));
        assert!(s.evict(u64::MAX).is_empty());
        assert_eq!(s.len(), 3);
    }

    #[test]
    fn idle_trail_evicted_after_ttl() {
        let mut s = store(64);
        s.put(entry(1, Role::Trail, 0));
        assert!(s.evict(1000).is_empty());
        assert_eq!(s.evict(1001), vec![Id::new(1)]);
    }

    #[test]
    fn lru_eviction_at_capacity() {
        let mut s = store(2);
        s.put(entry(1, Role::Cache, 30));
        s.put(entry(2, Role::Cache, 10));
        s.put(entry(3, Role::Cache, 20));
        assert_eq!(s.evict(40), vec![Id::new(2)]);
        assert!(s.get(&Id::new(1)).is_some());
        assert!(s.get(&Id::new(3)).is_some());
    }

    #[test]
    fn byte_accounting_follows_payloads() {
        let mut s = store(4);
        s.put(entry(1, Role::Cache, 0));
        s.put(entry(2, Role::Trail, 0));
        assert_eq!(s.stored_bytes(), 16);
        s.put(entry(1, Role::Root, 0));
        assert_eq!(s.stored_bytes(), 16);
        s.take(&Id::new(1));
        assert_eq!(s.stored_bytes(), 0);
    }

    #[test]
    fn payload_digest_tracks_bytes() {
        let p = ComponentPayload::new(b"hello".to_vec());
        assert!(p.is_intact());
        assert_eq!(p.digest(), digest128(b"hello"));
        assert_eq!(p.size(), 5);
    }
}
