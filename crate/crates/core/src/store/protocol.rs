//! Store message handlers and blocking drivers.
//!
//! publish: the payload is routed from the source to the root; the root's
//! acknowledgement walks the path backwards and leaves a TRAIL association
//! on every intermediate node.
//!
//! lookup: routed from the client toward the root; the first node holding
//! any entry for the key answers. A TRAIL holder fetches the payload from
//! the root (then the source). The reply retraces the lookup path and, with
//! caching on, leaves a CACHE copy on every node except the client.

use super::{ComponentPayload, Role, StoreEntry, StoreError};
use crate::id::{derive_key, root_of, Key, NodeId};
use crate::overlay::protocol::{drop_peer, fail_op};
use crate::overlay::OverlayNode;
use crate::simnet::{Body, Fabric, Message, OpId, OpOutcome, SimNetwork, Tick};

/// Where a publish went.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublishTrail {
    pub key: Key,
    pub source: NodeId,
    pub root: NodeId,
    /// Source first, root last.
    pub path: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LookupResult {
    pub payload: ComponentPayload,
    pub served_by: NodeId,
    /// Forward hops from the client to `served_by`.
    pub hops: usize,
    /// Forward path, client first.
    pub path: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RemovalReport {
    pub key: Key,
    pub name: String,
}

#[derive(Debug, Clone)]
pub struct PublishMsg {
    pub op: OpId,
    pub key: Key,
    pub name: String,
    pub payload: ComponentPayload,
    pub source: NodeId,
    pub path: Vec<NodeId>,
    pub retries: u8,
    /// The source had no pinned entry before this publish.
    pub fresh_source: bool,
}

#[derive(Debug, Clone)]
pub struct PublishAckMsg {
    pub op: OpId,
    pub key: Key,
    pub name: String,
    pub digest: u128,
    pub source: NodeId,
    pub root: NodeId,
    pub path: Vec<NodeId>,
    /// Index in `path` of the node this ack is addressed to.
    pub back: usize,
}

#[derive(Debug, Clone)]
pub struct LookupMsg {
    pub op: OpId,
    pub key: Key,
    pub client: NodeId,
    pub path: Vec<NodeId>,
    /// A trail on the path pointed at holders that all timed out.
    pub unreachable: bool,
    pub retries: u8,
}

#[derive(Debug, Clone)]
pub struct LookupReplyMsg {
    pub op: OpId,
    pub key: Key,
    pub name: String,
    pub payload: ComponentPayload,
    pub source: NodeId,
    pub root: NodeId,
    pub served_by: NodeId,
    pub hops: usize,
    pub path: Vec<NodeId>,
    pub back: usize,
}

#[derive(Debug, Clone)]
pub struct RemoveMsg {
    pub op: OpId,
    pub key: Key,
    pub requester: NodeId,
    pub path: Vec<NodeId>,
    pub retries: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RemoveOutcome {
    Removed,
    NotOwner,
    NotFound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransferReason {
    /// A closer node appeared; the sender keeps a RETAINED copy.
    Handoff,
    /// The sender is leaving.
    Departure,
}

#[derive(Debug, Clone)]
pub struct TransferMsg {
    pub key: Key,
    pub name: String,
    pub payload: ComponentPayload,
    pub source: NodeId,
    pub reason: TransferReason,
    pub attempt: u8,
}

pub(crate) fn on_start(node: &mut OverlayNode, fab: &mut Fabric, body: Body) {
    match body {
        Body::Publish(m) => start_publish(node, fab, m),
        Body::Lookup(mut m) => {
            m.path.push(node.id);
            serve_or_forward(node, fab, m);
        }
        Body::Remove(m) => start_remove(node, fab, m),
        _ => unreachable!("not a store operation"),
    }
}

pub(crate) fn on_message(node: &mut OverlayNode, fab: &mut Fabric, msg: Message) {
    let from = msg.from;
    match msg.body {
        Body::Publish(mut m) => {
            m.path.push(node.id);
            m.retries = 0;
            forward_publish(node, fab, m);
        }
        Body::PublishAck(ack) => on_publish_ack(node, fab, ack),
        Body::PublishNack { op, key, rollback } => {
            // only the source receives nacks
            rollback_source(node, key, rollback);
            fab.complete(op, OpOutcome::PublishConflict);
        }
        Body::Lookup(mut m) => {
            m.path.push(node.id);
            m.retries = 0;
            serve_or_forward(node, fab, m);
        }
        Body::Fetch {
            lookup,
            remaining,
            unreachable,
        } => {
            let now = fab.now();
            let payload = node.store.get_mut(&lookup.key).and_then(|e| {
                let p = e.payload.clone()?;
                e.touch(now);
                Some(p)
            });
            fab.send(
                node.id,
                from,
                Body::FetchReply {
                    lookup,
                    remaining,
                    unreachable,
                    payload,
                },
            );
        }
        Body::FetchReply {
            lookup,
            remaining,
            payload,
            ..
        } => match payload {
            Some(p) => {
                cache_copy(node, fab, &lookup.key, &p, None);
                let (source, root) = entry_origin(node, &lookup.key);
                reply_found(node, fab, lookup, p, source, root);
            }
            // an explicit miss means the association is stale, not unreachable
            None => try_next_location(node, fab, lookup, remaining, false),
        },
        Body::LookupReply(r) => on_lookup_reply(node, fab, r),
        Body::LookupMiss {
            op,
            unavailable,
            path,
        } => fab.complete(op, OpOutcome::Missing { unavailable, path }),
        Body::Remove(mut m) => {
            m.path.push(node.id);
            m.retries = 0;
            forward_remove(node, fab, m);
        }
        Body::RemoveReply { op, key, outcome } => finish_remove(node, fab, op, key, outcome),
        Body::Transfer(t) => on_transfer(node, fab, from, t),
        Body::TransferAck { key, reason } => {
            if reason == TransferReason::Handoff {
                demote(node, &key);
            }
        }
        _ => unreachable!("overlay message routed to store handler"),
    }
}

pub(crate) fn on_timeout(node: &mut OverlayNode, fab: &mut Fabric, msg: Message) {
    let dead = msg.to;
    let max_retries = fab.config().max_retries;
    match msg.body {
        Body::Publish(mut m) => {
            drop_peer(node, fab, dead);
            if m.retries < max_retries {
                m.retries += 1;
                forward_publish(node, fab, m);
            } else {
                fail_op(node, fab, m.op, m.path);
            }
        }
        Body::PublishAck(mut ack) => {
            drop_peer(node, fab, dead);
            if ack.back > 0 {
                ack.back -= 1;
                let to = ack.path[ack.back];
                fab.send(node.id, to, Body::PublishAck(ack));
            }
        }
        Body::Lookup(mut m) => {
            drop_peer(node, fab, dead);
            if m.retries < max_retries {
                m.retries += 1;
                forward_lookup(node, fab, m);
            } else {
                fail_op(node, fab, m.op, m.path);
            }
        }
        Body::Fetch {
            lookup,
            remaining,
            unreachable,
        } => {
            drop_peer(node, fab, dead);
            try_next_location(node, fab, lookup, remaining, unreachable);
        }
        Body::LookupReply(mut r) => {
            drop_peer(node, fab, dead);
            if r.back > 0 {
                r.back -= 1;
                let to = r.path[r.back];
                fab.send(node.id, to, Body::LookupReply(r));
            }
        }
        Body::Remove(mut m) => {
            drop_peer(node, fab, dead);
            if m.retries < max_retries {
                m.retries += 1;
                forward_remove(node, fab, m);
            } else {
                fail_op(node, fab, m.op, m.path);
            }
        }
        Body::Transfer(mut t) => {
            if t.attempt == 0 {
                t.attempt = 1;
                let retry_to = match t.reason {
                    TransferReason::Handoff => Some(dead),
                    TransferReason::Departure => {
                        drop_peer(node, fab, dead);
                        root_of(node.leaf_set.members(), t.key).ok()
                    }
                };
                if let Some(to) = retry_to {
                    fab.send(node.id, to, Body::Transfer(t));
                    return;
                }
            }
            drop_peer(node, fab, dead);
            // a handoff that never lands leaves this node as root
            let owner = match t.reason {
                TransferReason::Handoff => dead,
                TransferReason::Departure => node.id,
            };
            fab.join_log(owner).unresolved.push(t.key);
        }
        _ => {}
    }
}

fn start_publish(node: &mut OverlayNode, fab: &mut Fabric, mut m: PublishMsg) {
    let now = fab.now();
    let digest = m.payload.digest();
    match node.store.get_mut(&m.key) {
        Some(e) if e.role.is_pinned() && e.digest != digest => {
            fab.complete(m.op, OpOutcome::PublishConflict);
            return;
        }
        Some(e) if e.role.is_pinned() => {
            e.last_access = now;
            m.fresh_source = false;
        }
        _ => {
            node.store.put(StoreEntry::with_payload(
                m.key,
                &m.name,
                Role::Source,
                m.payload.clone(),
                node.id,
                node.id,
                now,
            ));
            m.fresh_source = true;
        }
    }
    m.path.push(node.id);
    forward_publish(node, fab, m);
}

fn forward_publish(node: &mut OverlayNode, fab: &mut Fabric, m: PublishMsg) {
    let hop = node.next_hop(m.key);
    if hop != node.id {
        if m.path.contains(&hop) {
            fail_op(node, fab, m.op, m.path);
        } else {
            fab.send(node.id, hop, Body::Publish(m));
        }
        return;
    }

    // this node is the root
    let now = fab.now();
    let digest = m.payload.digest();
    if let Some(e) = node.store.get(&m.key) {
        if e.role.is_pinned() && e.digest != digest {
            if m.source == node.id {
                rollback_source(node, m.key, m.fresh_source);
                fab.complete(m.op, OpOutcome::PublishConflict);
            } else {
                fab.send(
                    node.id,
                    m.source,
                    Body::PublishNack {
                        op: m.op,
                        key: m.key,
                        rollback: m.fresh_source,
                    },
                );
            }
            return;
        }
    }
    let source = match node.store.get(&m.key) {
        // an existing pinned copy keeps its recorded publisher
        Some(e) if e.role.is_pinned() && e.digest == digest => e.source,
        _ => m.source,
    };
    let hits = node.store.get(&m.key).map_or(0, |e| e.hits);
    let mut entry =
        StoreEntry::with_payload(m.key, &m.name, Role::Root, m.payload, source, node.id, now);
    entry.hits = hits;
    node.store.put(entry);

    let trail = PublishTrail {
        key: m.key,
        source: m.source,
        root: node.id,
        path: m.path.clone(),
    };
    if m.path.len() == 1 {
        fab.complete(m.op, OpOutcome::Published(trail));
        return;
    }
    let back = m.path.len() - 2;
    let to = m.path[back];
    fab.send(
        node.id,
        to,
        Body::PublishAck(PublishAckMsg {
            op: m.op,
            key: m.key,
            name: m.name,
            digest,
            source: m.source,
            root: node.id,
            path: m.path,
            back,
        }),
    );
}

fn on_publish_ack(node: &mut OverlayNode, fab: &mut Fabric, mut ack: PublishAckMsg) {
    let now = fab.now();
    if ack.back == 0 {
        if let Some(e) = node.store.get_mut(&ack.key) {
            if e.role == Role::Source {
                e.root = ack.root;
            }
        }
        fab.complete(
            ack.op,
            OpOutcome::Published(PublishTrail {
                key: ack.key,
                source: ack.source,
                root: ack.root,
                path: ack.path,
            }),
        );
        return;
    }

    match node.store.get_mut(&ack.key) {
        Some(e) if e.digest == ack.digest => {
            if e.role == Role::Trail {
                e.source = ack.source;
                e.root = ack.root;
            }
            e.last_access = now;
        }
        Some(e) if e.role.is_pinned() => {}
        _ => {
            node.store.put(StoreEntry::trail(
                ack.key, &ack.name, ack.digest, ack.source, ack.root, now,
            ));
            node.store.enforce_capacity();
        }
    }
    ack.back -= 1;
    let to = ack.path[ack.back];
    fab.send(node.id, to, Body::PublishAck(ack));
}

fn rollback_source(node: &mut OverlayNode, key: Key, fresh: bool) {
    if fresh && node.store.get(&key).is_some_and(|e| e.role == Role::Source) {
        node.store.take(&key);
    }
}

fn serve_or_forward(node: &mut OverlayNode, fab: &mut Fabric, m: LookupMsg) {
    let now = fab.now();
    if let Some(e) = node.store.get_mut(&m.key) {
        e.touch(now);
        match e.payload.clone() {
            Some(p) => {
                let (source, root) = (e.source, e.root);
                reply_found(node, fab, m, p, source, root);
            }
            None => {
                let remaining: Vec<NodeId> = e
                    .locations()
                    .into_iter()
                    .filter(|&l| l != node.id)
                    .collect();
                try_next_location(node, fab, m, remaining, true);
            }
        }
        return;
    }
    forward_lookup(node, fab, m);
}

fn forward_lookup(node: &OverlayNode, fab: &mut Fabric, m: LookupMsg) {
    let hop = node.next_hop(m.key);
    if hop == node.id {
        let outcome_path = m.path.clone();
        if m.client == node.id {
            fab.complete(
                m.op,
                OpOutcome::Missing {
                    unavailable: m.unreachable,
                    path: outcome_path,
                },
            );
        } else {
            fab.send(
                node.id,
                m.client,
                Body::LookupMiss {
                    op: m.op,
                    unavailable: m.unreachable,
                    path: outcome_path,
                },
            );
        }
    } else if m.path.contains(&hop) {
        fail_op(node, fab, m.op, m.path);
    } else {
        fab.send(node.id, hop, Body::Lookup(m));
    }
}

/// Asks the next recorded payload holder; once none is left the lookup
/// carries on toward the root. `unreachable` stays true only while every
/// holder tried has timed out.
fn try_next_location(
    node: &mut OverlayNode,
    fab: &mut Fabric,
    mut lookup: LookupMsg,
    mut remaining: Vec<NodeId>,
    unreachable: bool,
) {
    if remaining.is_empty() {
        lookup.unreachable |= unreachable;
        forward_lookup(node, fab, lookup);
        return;
    }
    let next = remaining.remove(0);
    fab.send(
        node.id,
        next,
        Body::Fetch {
            lookup,
            remaining,
            unreachable,
        },
    );
}

fn entry_origin(node: &OverlayNode, key: &Key) -> (NodeId, NodeId) {
    node.store
        .get(key)
        .map_or((node.id, node.id), |e| (e.source, e.root))
}

fn reply_found(
    node: &mut OverlayNode,
    fab: &mut Fabric,
    m: LookupMsg,
    payload: ComponentPayload,
    source: NodeId,
    root: NodeId,
) {
    let hops = m.path.len() - 1;
    if m.path.len() == 1 {
        fab.complete(
            m.op,
            OpOutcome::Found {
                payload,
                served_by: node.id,
                hops,
                path: m.path,
            },
        );
        return;
    }
    let name = node
        .store
        .get(&m.key)
        .map(|e| e.name.clone())
        .unwrap_or_default();
    let back = m.path.len() - 2;
    let to = m.path[back];
    fab.send(
        node.id,
        to,
        Body::LookupReply(LookupReplyMsg {
            op: m.op,
            key: m.key,
            name,
            payload,
            source,
            root,
            served_by: node.id,
            hops,
            path: m.path,
            back,
        }),
    );
}

/// Stores a CACHE copy unless a payload for the same content is already
/// present. `name`/origin come from the reply when the node has no entry.
fn cache_copy(
    node: &mut OverlayNode,
    fab: &Fabric,
    key: &Key,
    payload: &ComponentPayload,
    origin: Option<(&str, NodeId, NodeId)>,
) {
    if !node.store.config().cache_on_lookup {
        return;
    }
    let now = fab.now();
    let existing = node.store.get(key);
    let (name, source, root) = match (existing, origin) {
        (Some(e), _) if e.payload.is_some() && e.digest == payload.digest() => {
            node.store.get_mut(key).expect("present").last_access = now;
            return;
        }
        (Some(e), _) if e.role.is_pinned() => return,
        (Some(e), _) => (e.name.clone(), e.source, e.root),
        (None, Some((name, source, root))) => (name.to_string(), source, root),
        (None, None) => return,
    };
    node.store.put(StoreEntry::with_payload(
        *key,
        &name,
        Role::Cache,
        payload.clone(),
        source,
        root,
        now,
    ));
    node.store.enforce_capacity();
}

fn on_lookup_reply(node: &mut OverlayNode, fab: &mut Fabric, mut r: LookupReplyMsg) {
    if r.back == 0 {
        fab.complete(
            r.op,
            OpOutcome::Found {
                payload: r.payload,
                served_by: r.served_by,
                hops: r.hops,
                path: r.path,
            },
        );
        return;
    }
    cache_copy(
        node,
        fab,
        &r.key,
        &r.payload,
        Some((&r.name, r.source, r.root)),
    );
    r.back -= 1;
    let to = r.path[r.back];
    fab.send(node.id, to, Body::LookupReply(r));
}

fn start_remove(node: &mut OverlayNode, fab: &mut Fabric, mut m: RemoveMsg) {
    if let Some(e) = node.store.get(&m.key) {
        let owns = e.source == node.id && e.role.is_pinned();
        if !owns {
            fab.complete(m.op, OpOutcome::RemoveRejected { not_owner: true });
            return;
        }
    }
    m.path.push(node.id);
    forward_remove(node, fab, m);
}

fn forward_remove(node: &mut OverlayNode, fab: &mut Fabric, m: RemoveMsg) {
    let hop = node.next_hop(m.key);
    if hop != node.id {
        if m.path.contains(&hop) {
            fail_op(node, fab, m.op, m.path);
        } else {
            fab.send(node.id, hop, Body::Remove(m));
        }
        return;
    }
    let outcome = match node.store.get(&m.key) {
        None => RemoveOutcome::NotFound,
        Some(e) if e.source != m.requester => RemoveOutcome::NotOwner,
        Some(_) => {
            node.store.take(&m.key);
            RemoveOutcome::Removed
        }
    };
    if m.requester == node.id {
        finish_remove(node, fab, m.op, m.key, outcome);
    } else {
        fab.send(
            node.id,
            m.requester,
            Body::RemoveReply {
                op: m.op,
                key: m.key,
                outcome,
            },
        );
    }
}

fn finish_remove(
    node: &mut OverlayNode,
    fab: &mut Fabric,
    op: OpId,
    key: Key,
    outcome: RemoveOutcome,
) {
    let result = match outcome {
        RemoveOutcome::Removed => OpOutcome::Removed,
        RemoveOutcome::NotOwner => OpOutcome::RemoveRejected { not_owner: true },
        RemoveOutcome::NotFound => OpOutcome::RemoveRejected { not_owner: false },
    };
    // the publisher drops its own copy too
    if outcome == RemoveOutcome::Removed
        && node.store.get(&key).is_some_and(|e| e.source == node.id)
    {
        node.store.take(&key);
    }
    fab.complete(op, result);
}

fn on_transfer(node: &mut OverlayNode, fab: &mut Fabric, from: NodeId, t: TransferMsg) {
    let now = fab.now();
    let hits = node.store.get(&t.key).map_or(0, |e| e.hits);
    let mut entry = StoreEntry::with_payload(
        t.key,
        &t.name,
        Role::Root,
        t.payload.clone(),
        t.source,
        node.id,
        now,
    );
    entry.hits = hits;
    node.store.put(entry);
    fab.metrics_mut().transfers += 1;
    if t.reason == TransferReason::Handoff {
        fab.join_log(node.id).transferred.push(t.key);
    }
    fab.send(
        node.id,
        from,
        Body::TransferAck {
            key: t.key,
            reason: t.reason,
        },
    );
    // pass it on if this node already knows a closer one
    let closer = node.leaf_set.closest(t.key);
    if closer != node.id && closer != from {
        send_root(node, fab, t.key, closer, TransferReason::Handoff);
    }
}

/// Former root keeps the payload pinned: as SOURCE if it published it,
/// RETAINED otherwise.
fn demote(node: &mut OverlayNode, key: &Key) {
    let id = node.id;
    if let Some(e) = node.store.get_mut(key) {
        if e.role == Role::Root {
            e.role = if e.source == id {
                Role::Source
            } else {
                Role::Retained
            };
        }
    }
}

fn send_root(node: &OverlayNode, fab: &mut Fabric, key: Key, to: NodeId, reason: TransferReason) {
    let Some(e) = node.store.get(&key) else {
        return;
    };
    let Some(payload) = e.payload.clone() else {
        return;
    };
    fab.send(
        node.id,
        to,
        Body::Transfer(TransferMsg {
            key,
            name: e.name.clone(),
            payload,
            source: e.source,
            reason,
            attempt: 0,
        }),
    );
}

/// Hands every ROOT entry for which the leaf set now shows a closer node
/// to that node.
pub(crate) fn rebalance(node: &mut OverlayNode, fab: &mut Fabric) {
    let moves: Vec<(Key, NodeId)> = node
        .store
        .entries()
        .filter(|e| e.role == Role::Root)
        .map(|e| (e.key, node.leaf_set.closest(e.key)))
        .filter(|&(_, target)| target != node.id)
        .collect();
    for (key, target) in moves {
        send_root(node, fab, key, target, TransferReason::Handoff);
    }
}

/// Sends each ROOT entry to the closest remaining leaf before a graceful
/// departure. Returns the planned moves and the keys with no successor.
pub(crate) fn hand_off_for_departure(
    node: &mut OverlayNode,
    fab: &mut Fabric,
) -> (Vec<(Key, NodeId)>, Vec<Key>) {
    let members = node.leaf_set.members();
    let mut moved = Vec::new();
    let mut stranded = Vec::new();
    let roots: Vec<Key> = node
        .store
        .entries()
        .filter(|e| e.role == Role::Root)
        .map(|e| e.key)
        .collect();
    for key in roots {
        match root_of(members.iter().copied(), key) {
            Ok(target) => {
                send_root(node, fab, key, target, TransferReason::Departure);
                moved.push((key, target));
            }
            Err(_) => stranded.push(key),
        }
    }
    (moved, stranded)
}

impl SimNetwork {
    fn require_live_store(&self, id: NodeId) -> Result<(), StoreError> {
        if self.is_live(id) {
            Ok(())
        } else {
            Err(StoreError::NotLive(id))
        }
    }

    /// Publishes `payload` under `name` from `source`.
    pub fn publish(
        &mut self,
        source: NodeId,
        name: &str,
        payload: ComponentPayload,
    ) -> Result<PublishTrail, StoreError> {
        self.require_live_store(source)?;
        let key = derive_key(name)?;
        if !payload.is_intact() {
            return Err(StoreError::DigestMismatch {
                expected: payload.digest(),
                found: crate::id::digest128(payload.bytes()),
            });
        }
        let name_owned = name.to_string();
        let op = self.start_at(source, self.clock(), |op| {
            Body::Publish(PublishMsg {
                op,
                key,
                name: name_owned,
                payload,
                source,
                path: Vec::new(),
                retries: 0,
                fresh_source: false,
            })
        });
        self.settle()?;
        match self.take_outcome(op) {
            OpOutcome::Published(trail) => Ok(trail),
            OpOutcome::PublishConflict => Err(StoreError::VersionConflict {
                name: name.to_string(),
            }),
            OpOutcome::Failed { path } => Err(StoreError::PublishFailed {
                name: name.to_string(),
                path,
            }),
            other => unreachable!("publish produced {other:?}"),
        }
    }

    /// Schedules a lookup without running the network. Pair with
    /// [`SimNetwork::lookup_outcome`] after the queue drains.
    pub fn start_lookup(
        &mut self,
        client: NodeId,
        name: &str,
        at: Tick,
    ) -> Result<OpId, StoreError> {
        self.require_live_store(client)?;
        let key = derive_key(name)?;
        Ok(self.start_at(client, at, |op| {
            Body::Lookup(LookupMsg {
                op,
                key,
                client,
                path: Vec::new(),
                unreachable: false,
                retries: 0,
            })
        }))
    }

    /// Result of a lookup started with [`SimNetwork::start_lookup`]; `None`
    /// while it is still in flight.
    pub fn lookup_outcome(&self, op: OpId, name: &str) -> Option<Result<LookupResult, StoreError>> {
        self.outcome(op).map(|o| lookup_result(o.clone(), name))
    }

    /// Consumes the outcome of a started lookup. One still in flight, or
    /// lost with a failed node, reads as a failed attempt.
    pub fn finish_lookup(&mut self, op: OpId, name: &str) -> Result<LookupResult, StoreError> {
        lookup_result(self.take_outcome(op), name)
    }

    /// Fetches `name` as seen from `client`, retrying transient failures up
    /// to the configured limit.
    pub fn lookup(&mut self, client: NodeId, name: &str) -> Result<LookupResult, StoreError> {
        let mut attempt = 0;
        loop {
            let op = self.start_lookup(client, name, self.clock())?;
            self.settle()?;
            let outcome = self.take_outcome(op);
            match lookup_result(outcome, name) {
                Err(e) if e.is_retriable() && attempt < self.config().max_retries => {
                    attempt += 1;
                    self.fab.metrics_mut().record_lookup("retry");
                }
                other => return other,
            }
        }
    }

    /// Withdraws `name`. Only the publisher may do so; the root drops its
    /// copy and cached copies age out.
    pub fn remove(&mut self, requester: NodeId, name: &str) -> Result<RemovalReport, StoreError> {
        self.require_live_store(requester)?;
        let key = derive_key(name)?;
        let op = self.start_at(requester, self.clock(), |op| {
            Body::Remove(RemoveMsg {
                op,
                key,
                requester,
                path: Vec::new(),
                retries: 0,
            })
        });
        self.settle()?;
        match self.take_outcome(op) {
            OpOutcome::Removed => Ok(RemovalReport {
                key,
                name: name.to_string(),
            }),
            OpOutcome::RemoveRejected { not_owner: true } => Err(StoreError::NotOwner {
                name: name.to_string(),
                requester,
            }),
            OpOutcome::RemoveRejected { not_owner: false } => Err(StoreError::NotFound {
                name: name.to_string(),
            }),
            OpOutcome::Failed { path } => Err(StoreError::LookupFailed {
                name: name.to_string(),
                path,
            }),
            other => unreachable!("remove produced {other:?}"),
        }
    }

    /// Live nodes holding a payload for `name`.
    pub fn replica_count(&self, name: &str) -> usize {
        let Ok(key) = derive_key(name) else {
            return 0;
        };
        self.replica_count_key(key)
    }

    pub fn replica_count_key(&self, key: Key) -> usize {
        self.nodes
            .values()
            .filter(|n| n.is_live())
            .filter(|n| n.store.get(&key).is_some_and(|e| e.payload.is_some()))
            .count()
    }

    /// Runs the eviction pass on one node.
    pub fn evict(&mut self, node: NodeId, now: Tick) -> Vec<Key> {
        match self.nodes.get_mut(&node) {
            Some(n) => {
                let evicted = n.store.evict(now);
                self.fab.metrics_mut().evicted += evicted.len() as u64;
                evicted
            }
            None => Vec::new(),
        }
    }

    /// Live holders of a ROOT entry for `key`.
    pub fn root_holders(&self, key: Key) -> Vec<NodeId> {
        self.nodes
            .values()
            .filter(|n| n.is_live())
            .filter(|n| n.store.get(&key).is_some_and(|e| e.role == Role::Root))
            .map(|n| n.id)
            .collect()
    }
}

fn lookup_result(outcome: OpOutcome, name: &str) -> Result<LookupResult, StoreError> {
    match outcome {
        OpOutcome::Found {
            payload,
            served_by,
            hops,
            path,
        } => Ok(LookupResult {
            payload,
            served_by,
            hops,
            path,
        }),
        OpOutcome::Missing {
            unavailable: true, ..
        } => Err(StoreError::Unavailable {
            name: name.to_string(),
        }),
        OpOutcome::Missing { .. } => Err(StoreError::NotFound {
            name: name.to_string(),
        }),
        OpOutcome::Failed { path } => Err(StoreError::LookupFailed {
            name: name.to_string(),
            path,
        }),
        other => unreachable!("lookup produced {other:?}"),
    }
}
