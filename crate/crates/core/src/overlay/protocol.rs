//! Overlay message handlers and the blocking drivers built on them.

use std::collections::BTreeSet;

use super::{NodeStatus, OverlayError, OverlayNode};
use crate::id::{Key, NodeId};
use crate::simnet::{Body, Fabric, Message, OpOutcome, RouteMsg, SimNetwork};
use crate::store;

/// What a join produced once the network settled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JoinReport {
    pub id: NodeId,
    /// Route the join request took, bootstrap first.
    pub path: Vec<NodeId>,
    /// Distinct ids handed to the joiner.
    pub contacts: usize,
    /// Keys whose ROOT role moved to the joiner.
    pub transferred: Vec<Key>,
    /// Keys a neighbour failed to hand over.
    pub unresolved: Vec<Key>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepartureReport {
    pub id: NodeId,
    pub graceful: bool,
    /// `(key, new root)` for every ROOT entry handed off.
    pub transferred: Vec<(Key, NodeId)>,
    pub unresolved: Vec<Key>,
}

pub(crate) fn on_start(node: &mut OverlayNode, fab: &mut Fabric, body: Body) {
    if let Body::RouteProbe(mut m) = body {
        m.path.push(node.id);
        forward_probe(node, fab, m);
    }
}

pub(crate) fn on_message(node: &mut OverlayNode, fab: &mut Fabric, msg: Message) {
    let from = msg.from;
    match msg.body {
        Body::RouteProbe(mut m) => {
            m.path.push(node.id);
            // each hop gets its own retry budget
            m.retries = 0;
            forward_probe(node, fab, m);
        }
        Body::RouteDone { op, path } => fab.complete(op, OpOutcome::Routed { path }),
        Body::OpFailed { op, path } => fab.complete(op, OpOutcome::Failed { path }),
        Body::JoinRequest {
            joiner,
            mut path,
            mut contacts,
            ..
        } => {
            path.push(node.id);
            contacts.insert(node.id);
            contacts.extend(node.known_ids());
            forward_join(node, fab, joiner, path, contacts, 0);
        }
        Body::JoinReply { path, contacts } => {
            for &c in &contacts {
                node.learn(c);
            }
            node.status = NodeStatus::Live;
            let log = fab.join_log(node.id);
            log.path = path;
            log.contacts = contacts.len();
            for peer in node.known_ids() {
                fab.send(node.id, peer, Body::Announce);
            }
        }
        Body::Announce => {
            if node.learn_announced(from) && node.leaf_set.contains(from) {
                store::protocol::rebalance(node, fab);
            }
        }
        Body::Departure => drop_peer(node, fab, from),
        Body::StateRequest => {
            node.learn(from);
            let mut ids: Vec<NodeId> = node.known_ids().into_iter().collect();
            ids.push(node.id);
            fab.send(node.id, from, Body::StateReply { ids });
        }
        Body::StateReply { ids } => {
            let mut changed = node.learn(from);
            for id in ids {
                changed |= node.learn(id);
            }
            if changed {
                store::protocol::rebalance(node, fab);
            }
        }
        _ => unreachable!("store message routed to overlay handler"),
    }
}

pub(crate) fn on_timeout(node: &mut OverlayNode, fab: &mut Fabric, msg: Message) {
    let dead = msg.to;
    match msg.body {
        Body::RouteProbe(mut m) => {
            drop_peer(node, fab, dead);
            if m.retries < fab.config().max_retries {
                m.retries += 1;
                forward_probe(node, fab, m);
            } else {
                fail_op(node, fab, m.op, m.path);
            }
        }
        Body::JoinRequest {
            joiner,
            path,
            contacts,
            retries,
        } => {
            drop_peer(node, fab, dead);
            // the joiner itself sent to a dead bootstrap: nothing to retry through
            if node.id != joiner && retries < fab.config().max_retries {
                forward_join(node, fab, joiner, path, contacts, retries + 1);
            }
        }
        Body::Announce | Body::StateRequest | Body::StateReply { .. } => {
            drop_peer(node, fab, dead);
        }
        _ => {}
    }
}

/// Removes a dead or departed peer and, if the leaf set lost a member, asks
/// the farthest remaining leaf on that side for its view.
pub(crate) fn drop_peer(node: &mut OverlayNode, fab: &mut Fabric, peer: NodeId) {
    if node.forget(peer) {
        if let Some(contact) = node.repair_contact(peer) {
            fab.send(node.id, contact, Body::StateRequest);
        }
    }
}

/// Reports a failed routed operation to its originator (`path[0]`).
pub(crate) fn fail_op(node: &OverlayNode, fab: &mut Fabric, op: u64, path: Vec<NodeId>) {
    let origin = path.first().copied().unwrap_or(node.id);
    if origin == node.id {
        fab.complete(op, OpOutcome::Failed { path });
    } else {
        fab.send(node.id, origin, Body::OpFailed { op, path });
    }
}

fn forward_probe(node: &OverlayNode, fab: &mut Fabric, m: RouteMsg) {
    let hop = node.next_hop(m.key);
    if hop == node.id {
        let origin = m.path[0];
        if origin == node.id {
            fab.complete(m.op, OpOutcome::Routed { path: m.path });
        } else {
            fab.send(
                node.id,
                origin,
                Body::RouteDone {
                    op: m.op,
                    path: m.path,
                },
            );
        }
    } else if m.path.contains(&hop) {
        fail_op(node, fab, m.op, m.path);
    } else {
        fab.send(node.id, hop, Body::RouteProbe(m));
    }
}

fn forward_join(
    node: &OverlayNode,
    fab: &mut Fabric,
    joiner: NodeId,
    path: Vec<NodeId>,
    contacts: BTreeSet<NodeId>,
    retries: u8,
) {
    let hop = node.next_hop(joiner);
    if hop == node.id || path.contains(&hop) {
        fab.send(node.id, joiner, Body::JoinReply { path, contacts });
    } else {
        fab.send(
            node.id,
            hop,
            Body::JoinRequest {
                joiner,
                path,
                contacts,
                retries,
            },
        );
    }
}

impl SimNetwork {
    fn require_live(&self, id: NodeId) -> Result<(), OverlayError> {
        match self.nodes.get(&id) {
            None => Err(OverlayError::NoSuchNode(id)),
            Some(n) if !n.is_live() => Err(OverlayError::NotLive(id)),
            Some(_) => Ok(()),
        }
    }

    /// Routes a probe from `start` toward `key` and returns the hop sequence.
    pub fn route(&mut self, start: NodeId, key: Key) -> Result<Vec<NodeId>, OverlayError> {
        self.require_live(start)?;
        let op = self.start_at(start, self.clock(), |op| {
            Body::RouteProbe(RouteMsg {
                op,
                key,
                path: Vec::new(),
                retries: 0,
            })
        });
        self.settle()?;
        match self.take_outcome(op) {
            OpOutcome::Routed { path } => Ok(path),
            OpOutcome::Failed { path } => Err(OverlayError::RoutingFailure { path }),
            other => unreachable!("route produced {other:?}"),
        }
    }

    /// Follows `next_hop` through current node state without sending
    /// anything. Stops at a node that routes to itself, a dead node, or a
    /// repeat.
    pub fn trace_route(&self, start: NodeId, key: Key) -> Vec<NodeId> {
        let mut path = vec![start];
        let mut at = start;
        while let Some(node) = self.nodes.get(&at).filter(|n| n.is_live()) {
            let hop = node.next_hop(key);
            if hop == at || path.contains(&hop) {
                break;
            }
            path.push(hop);
            at = hop;
        }
        path
    }

    /// Adds a node. `bootstrap` may be `None` only for the first node.
    pub fn join(
        &mut self,
        new_id: NodeId,
        bootstrap: Option<NodeId>,
    ) -> Result<JoinReport, OverlayError> {
        if self
            .nodes
            .get(&new_id)
            .is_some_and(|n| n.status != NodeStatus::Departed)
        {
            return Err(OverlayError::DuplicateNode(new_id));
        }
        let mut node = OverlayNode::new(new_id, self.config().store);
        self.fab.join_logs.remove(&new_id);
        let Some(bootstrap) = bootstrap else {
            if self.live_count() > 0 {
                return Err(OverlayError::BootstrapRequired);
            }
            node.status = NodeStatus::Live;
            self.register(node);
            return Ok(JoinReport {
                id: new_id,
                path: Vec::new(),
                contacts: 0,
                transferred: Vec::new(),
                unresolved: Vec::new(),
            });
        };
        if !self.is_live(bootstrap) {
            return Err(OverlayError::BootstrapUnreachable(bootstrap));
        }
        self.register(node);
        self.fab.send(
            new_id,
            bootstrap,
            Body::JoinRequest {
                joiner: new_id,
                path: Vec::new(),
                contacts: BTreeSet::new(),
                retries: 0,
            },
        );
        self.settle()?;
        if !self.is_live(new_id) {
            self.nodes.remove(&new_id);
            self.fab.set_reachable(new_id, false);
            return Err(OverlayError::JoinFailed(new_id));
        }
        let log = self.fab.join_logs.get(&new_id).cloned().unwrap_or_default();
        Ok(JoinReport {
            id: new_id,
            path: log.path,
            contacts: log.contacts,
            transferred: log.transferred,
            unresolved: log.unresolved,
        })
    }

    /// Removes a node. Graceful departures hand ROOT entries to their new
    /// roots first and tell every known peer; abrupt ones just go silent.
    pub fn leave(&mut self, id: NodeId, graceful: bool) -> Result<DepartureReport, OverlayError> {
        self.require_live(id).map_err(|e| match e {
            OverlayError::NotLive(id) => OverlayError::NoSuchNode(id),
            e => e,
        })?;
        if !graceful {
            self.fail(id)?;
            return Ok(DepartureReport {
                id,
                graceful,
                transferred: Vec::new(),
                unresolved: Vec::new(),
            });
        }
        self.fab.join_logs.remove(&id);
        let node = self.nodes.get_mut(&id).expect("checked live");
        let (transferred, mut unresolved) =
            store::protocol::hand_off_for_departure(node, &mut self.fab);
        self.settle()?;
        if let Some(log) = self.fab.join_logs.remove(&id) {
            unresolved.extend(log.unresolved);
        }
        let node = self.nodes.get_mut(&id).expect("still registered");
        node.status = NodeStatus::Departed;
        let peers = node.known_ids();
        self.fab.set_reachable(id, false);
        for peer in peers {
            self.fab.send(id, peer, Body::Departure);
        }
        self.settle()?;
        Ok(DepartureReport {
            id,
            graceful,
            transferred,
            unresolved,
        })
    }

    /// One maintenance round: every live node exchanges state with every
    /// peer it knows. Dead peers surface as timeouts and are dropped.
    pub fn stabilize(&mut self) -> Result<(), OverlayError> {
        let pairs: Vec<(NodeId, NodeId)> = self
            .nodes
            .values()
            .filter(|n| n.is_live())
            .flat_map(|n| n.known_ids().into_iter().map(move |p| (n.id, p)))
            .collect();
        for (from, to) in pairs {
            self.fab.send(from, to, Body::StateRequest);
        }
        self.settle()?;
        Ok(())
    }
}
