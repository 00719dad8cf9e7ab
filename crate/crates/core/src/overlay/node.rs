use std::collections::BTreeSet;

use serde::Serialize;

use super::leaf_set::LeafSet;
use super::routing_table::RoutingTable;
use crate::id::{Key, NodeId};
use crate::store::{Store, StoreConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NodeStatus {
    Joining,
    Live,
    Departed,
}

/// One peer: routing state plus the components it hosts.
#[derive(Debug, Clone)]
pub struct OverlayNode {
    pub id: NodeId,
    pub status: NodeStatus,
    pub leaf_set: LeafSet,
    pub routing_table: RoutingTable,
    pub store: Store,
    /// Peers this node has seen time out or depart. They are not re-learned
    /// from third-party state until they announce themselves again.
    pub(crate) dead: BTreeSet<NodeId>,
}

impl OverlayNode {
    pub fn new(id: NodeId, store_config: StoreConfig) -> Self {
        Self {
            id,
            status: NodeStatus::Joining,
            leaf_set: LeafSet::new(id),
            routing_table: RoutingTable::new(id),
            store: Store::new(store_config),
            dead: BTreeSet::new(),
        }
    }

    pub fn is_live(&self) -> bool {
        self.status == NodeStatus::Live
    }

    /// Every id in the leaf set or routing table.
    pub fn known_ids(&self) -> BTreeSet<NodeId> {
        let mut ids = self.leaf_set.members();
        ids.extend(self.routing_table.entries().map(|(_, _, id)| id));
        ids
    }

    /// Adds `id` to routing state unless it is believed dead.
    /// Returns true if the leaf set changed.
    pub fn learn(&mut self, id: NodeId) -> bool {
        if id == self.id || self.dead.contains(&id) {
            return false;
        }
        self.routing_table.insert(id);
        self.leaf_set.insert(id)
    }

    /// Learns `id` even if it was previously marked dead (it announced itself).
    pub fn learn_announced(&mut self, id: NodeId) -> bool {
        self.dead.remove(&id);
        self.learn(id)
    }

    /// Drops `id` from all routing state and remembers it as dead.
    /// Returns true if the leaf set changed.
    pub fn forget(&mut self, id: NodeId) -> bool {
        if id == self.id {
            return false;
        }
        self.dead.insert(id);
        self.routing_table.remove(id);
        self.leaf_set.remove(id)
    }

    /// Pastry next-hop selection; returns `self.id` when this node is the
    /// destination.
    ///
    /// 1. key inside the leaf-set range: closest of leaf set and self;
    /// 2. routing table cell for the next digit of the key;
    /// 3. any known node with at least as long a prefix that is strictly
    ///    closer than self (longest prefix, then distance, then id);
    /// 4. self.
    pub fn next_hop(&self, key: Key) -> NodeId {
        if key == self.id {
            return self.id;
        }
        if self.leaf_set.covers(key) {
            return self.leaf_set.closest(key);
        }
        let row = self.id.shared_prefix_len(key);
        if let Some(hop) = self.routing_table.get(row, key.digit(row) as usize) {
            return hop;
        }
        let own_distance = self.id.circular_distance(key);
        self.known_ids()
            .into_iter()
            .filter(|n| n.shared_prefix_len(key) >= row && n.circular_distance(key) < own_distance)
            .min_by_key(|n| {
                (
                    std::cmp::Reverse(n.shared_prefix_len(key)),
                    n.circular_distance(key),
                    n.raw(),
                )
            })
            .unwrap_or(self.id)
    }

    /// Leaf-set member whose view should be fetched to refill the side that
    /// lost `gone`.
    pub(crate) fn repair_contact(&self, gone: NodeId) -> Option<NodeId> {
        let on_right = self.id.cw_offset(gone) <= self.id.ccw_offset(gone);
        let primary = if on_right {
            self.leaf_set.farthest_right()
        } else {
            self.leaf_set.farthest_left()
        };
        primary
            .or_else(|| self.leaf_set.farthest_right())
            .or_else(|| self.leaf_set.farthest_left())
    }
}
