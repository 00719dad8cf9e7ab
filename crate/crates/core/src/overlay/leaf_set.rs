use std::collections::BTreeSet;

use crate::id::{Key, NodeId};

/// Total leaf-set size; half of it on each side of the owner.
pub const LEAF_SET_SIZE: usize = 8;
const HALF: usize = LEAF_SET_SIZE / 2;

/// The owner's circularly nearest neighbours.
///
/// `left` holds the nearest ids counter-clockwise from the owner, `right`
/// the nearest clockwise, each sorted nearest first. In rings with fewer
/// than `LEAF_SET_SIZE + 1` nodes the two sides overlap.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeafSet {
    owner: NodeId,
    left: Vec<NodeId>,
    right: Vec<NodeId>,
}

impl LeafSet {
    pub fn new(owner: NodeId) -> Self {
        Self {
            owner,
            left: Vec::with_capacity(HALF + 1),
            right: Vec::with_capacity(HALF + 1),
        }
    }

    pub fn owner(&self) -> NodeId {
        self.owner
    }

    pub fn left(&self) -> &[NodeId] {
        &self.left
    }

    pub fn right(&self) -> &[NodeId] {
        &self.right
    }

    /// Offers `id` to both sides. Returns true if either side changed.
    pub fn insert(&mut self, id: NodeId) -> bool {
        if id == self.owner {
            return false;
        }
        let owner = self.owner;
        let r = offer(&mut self.right, id, |x| owner.cw_offset(x));
        let l = offer(&mut self.left, id, |x| owner.ccw_offset(x));
        r || l
    }

    pub fn remove(&mut self, id: NodeId) -> bool {
        let before = self.left.len() + self.right.len();
        self.left.retain(|&x| x != id);
        self.right.retain(|&x| x != id);
        before != self.left.len() + self.right.len()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.left.contains(&id) || self.right.contains(&id)
    }

    /// Distinct members, excluding the owner.
    pub fn members(&self) -> BTreeSet<NodeId> {
        self.left.iter().chain(self.right.iter()).copied().collect()
    }

    pub fn is_empty(&self) -> bool {
        self.left.is_empty() && self.right.is_empty()
    }

    /// True when both sides are full and disjoint, i.e. the ring is larger
    /// than what the leaf set can see.
    fn is_partial_view(&self) -> bool {
        self.left.len() == HALF
            && self.right.len() == HALF
            && !self.left.iter().any(|x| self.right.contains(x))
    }

    /// Whether `key` falls between the extreme leaves (owner included).
    pub fn covers(&self, key: Key) -> bool {
        if !self.is_partial_view() {
            return true;
        }
        let far_right = *self.right.last().expect("full side");
        let far_left = *self.left.last().expect("full side");
        self.owner.cw_offset(key) <= self.owner.cw_offset(far_right)
            || self.owner.ccw_offset(key) <= self.owner.ccw_offset(far_left)
    }

    /// Member or owner closest to `key`, ties to the smaller id.
    pub fn closest(&self, key: Key) -> NodeId {
        self.left
            .iter()
            .chain(self.right.iter())
            .copied()
            .chain(std::iter::once(self.owner))
            .min_by_key(|id| id.closeness_to(key))
            .expect("owner always present")
    }

    pub fn farthest_left(&self) -> Option<NodeId> {
        self.left.last().copied()
    }

    pub fn farthest_right(&self) -> Option<NodeId> {
        self.right.last().copied()
    }

    pub fn side_sizes(&self) -> (usize, usize) {
        (self.left.len(), self.right.len())
    }
}

fn offer(side: &mut Vec<NodeId>, id: NodeId, offset: impl Fn(NodeId) -> u128) -> bool {
    if side.contains(&id) {
        return false;
    }
    let pos = side.partition_point(|&x| offset(x) < offset(id));
    if pos >= HALF {
        return false;
    }
    side.insert(pos, id);
    side.truncate(HALF);
    true
}
