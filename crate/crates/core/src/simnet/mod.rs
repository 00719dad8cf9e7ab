//! Deterministic discrete-event transport.
//!
//! Time is an integer tick count. Every send draws a latency from the seeded
//! generator and schedules either a delivery or, when the destination is
//! down, a timeout back to the sender at the message deadline. Events are
//! processed in `(time, sequence)` order so a run is fully determined by its
//! seed and the sequence of driver calls.

mod message;
mod metrics;

pub use message::{Body, Message, MessageKind, RouteMsg};
pub use metrics::{HopHistogram, Metrics};

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::id::{Key, NodeId};
use crate::overlay::{self, NodeStatus, OverlayNode};
use crate::store::{self, ComponentPayload, PublishTrail, StoreConfig};

pub type Tick = u64;
pub type OpId = u64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("no such node {0}")]
    NoSuchNode(NodeId),
    #[error("livelock suspected: {pending} events still queued after {ticks} ticks")]
    Livelock { ticks: Tick, pending: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimConfig {
    /// Inclusive lower latency bound.
    pub latency_min: Tick,
    /// Exclusive upper latency bound.
    pub latency_max: Tick,
    pub timeout: Tick,
    pub max_retries: u8,
    /// Period of the background eviction pass.
    pub maintenance_interval: Tick,
    /// Tick budget a single blocking driver call may consume.
    pub max_ticks_per_call: Tick,
    pub store: StoreConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            latency_min: 10,
            latency_max: 100,
            timeout: 500,
            max_retries: 3,
            maintenance_interval: 100,
            max_ticks_per_call: 50_000_000,
            store: StoreConfig::default(),
        }
    }
}

/// Final result of an operation started at some node.
#[derive(Debug, Clone)]
pub enum OpOutcome {
    Routed {
        path: Vec<NodeId>,
    },
    Published(PublishTrail),
    PublishConflict,
    Found {
        payload: ComponentPayload,
        served_by: NodeId,
        hops: usize,
        path: Vec<NodeId>,
    },
    Missing {
        unavailable: bool,
        path: Vec<NodeId>,
    },
    Removed,
    RemoveRejected {
        not_owner: bool,
    },
    /// Routing gave up (timeouts exhausted the retry budget) or the
    /// operation was lost with a failed node.
    Failed {
        path: Vec<NodeId>,
    },
}

/// Per-joiner bookkeeping filled in while a join settles.
#[derive(Debug, Clone, Default)]
pub struct JoinLog {
    pub path: Vec<NodeId>,
    pub contacts: usize,
    pub transferred: Vec<Key>,
    pub unresolved: Vec<Key>,
}

#[derive(Debug, Clone)]
enum EventKind {
    Deliver(Message),
    Timeout(Message),
    /// Local trigger: `node` begins an operation described by `body`.
    Start {
        node: NodeId,
        body: Body,
    },
}

#[derive(Debug, Clone)]
struct Event {
    at: Tick,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    // min-heap on (at, seq)
    fn cmp(&self, other: &Self) -> Ordering {
        (other.at, other.seq).cmp(&(self.at, self.seq))
    }
}

/// Everything a node handler may touch besides its own node: the clock, the
/// outgoing queue and result bookkeeping.
#[derive(Debug, Clone)]
pub struct Fabric {
    clock: Tick,
    seq: u64,
    next_corr: u64,
    next_op: OpId,
    queue: BinaryHeap<Event>,
    rng: ChaCha8Rng,
    config: SimConfig,
    reachable: BTreeSet<NodeId>,
    metrics: Metrics,
    ops: BTreeMap<OpId, Option<OpOutcome>>,
    pub(crate) join_logs: BTreeMap<NodeId, JoinLog>,
}

impl Fabric {
    pub fn now(&self) -> Tick {
        self.clock
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn metrics_mut(&mut self) -> &mut Metrics {
        &mut self.metrics
    }

    fn push(&mut self, at: Tick, kind: EventKind) {
        self.seq += 1;
        self.queue.push(Event {
            at,
            seq: self.seq,
            kind,
        });
    }

    /// Schedules `body` from `from` to `to`. A down destination yields a
    /// timeout at the deadline instead of a delivery.
    pub fn send(&mut self, from: NodeId, to: NodeId, body: Body) -> u64 {
        self.next_corr += 1;
        let corr = self.next_corr;
        let latency = self
            .rng
            .random_range(self.config.latency_min..self.config.latency_max);
        self.metrics.count_sent(body.kind());
        let msg = Message {
            from,
            to,
            corr,
            sent_at: self.clock,
            deadline: self.clock + self.config.timeout,
            body,
        };
        if self.reachable.contains(&to) {
            self.push(self.clock + latency, EventKind::Deliver(msg));
        } else {
            let deadline = msg.deadline;
            self.push(deadline, EventKind::Timeout(msg));
        }
        corr
    }

    pub(crate) fn set_reachable(&mut self, id: NodeId, reachable: bool) {
        if reachable {
            self.reachable.insert(id);
        } else {
            self.reachable.remove(&id);
        }
    }

    pub(crate) fn new_op(&mut self) -> OpId {
        self.next_op += 1;
        self.ops.insert(self.next_op, None);
        self.next_op
    }

    /// Records the outcome of `op`. Late duplicates are ignored.
    pub(crate) fn complete(&mut self, op: OpId, outcome: OpOutcome) {
        if let Some(slot @ None) = self.ops.get_mut(&op) {
            match &outcome {
                OpOutcome::Routed { path } => self.metrics.record_hops("route", path.len() - 1),
                OpOutcome::Published(trail) => {
                    self.metrics.record_hops("publish", trail.path.len() - 1)
                }
                OpOutcome::Found { hops, .. } => {
                    self.metrics.record_hops("lookup", *hops);
                    self.metrics.record_lookup("ok");
                }
                OpOutcome::Missing { unavailable, .. } => {
                    self.metrics.record_lookup(if *unavailable {
                        "unavailable"
                    } else {
                        "not_found"
                    })
                }
                _ => {}
            }
            *slot = Some(outcome);
        }
    }

    pub(crate) fn join_log(&mut self, joiner: NodeId) -> &mut JoinLog {
        self.join_logs.entry(joiner).or_default()
    }
}

/// The simulated network: node registry plus transport.
#[derive(Debug, Clone)]
pub struct SimNetwork {
    pub(crate) nodes: BTreeMap<NodeId, OverlayNode>,
    pub(crate) fab: Fabric,
    seed: u64,
}

impl SimNetwork {
    pub fn new(seed: u64, config: SimConfig) -> Self {
        Self {
            nodes: BTreeMap::new(),
            fab: Fabric {
                clock: 0,
                seq: 0,
                next_corr: 0,
                next_op: 0,
                queue: BinaryHeap::new(),
                rng: ChaCha8Rng::seed_from_u64(seed),
                config,
                reachable: BTreeSet::new(),
                metrics: Metrics::default(),
                ops: BTreeMap::new(),
                join_logs: BTreeMap::new(),
            },
            seed,
        }
    }

    pub fn with_seed(seed: u64) -> Self {
        Self::new(seed, SimConfig::default())
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn clock(&self) -> Tick {
        self.fab.clock
    }

    pub fn config(&self) -> &SimConfig {
        &self.fab.config
    }

    pub fn metrics(&self) -> &Metrics {
        &self.fab.metrics
    }

    pub fn node(&self, id: NodeId) -> Option<&OverlayNode> {
        self.nodes.get(&id)
    }

    /// Direct mutable access, for tests and tools that poke at state.
    pub fn node_mut(&mut self, id: NodeId) -> Option<&mut OverlayNode> {
        self.nodes.get_mut(&id)
    }

    /// All nodes ever registered, departed ones included.
    pub fn nodes(&self) -> impl Iterator<Item = &OverlayNode> {
        self.nodes.values()
    }

    pub fn live_ids(&self) -> Vec<NodeId> {
        self.nodes
            .values()
            .filter(|n| n.is_live())
            .map(|n| n.id)
            .collect()
    }

    pub fn live_count(&self) -> usize {
        self.nodes.values().filter(|n| n.is_live()).count()
    }

    pub fn is_live(&self, id: NodeId) -> bool {
        self.nodes.get(&id).is_some_and(OverlayNode::is_live)
    }

    pub fn pending_events(&self) -> usize {
        self.fab.queue.len()
    }

    pub fn send(&mut self, from: NodeId, to: NodeId, body: Body) -> u64 {
        self.fab.send(from, to, body)
    }

    /// Time of the next queued event.
    pub fn next_event_at(&self) -> Option<Tick> {
        self.fab.queue.peek().map(|e| e.at)
    }

    /// Moves the clock forward to `t`, running the periodic eviction pass if
    /// a maintenance boundary was crossed. Only the last crossed boundary is
    /// evaluated: with no events in between, earlier passes would remove a
    /// subset of the same entries.
    fn advance_clock(&mut self, t: Tick) {
        debug_assert!(t >= self.fab.clock, "clock never decreases");
        let interval = self.fab.config.maintenance_interval.max(1);
        let before = self.fab.clock / interval;
        let after = t / interval;
        self.fab.clock = t;
        if after > before {
            self.evict_all(after * interval);
        }
    }

    /// Runs the eviction pass on every live node as of `now`.
    pub fn evict_all(&mut self, now: Tick) -> usize {
        let mut n = 0;
        for node in self.nodes.values_mut().filter(|n| n.is_live()) {
            n += node.store.evict(now).len();
        }
        self.fab.metrics.evicted += n as u64;
        n
    }

    /// Processes one event. Returns false when the queue is empty.
    pub fn step(&mut self) -> bool {
        let Some(event) = self.fab.queue.pop() else {
            return false;
        };
        self.advance_clock(event.at);
        match event.kind {
            EventKind::Deliver(msg) => {
                let up = self
                    .nodes
                    .get(&msg.to)
                    .is_some_and(|n| n.status != NodeStatus::Departed);
                if up {
                    self.fab.metrics.delivered += 1;
                    let node = self.nodes.get_mut(&msg.to).expect("checked above");
                    dispatch_message(node, &mut self.fab, msg);
                } else {
                    // failed in flight: the sender learns at the deadline
                    let deadline = msg.deadline.max(self.fab.clock);
                    self.fab.push(deadline, EventKind::Timeout(msg));
                }
            }
            EventKind::Timeout(msg) => {
                self.fab.metrics.timeouts += 1;
                if let Some(node) = self
                    .nodes
                    .get_mut(&msg.from)
                    .filter(|n| n.status != NodeStatus::Departed)
                {
                    dispatch_timeout(node, &mut self.fab, msg);
                }
            }
            EventKind::Start { node, body } => {
                if let Some(n) = self.nodes.get_mut(&node).filter(|n| n.is_live()) {
                    dispatch_start(n, &mut self.fab, body);
                }
            }
        }
        true
    }

    /// Processes events until none remain. Errors if the queue is still
    /// non-empty after `max_ticks` of simulated time.
    pub fn run_until_quiescent(&mut self, max_ticks: Tick) -> Result<Tick, SimError> {
        let start = self.fab.clock;
        let limit = start.saturating_add(max_ticks);
        while let Some(at) = self.next_event_at() {
            if at > limit {
                return Err(SimError::Livelock {
                    ticks: max_ticks,
                    pending: self.fab.queue.len(),
                });
            }
            self.step();
        }
        Ok(self.fab.clock - start)
    }

    /// Runs until quiescent within the per-call tick budget.
    pub fn settle(&mut self) -> Result<Tick, SimError> {
        let budget = self.fab.config.max_ticks_per_call;
        self.run_until_quiescent(budget)
    }

    /// Lets `ticks` of simulated time pass, processing whatever is due.
    pub fn advance(&mut self, ticks: Tick) {
        let target = self.fab.clock.saturating_add(ticks);
        while self.next_event_at().is_some_and(|at| at <= target) {
            self.step();
        }
        self.advance_clock(target);
    }

    /// Abrupt failure: the node stops answering. Neighbours find out when
    /// they next contact it.
    pub fn fail(&mut self, id: NodeId) -> Result<(), SimError> {
        let node = self.nodes.get_mut(&id).ok_or(SimError::NoSuchNode(id))?;
        node.status = NodeStatus::Departed;
        self.fab.set_reachable(id, false);
        Ok(())
    }

    /// Schedules `node` to begin an operation at time `at` (not earlier
    /// than now) and returns its id.
    pub(crate) fn start_at(
        &mut self,
        node: NodeId,
        at: Tick,
        body: impl FnOnce(OpId) -> Body,
    ) -> OpId {
        let op = self.fab.new_op();
        let at = at.max(self.fab.clock);
        self.fab.push(
            at,
            EventKind::Start {
                node,
                body: body(op),
            },
        );
        op
    }

    /// Outcome of `op`, if it finished.
    pub fn outcome(&self, op: OpId) -> Option<&OpOutcome> {
        self.fab.ops.get(&op).and_then(Option::as_ref)
    }

    /// Removes and returns the outcome of `op`; an operation that never
    /// completed (lost with a failed node) reads as `Failed`.
    pub(crate) fn take_outcome(&mut self, op: OpId) -> OpOutcome {
        self.fab
            .ops
            .remove(&op)
            .flatten()
            .unwrap_or(OpOutcome::Failed { path: Vec::new() })
    }

    pub(crate) fn register(&mut self, node: OverlayNode) {
        let reachable = node.status != NodeStatus::Departed;
        self.fab.set_reachable(node.id, reachable);
        self.nodes.insert(node.id, node);
    }

    pub fn join_log(&self, id: NodeId) -> Option<&JoinLog> {
        self.fab.join_logs.get(&id)
    }
}

fn dispatch_message(node: &mut OverlayNode, fab: &mut Fabric, msg: Message) {
    if msg.body.is_store() {
        store::protocol::on_message(node, fab, msg);
    } else {
        overlay::protocol::on_message(node, fab, msg);
    }
}

fn dispatch_timeout(node: &mut OverlayNode, fab: &mut Fabric, msg: Message) {
    if msg.body.is_store() {
        store::protocol::on_timeout(node, fab, msg);
    } else {
        overlay::protocol::on_timeout(node, fab, msg);
    }
}

fn dispatch_start(node: &mut OverlayNode, fab: &mut Fabric, body: Body) {
    if body.is_store() {
        store::protocol::on_start(node, fab, body);
    } else {
        overlay::protocol::on_start(node, fab, body);
    }
}
