//! Executes a parsed scenario against one simulated network.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};

use super::document::{BundleSummary, DumpEntry, MetricsDocument, NodeLoad, StoreDump};
use super::scenario::{
    Command, LifecycleAction, Operand, Predicate, PublishSpec, Quantity, Scenario, Step, Workload,
};
use super::CliError;
use crate::id::{derive_key, digest128, root_of, NodeId};
use crate::overlay::NodeStatus;
use crate::repo::{ComponentDescriptor, GatewayState, RepositoryIndex};
use crate::simnet::SimNetwork;
use crate::store::{ComponentPayload, Role, StoreError};

/// Deterministic archive bytes for `bundle` under `seed`.
pub fn generate_payload(seed: u64, bundle: &str, size: u64) -> ComponentPayload {
    let salt = digest128(bundle.as_bytes()) as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt);
    let mut bytes = vec![0u8; size as usize];
    rng.fill_bytes(&mut bytes);
    ComponentPayload::new(bytes)
}

pub struct Runner {
    net: SimNetwork,
    seed: u64,
    rng: ChaCha8Rng,
    ids: BTreeMap<String, NodeId>,
    names: BTreeMap<NodeId, String>,
    next_index: usize,
    gateways: BTreeMap<String, GatewayState>,
    /// Union of every published descriptor, handed to gateways on install.
    index: RepositoryIndex,
    sources: BTreeMap<String, String>,
    requests: BTreeMap<String, u64>,
    last_hops: BTreeMap<&'static str, usize>,
    last_outcome: Option<&'static str>,
    samples: BTreeMap<String, Vec<[u64; 2]>>,
    dumps: Vec<StoreDump>,
    executed: usize,
}

impl Runner {
    pub fn new(seed: u64) -> Self {
        Self {
            net: SimNetwork::with_seed(seed),
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed.rotate_left(17) ^ 0x5eed),
            ids: BTreeMap::new(),
            names: BTreeMap::new(),
            next_index: 0,
            gateways: BTreeMap::new(),
            index: RepositoryIndex::new(),
            sources: BTreeMap::new(),
            requests: BTreeMap::new(),
            last_hops: BTreeMap::new(),
            last_outcome: None,
            samples: BTreeMap::new(),
            dumps: Vec::new(),
            executed: 0,
        }
    }

    pub fn network(&self) -> &SimNetwork {
        &self.net
    }

    pub fn node_id(&self, name: &str) -> Option<NodeId> {
        self.ids.get(name).copied()
    }

    /// Runs every step in order and stops at the first fatal one. The
    /// document covers whatever ran.
    pub fn run(&mut self, scenario: &Scenario) -> (MetricsDocument, Result<(), CliError>) {
        let mut result = Ok(());
        for (index, step) in scenario.steps.iter().enumerate() {
            let outcome = self.execute(index, step);
            self.executed += 1;
            self.sample_replicas();
            match outcome {
                Err(CliError::Runtime { .. }) if step.tolerant => {}
                Err(e) => {
                    result = Err(e);
                    break;
                }
                Ok(()) => {}
            }
        }
        (self.document(), result)
    }

    fn execute(&mut self, index: usize, step: &Step) -> Result<(), CliError> {
        let runtime = |message: String| CliError::Runtime {
            index,
            line: step.line,
            command: step.text.clone(),
            message,
        };
        match &step.command {
            Command::Create { count, random } => {
                for _ in 0..*count {
                    self.add_node(None, *random, None).map_err(runtime)?;
                }
            }
            Command::Join { name, via } => {
                let via = via.as_ref().map(|v| self.ids[v]);
                self.add_node(Some(name.clone()), false, via)
                    .map_err(runtime)?;
            }
            Command::Leave { name, fail } => {
                let id = self.ids[name];
                self.net
                    .leave(id, !fail)
                    .map_err(|e| runtime(e.to_string()))?;
            }
            Command::Publish { node, bundle, spec } => {
                self.publish(node, bundle, spec).map_err(runtime)?;
            }
            Command::Install { node, uri } => {
                let id = self.ids[node];
                let gw = self
                    .gateways
                    .entry(node.clone())
                    .or_insert_with(|| GatewayState::new(id));
                gw.merge_index(&self.index);
                let report = gw
                    .install(&mut self.net, uri)
                    .map_err(|e| runtime(e.to_string()))?;
                if let Some(&h) = report.hops.last() {
                    self.last_hops.insert("install", h);
                }
            }
            Command::Lookup { node, bundle } => {
                *self.requests.entry(bundle.clone()).or_default() += 1;
                let result = self.net.lookup(self.ids[node], bundle);
                self.last_outcome = Some(outcome_label(&result));
                match result {
                    Ok(found) => {
                        self.last_hops.insert("lookup", found.hops);
                    }
                    Err(StoreError::NotFound { .. } | StoreError::Unavailable { .. }) => {}
                    Err(e) => return Err(runtime(e.to_string())),
                }
            }
            Command::Remove { node, bundle } => {
                self.net
                    .remove(self.ids[node], bundle)
                    .map_err(|e| runtime(e.to_string()))?;
            }
            Command::Lifecycle {
                node,
                bundle,
                action,
            } => {
                let Some(gw) = self.gateways.get_mut(node) else {
                    return Err(runtime(format!("nothing is installed on `{node}`")));
                };
                let r = match action {
                    LifecycleAction::Start => gw.start(bundle).map(drop),
                    LifecycleAction::Stop => gw.stop(bundle).map(drop),
                    LifecycleAction::Uninstall => gw.uninstall(bundle),
                };
                r.map_err(|e| runtime(e.to_string()))?;
            }
            Command::Advance(ticks) => self.net.advance(*ticks),
            Command::Stabilize => self.net.stabilize().map_err(|e| runtime(e.to_string()))?,
            Command::Workload(w) => self.workload(w).map_err(runtime)?,
            Command::Dump => {
                let dump = self.dump(index);
                self.dumps.push(dump);
            }
            Command::Assert(p) => {
                let (holds, observed) = self.evaluate(p);
                if !holds {
                    return Err(CliError::Assertion {
                        index,
                        line: step.line,
                        predicate: step.text["assert".len()..].trim().to_string(),
                        observed,
                    });
                }
            }
        }
        Ok(())
    }

    fn add_node(
        &mut self,
        name: Option<String>,
        random: bool,
        via: Option<NodeId>,
    ) -> Result<(), String> {
        let name = name.unwrap_or_else(|| {
            let n = format!("n{}", self.next_index);
            self.next_index += 1;
            n
        });
        let id = if random {
            NodeId::new(self.rng.random::<u128>())
        } else {
            derive_key(&name).map_err(|e| e.to_string())?
        };
        if self.names.contains_key(&id) {
            return Err(format!("node id {id} of `{name}` is already taken"));
        }
        let bootstrap = match via {
            Some(b) => Some(b),
            None => self.net.live_ids().choose(&mut self.rng).copied(),
        };
        self.net.join(id, bootstrap).map_err(|e| e.to_string())?;
        self.ids.insert(name.clone(), id);
        self.names.insert(id, name);
        Ok(())
    }

    fn publish(&mut self, node: &str, bundle: &str, spec: &PublishSpec) -> Result<(), String> {
        let payload = generate_payload(self.seed, bundle, spec.size);
        let mut descriptor =
            ComponentDescriptor::new(bundle, &spec.version, payload.digest(), spec.size)
                .map_err(|e| e.to_string())?
                .with_imports(spec.imports.clone())
                .with_exports(spec.exports.clone());
        descriptor.start_entry = spec.start.clone();
        let id = self.ids[node];
        let gw = self
            .gateways
            .entry(node.to_string())
            .or_insert_with(|| GatewayState::new(id));
        let trail = gw
            .publish_local(&mut self.net, descriptor, payload)
            .map_err(|e| e.to_string())?;
        let published = gw.index().get(bundle).expect("recorded on publish").clone();
        self.index.upsert(published);
        self.sources.insert(bundle.to_string(), node.to_string());
        self.last_hops.insert("publish", trail.path.len() - 1);
        Ok(())
    }

    fn workload(&mut self, w: &Workload) -> Result<(), String> {
        while self.net.live_count() < w.nodes {
            self.add_node(None, false, None)?;
        }
        let names: Vec<String> = (0..w.bundles).map(|i| format!("bundle-{i}.jar")).collect();
        for name in &names {
            if self.sources.contains_key(name) {
                continue;
            }
            let key = derive_key(name).map_err(|e| e.to_string())?;
            let live = self.net.live_ids();
            let root = root_of(live.iter().copied(), key).map_err(|e| e.to_string())?;
            // publish away from the root so root and source are distinct holders
            let candidates: Vec<NodeId> = live.iter().copied().filter(|&n| n != root).collect();
            let source = *candidates.choose(&mut self.rng).unwrap_or(&root);
            let source_name = self.names[&source].clone();
            self.publish(&source_name, name, &PublishSpec::default())?;
        }

        let zipf = Zipf::new(w.bundles as f64, w.exponent).map_err(|e| e.to_string())?;
        let live = self.net.live_ids();
        let start = self.net.clock();
        let mut ops = Vec::with_capacity(w.requests);
        for i in 0..w.requests {
            let rank = zipf.sample(&mut self.rng) as usize;
            let bundle = &names[rank.clamp(1, w.bundles) - 1];
            let client = *live.choose(&mut self.rng).expect("workload has nodes");
            let op = self
                .net
                .start_lookup(client, bundle, start + i as u64)
                .map_err(|e| e.to_string())?;
            *self.requests.entry(bundle.clone()).or_default() += 1;
            ops.push((op, bundle));
        }
        self.net.settle().map_err(|e| e.to_string())?;
        for (op, bundle) in ops {
            let result = self.net.finish_lookup(op, bundle);
            self.last_outcome = Some(outcome_label(&result));
            if let Ok(found) = result {
                self.last_hops.insert("lookup", found.hops);
            }
        }
        Ok(())
    }

    fn label(&self, id: NodeId) -> String {
        self.names
            .get(&id)
            .cloned()
            .unwrap_or_else(|| id.to_string())
    }

    fn dump(&self, index: usize) -> StoreDump {
        let mut nodes = BTreeMap::new();
        for n in self.net.nodes().filter(|n| n.is_live()) {
            let entries = n
                .store
                .entries()
                .map(|e| DumpEntry {
                    bundle: e.name.clone(),
                    key: e.key.to_string(),
                    role: e.role.as_str().to_string(),
                    bytes: e.payload.as_ref().map_or(0, |p| p.size()),
                    hits: e.hits,
                    last_access: e.last_access,
                })
                .collect();
            nodes.insert(self.label(n.id), entries);
        }
        StoreDump {
            clock: self.net.clock(),
            command: index,
            nodes,
        }
    }

    fn sample_replicas(&mut self) {
        let clock = self.net.clock();
        for bundle in self.sources.keys() {
            let count = self.net.replica_count(bundle) as u64;
            let series = self.samples.entry(bundle.clone()).or_default();
            if series.last().is_none_or(|s| s[1] != count) {
                series.push([clock, count]);
            }
        }
    }

    fn root_name(&self, bundle: &str) -> Option<String> {
        let key = derive_key(bundle).ok()?;
        self.net.root_holders(key).first().map(|&id| self.label(id))
    }

    fn quantity(&self, q: &Quantity) -> Operand {
        let num = |n: f64| Operand::Number(n);
        let word = |w: &str| Operand::Word(w.to_string());
        let hist = |k: &str| {
            self.net
                .metrics()
                .hop_histogram(k)
                .cloned()
                .unwrap_or_default()
        };
        let node = |name: &str| self.ids.get(name).and_then(|&id| self.net.node(id));
        match q {
            Quantity::Replicas(b) => num(self.net.replica_count(b) as f64),
            Quantity::Hops(k) => num(self
                .last_hops
                .get(k.as_str())
                .map_or(f64::NAN, |&h| h as f64)),
            Quantity::MeanHops(k) => num(hist(k).mean()),
            Quantity::MaxHops(k) => num(hist(k).max as f64),
            Quantity::Live => num(self.net.live_count() as f64),
            Quantity::Clock => num(self.net.clock() as f64),
            Quantity::Timeouts => num(self.net.metrics().timeouts as f64),
            Quantity::Entries(n) => num(node(n).map_or(0, |n| n.store.len()) as f64),
            Quantity::Bytes(n) => num(node(n).map_or(0, |n| n.store.stored_bytes()) as f64),
            Quantity::State(n, b) => word(
                self.gateways
                    .get(n)
                    .and_then(|g| g.state(b))
                    .map_or("none", |s| s.as_str()),
            ),
            Quantity::Role(n, b) => {
                let role = node(n)
                    .filter(|n| n.is_live())
                    .zip(derive_key(b).ok())
                    .and_then(|(n, key)| n.store.get(&key).map(|e| e.role));
                word(role.map_or("none", Role::as_str))
            }
            Quantity::Root(b) => word(self.root_name(b).as_deref().unwrap_or("none")),
            Quantity::Outcome => word(self.last_outcome.unwrap_or("none")),
        }
    }

    fn evaluate(&self, p: &Predicate) -> (bool, String) {
        match p {
            Predicate::Not(inner) => {
                let (v, observed) = self.evaluate(inner);
                (!v, observed)
            }
            Predicate::Installed { node, bundle } | Predicate::Active { node, bundle } => {
                let state = self.gateways.get(node).and_then(|g| g.state(bundle));
                let holds = match p {
                    Predicate::Active { .. } => state.is_some_and(|s| s.as_str() == "ACTIVE"),
                    _ => state.is_some(),
                };
                (
                    holds,
                    format!("state {}", state.map_or("none", |s| s.as_str())),
                )
            }
            Predicate::Holds { node, bundle } => {
                let holds = self
                    .ids
                    .get(node)
                    .and_then(|&id| self.net.node(id))
                    .filter(|n| n.is_live())
                    .zip(derive_key(bundle).ok())
                    .is_some_and(|(n, key)| n.store.get(&key).is_some());
                (holds, format!("holds {holds}"))
            }
            Predicate::Compare { lhs, op, rhs } => {
                let value = self.quantity(lhs);
                let holds = match (&value, rhs) {
                    (Operand::Number(a), Operand::Number(b)) => op.holds(a, b),
                    (Operand::Word(a), Operand::Word(b)) => op.holds(a, b),
                    _ => false,
                };
                (holds, format!("observed {value}"))
            }
        }
    }

    pub fn document(&self) -> MetricsDocument {
        let nodes = self
            .net
            .nodes()
            .map(|n| {
                let mut roles = BTreeMap::new();
                for e in n.store.entries() {
                    *roles.entry(e.role.as_str().to_string()).or_default() += 1;
                }
                NodeLoad {
                    name: self.label(n.id),
                    id: n.id.to_string(),
                    status: match n.status {
                        NodeStatus::Joining => "JOINING",
                        NodeStatus::Live => "LIVE",
                        NodeStatus::Departed => "DEPARTED",
                    }
                    .to_string(),
                    entries: n.store.len(),
                    bytes: n.store.stored_bytes(),
                    roles,
                }
            })
            .collect();
        let bundles = self
            .sources
            .iter()
            .map(|(name, source)| {
                let summary = BundleSummary {
                    key: derive_key(name).map(|k| k.to_string()).unwrap_or_default(),
                    source: source.clone(),
                    root: self.root_name(name),
                    requests: self.requests.get(name).copied().unwrap_or(0),
                    replicas: self.net.replica_count(name),
                };
                (name.clone(), summary)
            })
            .collect();
        MetricsDocument {
            seed: self.seed,
            clock: self.net.clock(),
            commands_executed: self.executed,
            nodes,
            bundles,
            replica_samples: self.samples.clone(),
            metrics: self.net.metrics().clone(),
            dumps: self.dumps.clone(),
        }
    }
}

fn outcome_label<T>(r: &Result<T, StoreError>) -> &'static str {
    match r {
        Ok(_) => "ok",
        Err(StoreError::NotFound { .. }) => "not_found",
        Err(StoreError::Unavailable { .. }) => "unavailable",
        Err(_) => "failed",
    }
}
