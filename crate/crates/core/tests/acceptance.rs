//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any failed.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::plan::{check_plan, random_index};
use common::{build_with, payload, rng, scan_root};
use p2pdeploy::cli::{run_scenario, Scenario};
use p2pdeploy::id::Id;
use p2pdeploy::repo::{
    parse_uri, resolve, BundleLocation, ComponentDescriptor, GatewayState, RepoError,
    RepositoryIndex,
};
use p2pdeploy::{derive_key, NodeId, Role, SimConfig, SimNetwork, StoreConfig};
use rand::Rng;
use rand_distr::{Distribution, Zipf};

const ROUTING_SIZES: [usize; 8] = [1, 2, 3, 5, 8, 16, 32, 64];
const ROUTING_KEYS: usize = 256;
const ROUTING_STARTS: usize = 10;
const ROUTING_BUDGET: Duration = Duration::from_secs(10);

const SCALING_NODES: usize = 1024;
const SCALING_KEYS: usize = 200;
const SCALING_LOOKUPS: usize = 10_000;
/// ceil(log16 1024) + 1
const SCALING_MEAN_MAX: f64 = 4.0;
const SCALING_MAX_HOPS: usize = 32 + 5;
const SCALING_BUDGET: Duration = Duration::from_secs(30);

const TRAIL_NODES: usize = 256;
const TRAIL_PUBLISHES: usize = 100;
const JUNCTION_LOOKUPS: usize = 1000;

const CHURN_NODES: usize = 128;
const CHURN_KEYS: usize = 50;
const CHURN_JOINS: usize = 50;
const CHURN_LEAVES: usize = 20;
const CHURN_CLIENTS: usize = 10;
const CHURN_BUDGET: Duration = Duration::from_secs(60);

const ZIPF_NODES: usize = 256;
const ZIPF_BUNDLES: usize = 100;
const ZIPF_LOOKUPS: usize = 10_000;
const ZIPF_EXPONENT: f64 = 1.0;
const ZIPF_DECILE: usize = 10;
const IDLE_TTLS: u64 = 10;
const MIN_IDLE_REPLICAS: usize = 2;
const EVICT_FUZZ: usize = 1000;

const INTEGRITY_PAIRS: usize = 50;
const URI_NAMES: usize = 1000;
const RESOLVE_GRAPHS: u64 = 200;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(started: Instant, budget: Duration) -> Result<(), String> {
    let took = started.elapsed();
    ensure(took < budget, || {
        format!("took {took:.1?}, budget {budget:?}")
    })
}

fn default_net(n: usize, seed: u64, random_ids: bool) -> (SimNetwork, Vec<NodeId>) {
    build_with(n, seed, SimConfig::default(), random_ids)
}

fn routing_oracle() -> Outcome {
    let started = Instant::now();
    let mut pairs = 0;
    for n in ROUTING_SIZES {
        let (mut net, ids) = default_net(n, 1000 + n as u64, false);
        let mut r = rng(n as u64);
        for _ in 0..ROUTING_KEYS {
            let key = Id::new(r.random());
            let root = scan_root(&ids, key);
            for _ in 0..ROUTING_STARTS {
                let start = ids[r.random_range(0..n)];
                let path = net.route(start, key).map_err(|e| e.to_string())?;
                let end = *path.last().unwrap();
                ensure(end == root, || {
                    format!("N={n} key={key}: ended at {end}, root is {root}")
                })?;
                pairs += 1;
            }
        }
    }
    within(started, ROUTING_BUDGET)?;
    Ok(format!(
        "{pairs} routes matched the full scan in {:.1?}",
        started.elapsed()
    ))
}

fn hop_scaling() -> Outcome {
    let started = Instant::now();
    let config = SimConfig {
        store: StoreConfig {
            cache_on_lookup: false,
            ..StoreConfig::default()
        },
        ..SimConfig::default()
    };
    let (mut net, ids) = build_with(SCALING_NODES, 2, config, true);
    let mut r = rng(2);
    for i in 0..SCALING_KEYS {
        let source = ids[r.random_range(0..ids.len())];
        net.publish(source, &format!("k{i}"), payload(i as u64, 8))
            .map_err(|e| e.to_string())?;
    }
    let (mut total, mut max) = (0, 0);
    for _ in 0..SCALING_LOOKUPS {
        let name = format!("k{}", r.random_range(0..SCALING_KEYS));
        let client = ids[r.random_range(0..ids.len())];
        let found = net.lookup(client, &name).map_err(|e| e.to_string())?;
        total += found.hops;
        max = max.max(found.hops);
    }
    let mean = total as f64 / SCALING_LOOKUPS as f64;
    ensure(mean <= SCALING_MEAN_MAX, || {
        format!("mean hops {mean:.3} > {SCALING_MEAN_MAX}")
    })?;
    ensure(max <= SCALING_MAX_HOPS, || {
        format!("max hops {max} > {SCALING_MAX_HOPS}")
    })?;
    within(started, SCALING_BUDGET)?;
    Ok(format!(
        "mean {mean:.3} max {max} over {SCALING_LOOKUPS} lookups in {:.1?}",
        started.elapsed()
    ))
}

/// The network and published names shared by the trail and junction checks.
fn trail_network() -> Result<(SimNetwork, Vec<NodeId>, Vec<String>, usize), String> {
    let (mut net, ids) = default_net(TRAIL_NODES, 3, false);
    let mut r = rng(3);
    let mut names = Vec::new();
    let mut checked = 0;
    for i in 0..TRAIL_PUBLISHES {
        let name = format!("trail-{i}.jar");
        let source = ids[r.random_range(0..ids.len())];
        let trail = net
            .publish(source, &name, payload(i as u64, 64))
            .map_err(|e| e.to_string())?;
        for &hop in &trail.path {
            let held = net
                .node(hop)
                .and_then(|n| n.store.get(&trail.key))
                .is_some();
            ensure(held, || format!("{name}: path node {hop} holds no entry"))?;
            checked += 1;
        }
        names.push(name);
    }
    Ok((net, ids, names, checked))
}

fn trail_completeness() -> Outcome {
    let (_, _, names, checked) = trail_network()?;
    Ok(format!(
        "{} publishes, all {checked} path nodes held an entry",
        names.len()
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Holding {
    Yes,
    Maybe,
    No,
}

fn junction_retrieval() -> Outcome {
    let (mut net, ids, names, _) = trail_network()?;
    let mut r = rng(4);
    let (mut short, mut uncertain) = (0, 0);
    let ttl = net.config().store.ttl;
    let latency = net.config().latency_max;
    let interval = net.config().maintenance_interval;
    for _ in 0..JUNCTION_LOOKUPS {
        let name = &names[r.random_range(0..names.len())];
        let key = derive_key(name).unwrap();
        let client = ids[r.random_range(0..ids.len())];
        // routing state does not change during a lookup, so the route can be
        // traced and its holders classified beforehand. An unpinned entry
        // that may pass its ttl before the lookup reaches it is uncertain.
        let route = net.trace_route(client, key);
        let horizon = net.clock() + (route.len() as u64 + 1) * (latency + interval);
        let held: Vec<Holding> = route
            .iter()
            .map(|&n| match net.node(n).unwrap().store.get(&key) {
                None => Holding::No,
                Some(e) if e.role.is_pinned() || e.last_access + ttl >= horizon => Holding::Yes,
                Some(_) => Holding::Maybe,
            })
            .collect();
        let found = net.lookup(client, name).map_err(|e| e.to_string())?;
        let at = found.hops;
        ensure(
            at < route.len() && found.path[..=at] == route[..=at] && found.served_by == route[at],
            || format!("{name}: served by {} off the traced route", found.served_by),
        )?;
        ensure(
            held[at] != Holding::No && !held[..at].contains(&Holding::Yes),
            || format!("{name}: served at hop {at}, holders on route {held:?}"),
        )?;
        uncertain += held[..=at].iter().filter(|&&h| h == Holding::Maybe).count();
        if found.hops + 1 < route.len() {
            short += 1;
        }
    }
    Ok(format!(
        "{JUNCTION_LOOKUPS} lookups, {short} stopped before the root, {uncertain} near-expiry entries on the way"
    ))
}

fn churn_survivability() -> Outcome {
    let started = Instant::now();
    let (mut net, ids) = default_net(CHURN_NODES, 5, false);
    let mut r = rng(5);
    let mut live: Vec<NodeId> = ids;
    let names: Vec<String> = (0..CHURN_KEYS).map(|i| format!("churn-{i}.jar")).collect();
    let mut sources = BTreeMap::new();
    for (i, name) in names.iter().enumerate() {
        let source = live[r.random_range(0..live.len())];
        net.publish(source, name, payload(i as u64, 32))
            .map_err(|e| e.to_string())?;
        sources.insert(name.clone(), source);
    }
    let mut former_roots: BTreeMap<String, BTreeSet<NodeId>> = BTreeMap::new();
    let mut events: Vec<bool> = std::iter::repeat_n(true, CHURN_JOINS)
        .chain(std::iter::repeat_n(false, CHURN_LEAVES))
        .collect();
    for i in (1..events.len()).rev() {
        events.swap(i, r.random_range(0..=i));
    }
    let mut joined = 0;
    for join in events {
        for name in &names {
            let key = derive_key(name).unwrap();
            former_roots
                .entry(name.clone())
                .or_default()
                .extend(net.root_holders(key));
        }
        if join {
            let id = derive_key(&format!("late{joined}")).unwrap();
            joined += 1;
            let boot = live[r.random_range(0..live.len())];
            net.join(id, Some(boot)).map_err(|e| e.to_string())?;
            live.push(id);
        } else {
            let gone = live.remove(r.random_range(0..live.len()));
            net.leave(gone, true).map_err(|e| e.to_string())?;
        }
    }
    net.settle().map_err(|e| e.to_string())?;

    let mut retained = 0;
    for name in &names {
        let key = derive_key(name).unwrap();
        let root = scan_root(&live, key);
        let holders = net.root_holders(key);
        ensure(holders == [root], || {
            format!("{name}: ROOT held by {holders:?}, expected {root}")
        })?;
        for &former in &former_roots[name] {
            if former == root || !net.is_live(former) {
                continue;
            }
            let entry = net.node(former).unwrap().store.get(&key);
            let kept = entry.is_some_and(|e| {
                e.payload.is_some() && matches!(e.role, Role::Retained | Role::Source)
            });
            ensure(kept, || {
                format!(
                    "{name}: former root {former} kept {:?}",
                    entry.map(|e| e.role)
                )
            })?;
            retained += 1;
        }
        for _ in 0..CHURN_CLIENTS {
            let client = live[r.random_range(0..live.len())];
            let found = net
                .lookup(client, name)
                .map_err(|e| format!("{name} from {client}: {e}"))?;
            ensure(found.payload.is_intact(), || {
                format!("{name}: corrupt payload")
            })?;
        }
    }
    within(started, CHURN_BUDGET)?;
    Ok(format!(
        "{} keys reachable after {CHURN_JOINS} joins and {CHURN_LEAVES} leaves, {retained} retained copies checked, {:.1?}",
        names.len(),
        started.elapsed()
    ))
}

struct ZipfRun {
    replicas: Vec<usize>,
    requests: Vec<usize>,
    idle_replicas: Vec<usize>,
    pinned_evicted: usize,
    evictions: usize,
}

/// Zipf lookups over a cached network, with random eviction passes fuzzed
/// in between. Each pass must leave every pinned entry in place.
fn zipf_run() -> Result<ZipfRun, String> {
    let (mut net, ids) = default_net(ZIPF_NODES, 6, true);
    let mut r = rng(6);
    let names: Vec<String> = (0..ZIPF_BUNDLES)
        .map(|i| format!("bundle-{i}.jar"))
        .collect();
    for (i, name) in names.iter().enumerate() {
        let source = ids[r.random_range(0..ids.len())];
        net.publish(source, name, payload(i as u64, 128))
            .map_err(|e| e.to_string())?;
    }
    let zipf = Zipf::new(ZIPF_BUNDLES as f64, ZIPF_EXPONENT).unwrap();
    let fuzz_every = ZIPF_LOOKUPS / EVICT_FUZZ;
    let ttl = net.config().store.ttl;
    let mut requests = vec![0; ZIPF_BUNDLES];
    let (mut pinned_evicted, mut evictions) = (0, 0);
    for i in 0..ZIPF_LOOKUPS {
        let rank = zipf.sample(&mut r) as usize - 1;
        requests[rank] += 1;
        let client = ids[r.random_range(0..ids.len())];
        net.lookup(client, &names[rank])
            .map_err(|e| e.to_string())?;
        if i % fuzz_every == 0 {
            let node = ids[r.random_range(0..ids.len())];
            let now = net.clock() + r.random_range(0..3 * ttl);
            let pinned = |net: &SimNetwork| -> BTreeSet<Id> {
                net.node(node)
                    .unwrap()
                    .store
                    .entries()
                    .filter(|e| e.role.is_pinned())
                    .map(|e| e.key)
                    .collect()
            };
            let before = pinned(&net);
            evictions += net.evict(node, now).len();
            pinned_evicted += before.difference(&pinned(&net)).count();
        }
    }
    let replicas = names.iter().map(|n| net.replica_count(n)).collect();
    net.advance(IDLE_TTLS * ttl);
    let idle_replicas = names.iter().map(|n| net.replica_count(n)).collect();
    Ok(ZipfRun {
        replicas,
        requests,
        idle_replicas,
        pinned_evicted,
        evictions,
    })
}

fn small_world(run: &ZipfRun) -> Outcome {
    let mut by_demand: Vec<usize> = (0..ZIPF_BUNDLES).collect();
    by_demand.sort_by_key(|&i| (std::cmp::Reverse(run.requests[i]), i));
    let mean =
        |idx: &[usize]| idx.iter().map(|&i| run.replicas[i] as f64).sum::<f64>() / idx.len() as f64;
    let top = mean(&by_demand[..ZIPF_DECILE]);
    let bottom = mean(&by_demand[ZIPF_BUNDLES - ZIPF_DECILE..]);
    ensure(top > bottom, || {
        format!("top-{ZIPF_DECILE} mean {top:.2} <= bottom-{ZIPF_DECILE} mean {bottom:.2}")
    })?;
    let floor = *run.idle_replicas.iter().min().unwrap();
    ensure(floor >= MIN_IDLE_REPLICAS, || {
        format!("a bundle fell to {floor} replicas when idle")
    })?;
    Ok(format!(
        "replicas top {top:.2} vs bottom {bottom:.2}; idle minimum {floor}"
    ))
}

fn eviction_safety(run: &ZipfRun) -> Outcome {
    ensure(run.pinned_evicted == 0, || {
        format!("{} pinned entries evicted", run.pinned_evicted)
    })?;
    Ok(format!(
        "{EVICT_FUZZ} fuzzed passes evicted {} unpinned entries, no pinned ones",
        run.evictions
    ))
}

fn end_to_end_integrity() -> Outcome {
    let (mut net, ids) = default_net(64, 8, false);
    let mut r = rng(8);
    let mut gateways: BTreeMap<NodeId, GatewayState> = BTreeMap::new();
    let mut shared = RepositoryIndex::new();
    for i in 0..INTEGRITY_PAIRS {
        let from = ids[r.random_range(0..ids.len())];
        let to = ids[r.random_range(0..ids.len())];
        let p = payload(800 + i as u64, r.random_range(1..20_000));
        let name = format!("int-{i}.jar");
        let d = ComponentDescriptor::new(&name, "1.0", p.digest(), p.size() as u64)
            .map_err(|e| e.to_string())?;
        let publisher = gateways
            .entry(from)
            .or_insert_with(|| GatewayState::new(from));
        publisher
            .publish_local(&mut net, d, p.clone())
            .map_err(|e| e.to_string())?;
        shared.upsert(publisher.index().get(&name).unwrap().clone());
        let installer = gateways.entry(to).or_insert_with(|| GatewayState::new(to));
        installer.merge_index(&shared);
        installer
            .install(&mut net, &format!("p2p://{name}"))
            .map_err(|e| e.to_string())?;
        let got = installer
            .payload(&name)
            .ok_or(format!("{name} not installed"))?;
        ensure(got.bytes() == p.bytes(), || {
            format!("{name}: installed bytes differ")
        })?;
    }
    Ok(format!("{INTEGRITY_PAIRS} installs bit-identical"))
}

fn zipf_scenario() -> Scenario {
    let text = format!(
        "create {ZIPF_NODES} random\nworkload zipf {ZIPF_NODES} {ZIPF_BUNDLES} {ZIPF_LOOKUPS} {ZIPF_EXPONENT}\nadvance {}\n",
        IDLE_TTLS * StoreConfig::default().ttl
    );
    Scenario::parse(&text, None).unwrap()
}

fn determinism() -> Outcome {
    let scenario = zipf_scenario();
    let document = |seed| {
        let (doc, r) = run_scenario(&scenario, Some(seed));
        r.map(|_| doc.to_json()).map_err(|e| e.to_string())
    };
    let a = document(9)?;
    let b = document(9)?;
    let c = document(10)?;
    ensure(a == b, || "same seed gave different documents".into())?;
    ensure(a != c, || "different seeds gave the same document".into())?;
    Ok(format!(
        "{} byte document reproduced; another seed differs",
        a.len()
    ))
}

fn repo_layer() -> Outcome {
    let mut r = rng(10);
    let alphabet: Vec<char> = "abcXYZ019._-+~:@!é漢".chars().collect();
    for _ in 0..URI_NAMES {
        let len = r.random_range(1..30);
        let name: String = (0..len)
            .map(|_| alphabet[r.random_range(0..alphabet.len())])
            .collect();
        let text = format!("p2p://{name}");
        match parse_uri(&text).map_err(|e| e.to_string())? {
            BundleLocation::P2p(uri) => {
                ensure(uri.bundle_name() == name && uri.to_string() == text, || {
                    format!("{text} did not round-trip")
                })?
            }
            BundleLocation::Passthrough(_) => return Err(format!("{text} taken as passthrough")),
        }
    }
    for seed in 0..RESOLVE_GRAPHS {
        let index = random_index(7000 + seed, seed % 2 == 0);
        for d in index.entries() {
            let plan = resolve(&index, &d.name).map_err(|e| e.to_string())?;
            check_plan(&index, &d.name, &plan).map_err(|e| format!("graph {seed}: {e}"))?;
        }
    }
    let illegal = illegal_transitions()?;
    Ok(format!(
        "{URI_NAMES} URIs, {RESOLVE_GRAPHS} graphs, {illegal} illegal transitions rejected"
    ))
}

/// Tries every transition the lifecycle forbids and checks that each is
/// refused without changing any state.
fn illegal_transitions() -> Result<usize, String> {
    let (mut net, ids) = default_net(4, 11, false);
    let mut gw = GatewayState::new(ids[1]);
    let mut publisher = GatewayState::new(ids[0]);
    let specs: [(&str, &[&str], &[&str]); 2] = [
        ("lib.jar", &[], &["lib.api"]),
        ("app.jar", &["lib.api"], &[]),
    ];
    for (i, (name, imports, exports)) in specs.iter().enumerate() {
        let p = payload(i as u64, 10);
        let d = ComponentDescriptor::new(name, "1", p.digest(), 10)
            .unwrap()
            .with_imports(imports.iter().copied())
            .with_exports(exports.iter().copied());
        publisher
            .publish_local(&mut net, d, p)
            .map_err(|e| e.to_string())?;
    }
    gw.merge_index(publisher.index());

    let mut rejected = 0;
    let mut expect_refusal =
        |gw: &mut GatewayState,
         what: &str,
         f: &dyn Fn(&mut GatewayState) -> Result<(), RepoError>| {
            let before: Vec<_> = gw.installed().map(|(n, s)| (n.to_string(), s)).collect();
            let result = f(gw);
            let after: Vec<_> = gw.installed().map(|(n, s)| (n.to_string(), s)).collect();
            ensure(result.is_err(), || format!("{what} was allowed"))?;
            ensure(before == after, || format!("{what} changed state"))?;
            rejected += 1;
            Ok::<_, String>(())
        };
    expect_refusal(&mut gw, "start before install", &|g| {
        g.start("lib.jar").map(|_| ())
    })?;
    expect_refusal(&mut gw, "stop before install", &|g| {
        g.stop("lib.jar").map(|_| ())
    })?;
    expect_refusal(&mut gw, "uninstall before install", &|g| {
        g.uninstall("lib.jar")
    })?;
    gw.install(&mut net, "p2p://app.jar")
        .map_err(|e| e.to_string())?;
    expect_refusal(&mut gw, "stop when installed", &|g| {
        g.stop("app.jar").map(|_| ())
    })?;
    gw.start("lib.jar").map_err(|e| e.to_string())?;
    gw.start("app.jar").map_err(|e| e.to_string())?;
    expect_refusal(&mut gw, "start when active", &|g| {
        g.start("app.jar").map(|_| ())
    })?;
    expect_refusal(&mut gw, "uninstall when active", &|g| {
        g.uninstall("app.jar")
    })?;
    gw.stop("lib.jar").map_err(|e| e.to_string())?;
    expect_refusal(&mut gw, "uninstall of a provider in use", &|g| {
        g.uninstall("lib.jar")
    })?;
    gw.stop("app.jar").map_err(|e| e.to_string())?;
    gw.uninstall("app.jar").map_err(|e| e.to_string())?;
    gw.uninstall("lib.jar").map_err(|e| e.to_string())?;
    expect_refusal(&mut gw, "start after uninstall", &|g| {
        g.start("lib.jar").map(|_| ())
    })?;
    ensure(gw.is_consistent(), || "gateway inconsistent".into())?;
    Ok(rejected)
}

fn main() -> ExitCode {
    std::panic::set_hook(Box::new(|_| {}));
    let started = Instant::now();
    let mut zipf: Option<Result<ZipfRun, String>> = None;
    let mut with_zipf = |f: fn(&ZipfRun) -> Outcome| -> Outcome {
        match zipf.get_or_insert_with(zipf_run) {
            Ok(run) => f(run),
            Err(e) => Err(format!("zipf run failed: {e}")),
        }
    };
    let results: Vec<(u8, &str, Outcome)> = vec![
        (1, "routing oracle", guarded(routing_oracle)),
        (2, "hop scaling", guarded(hop_scaling)),
        (3, "trail completeness", guarded(trail_completeness)),
        (4, "junction retrieval", guarded(junction_retrieval)),
        (5, "churn survivability", guarded(churn_survivability)),
        (
            6,
            "small-world replication",
            guarded(|| with_zipf(small_world)),
        ),
        (7, "eviction safety", guarded(|| with_zipf(eviction_safety))),
        (8, "end-to-end integrity", guarded(end_to_end_integrity)),
        (9, "determinism", guarded(determinism)),
        (10, "repo layer", guarded(repo_layer)),
    ];
    let mut failed = 0;
    for (n, title, outcome) in &results {
        match outcome {
            Ok(detail) => println!("criterion {n:>2} {title}: PASS ({detail})"),
            Err(why) => {
                failed += 1;
                println!("criterion {n:>2} {title}: FAIL ({why})");
            }
        }
    }
    println!(
        "{} of {} criteria passed in {:.1?}",
        results.len() - failed,
        results.len(),
        started.elapsed()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(outcome) => outcome,
        Err(panic) => Err(panic
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())),
    }
}
