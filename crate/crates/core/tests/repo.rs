mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::plan::{check_plan, descriptor, random_index};
use common::{build, payload, rng};
use p2pdeploy::repo::{
    parse_uri, resolve, BundleLocation, ComponentDescriptor, GatewayState, LifecycleState, P2pUri,
    RepoError, RepositoryIndex,
};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn resolve_satisfies_the_independent_checker() {
    for seed in 0..300 {
        let index = random_index(seed, seed % 2 == 0);
        for d in index.entries() {
            let plan = resolve(&index, &d.name).unwrap();
            check_plan(&index, &d.name, &plan)
                .unwrap_or_else(|e| panic!("seed {seed} {}: {e}\n{plan:?}", d.name));
        }
    }
}

#[test]
fn checker_rejects_bad_orders() {
    let a = descriptor("A", "1", &["p".into()], &[]);
    let b = descriptor("B", "1", &[], &["p".into()]);
    let index = RepositoryIndex::from_entries(vec![a, b]).unwrap();
    let mut plan = resolve(&index, "A").unwrap();
    check_plan(&index, "A", &plan).unwrap();
    plan.groups.reverse();
    assert!(check_plan(&index, "A", &plan).is_err());
}

#[test]
fn unresolvable_import_names_the_package() {
    let a = descriptor("A", "1", &["p".into()], &[]);
    let b = descriptor("B", "1", &["q".into()], &["p".into()]);
    let index = RepositoryIndex::from_entries(vec![a, b]).unwrap();
    assert_eq!(
        resolve(&index, "A"),
        Err(RepoError::Unresolvable {
            bundle: "B".into(),
            package: "q".into()
        })
    );
}

fn arb_package() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9.]{0,8}"
}

prop_compose! {
    fn arb_descriptor()(
        name in "[A-Za-z0-9._-]{1,12}",
        version in prop::collection::vec(0u32..100, 1..4),
        digest in any::<u128>(),
        size in any::<u64>(),
        start in prop::option::of("[A-Za-z.]{1,20}"),
        imports in prop::collection::vec(arb_package(), 0..4),
        exports in prop::collection::vec(arb_package(), 0..4),
    ) -> ComponentDescriptor {
        let version: Vec<String> = version.iter().map(u32::to_string).collect();
        let mut d = ComponentDescriptor::new(&name, &version.join("."), digest, size)
            .unwrap()
            .with_imports(imports)
            .with_exports(exports);
        d.start_entry = start;
        d
    }
}

prop_compose! {
    fn arb_index()(entries in prop::collection::vec(arb_descriptor(), 0..5)) -> RepositoryIndex {
        let mut seen = BTreeSet::new();
        let unique = entries.into_iter().filter(|d| seen.insert(d.name.clone())).collect();
        RepositoryIndex::from_entries(unique).unwrap()
    }
}

proptest! {
    #[test]
    fn index_file_round_trips(index in arb_index()) {
        let text = index.to_text();
        let back = RepositoryIndex::parse(&text).unwrap();
        prop_assert_eq!(&back, &index);
        prop_assert_eq!(back.to_text(), text);
    }

    #[test]
    fn truncations_never_yield_partial_records(index in arb_index(), cut in any::<prop::sample::Index>()) {
        let text = index.to_text();
        prop_assume!(!text.is_empty());
        let at = cut.index(text.len());
        let Some(prefix) = text.get(..at) else { return Ok(()) };
        match RepositoryIndex::parse(prefix) {
            Err(_) => {}
            Ok(parsed) => {
                // only a cut exactly after a complete record can parse
                let k = parsed.len();
                prop_assert!(k < index.len() || prefix == text);
                prop_assert_eq!(parsed.entries(), &index.entries()[..k]);
                prop_assert_eq!(parsed.to_text(), prefix);
            }
        }
    }

    #[test]
    fn uri_round_trip(name in "[^/\\s]{1,40}") {
        let text = format!("p2p://{name}");
        match parse_uri(&text).unwrap() {
            BundleLocation::P2p(uri) => {
                prop_assert_eq!(uri.bundle_name(), name.as_str());
                prop_assert_eq!(uri.to_string(), text);
            }
            BundleLocation::Passthrough(_) => prop_assert!(false),
        }
    }

    #[test]
    fn lifecycle_never_reaches_an_unsafe_state(ops in prop::collection::vec((0u8..4, 0usize..4), 1..40)) {
        let (mut net, ids) = build(3, 31);
        let mut publisher = GatewayState::new(ids[0]);
        let names = ["base.jar", "mid.jar", "top.jar", "alt.jar"];
        let deps: [(&[&str], &[&str]); 4] = [
            (&[], &["p.base"]),
            (&["p.base"], &["p.mid"]),
            (&["p.mid", "p.base"], &[]),
            (&[], &["p.mid"]),
        ];
        for (i, name) in names.iter().enumerate() {
            let p = payload(i as u64, 16);
            let d = ComponentDescriptor::new(name, "1", p.digest(), 16)
                .unwrap()
                .with_imports(deps[i].0.iter().copied())
                .with_exports(deps[i].1.iter().copied());
            publisher.publish_local(&mut net, d, p).unwrap();
        }
        let mut gw = GatewayState::new(ids[1]);
        gw.merge_index(publisher.index());
        for (op, which) in ops {
            let name = names[which];
            let before = gw.state(name);
            let result = match op {
                0 => gw.install(&mut net, &format!("p2p://{name}")).map(|_| ()),
                1 => gw.start(name).map(|_| ()),
                2 => gw.stop(name).map(|_| ()),
                _ => gw.uninstall(name),
            };
            match (op, before, &result) {
                (1, Some(LifecycleState::Active) | None, r) => prop_assert!(r.is_err()),
                (2, Some(LifecycleState::Installed) | None, r) => prop_assert!(r.is_err()),
                (3, Some(LifecycleState::Active) | None, r) => prop_assert!(r.is_err()),
                _ => {}
            }
            if let Err(RepoError::Lifecycle { state, .. }) = &result {
                prop_assert_eq!(*state, before);
                prop_assert_eq!(gw.state(name), before);
            }
            prop_assert!(gw.is_consistent());
        }
    }
}

#[test]
fn p2p_uri_rejects_bad_names() {
    assert!("p2p://a/b".parse::<P2pUri>().is_err());
    assert!(matches!(
        "ftp://x".parse::<P2pUri>(),
        Err(RepoError::Passthrough(_))
    ));
}

#[test]
fn publish_then_install_elsewhere_is_bit_identical() {
    let (mut net, ids) = build(24, 32);
    let mut r = rng(32);
    let mut gateways: BTreeMap<usize, GatewayState> = BTreeMap::new();
    let mut shared = RepositoryIndex::new();
    let mut published = Vec::new();
    for i in 0..15 {
        let from = r.random_range(0..ids.len());
        let p = payload(500 + i, r.random_range(1..5000));
        let name = format!("e{i}.jar");
        let mut d = ComponentDescriptor::new(&name, "1.0", p.digest(), p.size() as u64).unwrap();
        if i > 0 {
            d = d.with_imports([format!("pkg.e{}", r.random_range(0..i))]);
        }
        d = d.with_exports([format!("pkg.e{i}")]);
        let gw = gateways
            .entry(from)
            .or_insert_with(|| GatewayState::new(ids[from]));
        gw.publish_local(&mut net, d, p.clone()).unwrap();
        shared.upsert(gw.index().get(&name).unwrap().clone());
        published.push((name, p));
    }
    for (name, p) in &published {
        let to = r.random_range(0..ids.len());
        let gw = gateways
            .entry(to)
            .or_insert_with(|| GatewayState::new(ids[to]));
        gw.merge_index(&shared);
        gw.install(&mut net, &format!("p2p://{name}")).unwrap();
        assert_eq!(gw.payload(name).unwrap().bytes(), p.bytes());
        gw.start(name).unwrap();
        assert!(gw.is_consistent());
    }
}

#[test]
fn publish_local_twice_keeps_one_index_entry() {
    let (mut net, ids) = build(4, 33);
    let mut gw = GatewayState::new(ids[2]);
    let p = payload(33, 70);
    let d = ComponentDescriptor::new("twice.jar", "1", p.digest(), 70).unwrap();
    let first = gw.publish_local(&mut net, d.clone(), p.clone()).unwrap();
    let second = gw.publish_local(&mut net, d, p).unwrap();
    assert_eq!(first.root, second.root);
    assert_eq!(gw.index().len(), 1);
    assert_eq!(
        gw.index().get("twice.jar").unwrap().source_uri,
        "p2p://twice.jar"
    );
}

#[test]
fn missing_dependency_aborts_install_naming_it() {
    let (mut net, ids) = build(6, 34);
    let mut gw = GatewayState::new(ids[0]);
    let pa = payload(34, 10);
    let a = ComponentDescriptor::new("A.jar", "1", pa.digest(), 10)
        .unwrap()
        .with_imports(["b.api"]);
    gw.publish_local(&mut net, a, pa).unwrap();
    let b = ComponentDescriptor::new("B.jar", "1", 1, 1)
        .unwrap()
        .with_exports(["b.api"]);
    let mut client = GatewayState::new(ids[3]);
    client.merge_index(gw.index());
    client.merge_index(&RepositoryIndex::from_entries(vec![b]).unwrap());
    let err = client.install(&mut net, "p2p://A.jar").unwrap_err();
    assert!(
        matches!(&err, RepoError::InstallAborted { dependency, .. } if dependency == "B.jar"),
        "{err}"
    );
    assert_eq!(client.installed().count(), 0);
}
