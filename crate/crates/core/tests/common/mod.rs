#![allow(dead_code)]

pub mod plan;

use p2pdeploy::id::Id;
use p2pdeploy::{derive_key, NodeId, SimConfig, SimNetwork};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` nodes named `n0..`, each joining through a random earlier node.
pub fn build(n: usize, seed: u64) -> (SimNetwork, Vec<NodeId>) {
    build_with(n, seed, SimConfig::default(), false)
}

/// Like [`build`] with uniform random ids instead of name-derived ones.
pub fn build_random(n: usize, seed: u64) -> (SimNetwork, Vec<NodeId>) {
    build_with(n, seed, SimConfig::default(), true)
}

pub fn build_with(
    n: usize,
    seed: u64,
    config: SimConfig,
    random_ids: bool,
) -> (SimNetwork, Vec<NodeId>) {
    let mut net = SimNetwork::new(seed, config);
    let mut r = rng(seed ^ 0xb007);
    let mut ids: Vec<NodeId> = Vec::new();
    for i in 0..n {
        let id = if random_ids {
            Id::new(r.random())
        } else {
            derive_key(&format!("n{i}")).unwrap()
        };
        let boot = (!ids.is_empty()).then(|| ids[r.random_range(0..ids.len())]);
        net.join(id, boot).unwrap();
        ids.push(id);
    }
    (net, ids)
}

/// Independent full scan: smallest circular distance, then smallest id.
pub fn scan_root(ids: &[NodeId], key: NodeId) -> NodeId {
    let k = key.raw();
    *ids.iter()
        .min_by_key(|id| {
            let a = id.raw().wrapping_sub(k);
            let b = k.wrapping_sub(id.raw());
            (a.min(b), id.raw())
        })
        .unwrap()
}

pub fn payload(seed: u64, len: usize) -> p2pdeploy::ComponentPayload {
    let mut r = rng(seed);
    let bytes: Vec<u8> = (0..len).map(|_| r.random()).collect();
    p2pdeploy::ComponentPayload::new(bytes)
}
