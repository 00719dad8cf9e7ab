//! Dependency resolution over package imports and exports.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

use super::{ComponentDescriptor, RepoError, RepositoryIndex};

/// Bundles to install together. A cyclic group imports from itself.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstallGroup {
    pub bundles: Vec<String>,
    pub cyclic: bool,
}

/// Install order, providers before dependents.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct InstallPlan {
    pub groups: Vec<InstallGroup>,
}

impl InstallPlan {
    pub fn order(&self) -> Vec<&str> {
        self.groups
            .iter()
            .flat_map(|g| g.bundles.iter().map(String::as_str))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.groups.iter().map(|g| g.bundles.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }
}

pub fn resolve(index: &RepositoryIndex, name: &str) -> Result<InstallPlan, RepoError> {
    resolve_with_base(index, name, &BTreeSet::new())
}

/// Like [`resolve`], treating every package in `base` as already provided.
pub fn resolve_with_base(
    index: &RepositoryIndex,
    name: &str,
    base: &BTreeSet<String>,
) -> Result<InstallPlan, RepoError> {
    index
        .get(name)
        .ok_or_else(|| RepoError::UnknownBundle(name.to_string()))?;
    let providers = best_providers(index);

    // closure and provider edges, dependent -> provider
    let mut members: BTreeSet<&str> = BTreeSet::new();
    let mut edges: Vec<(&str, &str)> = Vec::new();
    let mut queue = VecDeque::from([name]);
    members.insert(name);
    while let Some(b) = queue.pop_front() {
        let d = index.get(b).expect("closure only holds indexed bundles");
        for package in &d.imports {
            if base.contains(package) {
                continue;
            }
            let provider =
                providers
                    .get(package.as_str())
                    .ok_or_else(|| RepoError::Unresolvable {
                        bundle: b.to_string(),
                        package: package.clone(),
                    })?;
            edges.push((b, provider.name.as_str()));
            if members.insert(&provider.name) {
                queue.push_back(&provider.name);
            }
        }
    }

    let mut graph = DiGraph::<&str, ()>::new();
    let nodes: BTreeMap<&str, _> = members.iter().map(|&m| (m, graph.add_node(m))).collect();
    for (from, to) in edges {
        graph.update_edge(nodes[from], nodes[to], ());
    }
    // tarjan yields sinks (pure providers) first
    let groups = tarjan_scc(&graph)
        .into_iter()
        .map(|scc| {
            let mut bundles: Vec<String> = scc.iter().map(|&i| graph[i].to_string()).collect();
            bundles.sort();
            InstallGroup {
                cyclic: bundles.len() > 1,
                bundles,
            }
        })
        .collect();
    Ok(InstallPlan { groups })
}

/// Provider for each exported package: highest version, then smallest name.
fn best_providers(index: &RepositoryIndex) -> BTreeMap<&str, &ComponentDescriptor> {
    let mut best: BTreeMap<&str, &ComponentDescriptor> = BTreeMap::new();
    for d in index.entries() {
        for package in &d.exports {
            best.entry(package)
                .and_modify(|cur| {
                    if (d.version > cur.version) || (d.version == cur.version && d.name < cur.name)
                    {
                        *cur = d;
                    }
                })
                .or_insert(d);
        }
    }
    best
}
