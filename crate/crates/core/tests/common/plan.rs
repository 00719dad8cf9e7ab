use std::collections::BTreeSet;

use p2pdeploy::repo::{ComponentDescriptor, InstallPlan, RepositoryIndex};
use rand::Rng;

use super::rng;

/// Checks a plan without looking at how it was built: every import of
/// every bundle is provided by the base set, an earlier group, or its own
/// group when that group is a cycle.
pub fn check_plan(index: &RepositoryIndex, root: &str, plan: &InstallPlan) -> Result<(), String> {
    let order = plan.order();
    let unique: BTreeSet<&str> = order.iter().copied().collect();
    if unique.len() != order.len() {
        return Err("bundle listed twice".into());
    }
    if order.last() != Some(&root)
        && !plan
            .groups
            .last()
            .is_some_and(|g| g.bundles.iter().any(|b| b == root))
    {
        return Err(format!("{root} is not in the final group"));
    }
    let mut available: BTreeSet<&str> = BTreeSet::new();
    for group in &plan.groups {
        if group.cyclic != (group.bundles.len() > 1) {
            return Err("cycle flag disagrees with group size".into());
        }
        let mut group_exports: BTreeSet<&str> = BTreeSet::new();
        for b in &group.bundles {
            let d = index.get(b).ok_or(format!("{b} not in index"))?;
            group_exports.extend(d.exports.iter().map(String::as_str));
        }
        for b in &group.bundles {
            let d = index.get(b).unwrap();
            for p in &d.imports {
                let own = d.exports.contains(p);
                let ok = available.contains(p.as_str())
                    || own
                    || (group.cyclic && group_exports.contains(p.as_str()));
                if !ok {
                    return Err(format!("{b} imports {p} before any provider"));
                }
            }
        }
        available.extend(group_exports);
    }
    Ok(())
}

pub fn descriptor(
    name: &str,
    version: &str,
    imports: &[String],
    exports: &[String],
) -> ComponentDescriptor {
    ComponentDescriptor::new(name, version, 0, 0)
        .unwrap()
        .with_imports(imports.iter().cloned())
        .with_exports(exports.iter().cloned())
}

/// Random dependency graph over at most 8 bundles. With `acyclic`, bundle i
/// only imports packages exported by bundles j > i.
pub fn random_index(seed: u64, acyclic: bool) -> RepositoryIndex {
    let mut r = rng(seed);
    let n = r.random_range(1..=8);
    let exports: Vec<Vec<String>> = (0..n)
        .map(|i| {
            let mut e = vec![format!("pkg{i}")];
            if r.random_bool(0.3) {
                e.push(format!("shared{}", r.random_range(0..2)));
            }
            e
        })
        .collect();
    let mut entries = Vec::new();
    for i in 0..n {
        let candidates: Vec<usize> = if acyclic {
            (i + 1..n).collect()
        } else {
            (0..n).filter(|&j| j != i).collect()
        };
        let mut imports = Vec::new();
        for &j in &candidates {
            if r.random_bool(0.35) {
                imports.push(exports[j][0].clone());
            }
        }
        let version = format!("{}.{}", r.random_range(0..3), r.random_range(0..3));
        entries.push(descriptor(
            &format!("b{i}.jar"),
            &version,
            &imports,
            &exports[i],
        ));
    }
    RepositoryIndex::from_entries(entries).unwrap()
}
