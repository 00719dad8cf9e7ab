//! The per-run metrics document and its human-readable summary.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::simnet::{Metrics, Tick};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsDocument {
    pub seed: u64,
    pub clock: Tick,
    pub commands_executed: usize,
    pub nodes: Vec<NodeLoad>,
    pub bundles: BTreeMap<String, BundleSummary>,
    /// `[clock, replica count]` whenever the count changed.
    pub replica_samples: BTreeMap<String, Vec<[u64; 2]>>,
    pub metrics: Metrics,
    pub dumps: Vec<StoreDump>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeLoad {
    pub name: String,
    pub id: String,
    pub status: String,
    pub entries: usize,
    pub bytes: usize,
    pub roles: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleSummary {
    pub key: String,
    pub source: String,
    pub root: Option<String>,
    pub requests: u64,
    pub replicas: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoreDump {
    pub clock: Tick,
    pub command: usize,
    pub nodes: BTreeMap<String, Vec<DumpEntry>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DumpEntry {
    pub bundle: String,
    pub key: String,
    pub role: String,
    pub bytes: usize,
    pub hits: u64,
    pub last_access: Tick,
}

impl MetricsDocument {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("document serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Hop statistics, load per live node and replica counts.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let m = &self.metrics;
        let _ = writeln!(
            out,
            "seed {}  clock {}  commands {}",
            self.seed, self.clock, self.commands_executed
        );
        let _ = writeln!(
            out,
            "messages: sent {}  delivered {}  timeouts {}  transfers {}  evicted {}",
            m.sent, m.delivered, m.timeouts, m.transfers, m.evicted
        );
        let _ = writeln!(out, "hops:");
        let _ = writeln!(
            out,
            "  {:<8} {:>8} {:>8} {:>5} {:>5} {:>5}",
            "op", "count", "mean", "p50", "p95", "max"
        );
        let mut kinds: Vec<&str> = vec!["route", "publish", "lookup"];
        kinds.extend(
            m.hops
                .keys()
                .map(String::as_str)
                .filter(|k| !["route", "publish", "lookup"].contains(k)),
        );
        for kind in kinds {
            let h = m.hops.get(kind).cloned().unwrap_or_default();
            let _ = writeln!(
                out,
                "  {:<8} {:>8} {:>8.2} {:>5} {:>5} {:>5}",
                kind,
                h.count,
                h.mean(),
                h.percentile(0.5),
                h.percentile(0.95),
                h.max
            );
        }
        let outcome = |k: &str| m.lookup_outcomes.get(k).copied().unwrap_or(0);
        let _ = writeln!(
            out,
            "lookups: ok {}  not_found {}  unavailable {}  retry {}",
            outcome("ok"),
            outcome("not_found"),
            outcome("unavailable"),
            outcome("retry")
        );
        let live: Vec<&NodeLoad> = self.nodes.iter().filter(|n| n.status == "LIVE").collect();
        let _ = writeln!(out, "load ({} live nodes):", live.len());
        for n in live {
            let _ = writeln!(
                out,
                "  {:<12} {}  entries {:>5}  bytes {:>9}",
                n.name, n.id, n.entries, n.bytes
            );
        }
        let _ = writeln!(out, "replicas ({} bundles):", self.bundles.len());
        for (name, b) in &self.bundles {
            let _ = writeln!(
                out,
                "  {:<24} replicas {:>4}  requests {:>6}",
                name, b.replicas, b.requests
            );
        }
        out
    }
}
