use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::MessageKind;

/// Hop counts for one operation type. `buckets[h]` counts operations that
/// took `h` hops.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HopHistogram {
    pub count: u64,
    pub sum: u64,
    pub max: u64,
    pub buckets: Vec<u64>,
}

impl HopHistogram {
    pub fn record(&mut self, hops: usize) {
        if self.buckets.len() <= hops {
            self.buckets.resize(hops + 1, 0);
        }
        self.buckets[hops] += 1;
        self.count += 1;
        self.sum += hops as u64;
        self.max = self.max.max(hops as u64);
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum as f64 / self.count as f64
        }
    }

    /// Smallest hop count `h` with at least `q` of the mass at or below it.
    pub fn percentile(&self, q: f64) -> u64 {
        if self.count == 0 {
            return 0;
        }
        let target = (q * self.count as f64).ceil().max(1.0) as u64;
        let mut seen = 0;
        for (h, &n) in self.buckets.iter().enumerate() {
            seen += n;
            if seen >= target {
                return h as u64;
            }
        }
        self.max
    }
}

/// Monotone counters accumulated over one simulation.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metrics {
    pub sent: u64,
    pub delivered: u64,
    pub timeouts: u64,
    pub messages_by_kind: BTreeMap<String, u64>,
    pub hops: BTreeMap<String, HopHistogram>,
    pub lookup_outcomes: BTreeMap<String, u64>,
    pub evicted: u64,
    pub transfers: u64,
}

impl Metrics {
    pub(crate) fn count_sent(&mut self, kind: MessageKind) {
        self.sent += 1;
        *self
            .messages_by_kind
            .entry(kind.as_str().to_string())
            .or_default() += 1;
    }

    pub fn record_hops(&mut self, op: &str, hops: usize) {
        self.hops.entry(op.to_string()).or_default().record(hops);
    }

    pub fn record_lookup(&mut self, outcome: &str) {
        *self.lookup_outcomes.entry(outcome.to_string()).or_default() += 1;
    }

    pub fn hop_histogram(&self, op: &str) -> Option<&HopHistogram> {
        self.hops.get(op)
    }
}
