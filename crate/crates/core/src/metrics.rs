//! Delivery, delay and energy accounting.

use std::collections::{BTreeSet, HashMap, HashSet};

use crate::model::{NodeId, Reading};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Detection {
    pub triggered_at_s: Option<f64>,
    /// First time a compromised node was isolated.
    pub first_isolation_s: Option<f64>,
    pub suspects: BTreeSet<NodeId>,
    pub true_positives: u32,
    pub false_positives: u32,
    /// Responses whose reverse path touched a compromised node.
    pub evasions: u32,
    pub omitted_responders: u32,
    pub rounds: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Attempt {
    pub at_s: f64,
    pub source: NodeId,
    pub seq: u32,
}

#[derive(Debug, Clone, Default)]
pub struct MetricsLedger {
    pub n_transmitted: u64,
    pub n_received: u64,
    pub delay_samples_s: Vec<f64>,
    pub energy_by_node_j: Vec<f64>,
    pub detection: Detection,
    pub double_credit_attempts: u64,
    pub orphans_logged: u64,
    pub no_route_drops: u64,
    pub malicious_drops: u64,
    credited: HashSet<u64>,
    /// First-hop hand-offs of source readings, in time order.
    pub attempts: Vec<Attempt>,
    /// BS arrival time of each credited reading.
    arrival: HashMap<u64, f64>,
}

fn key(source: NodeId, seq: u32) -> u64 {
    ((source.0 as u64) << 32) | seq as u64
}

impl MetricsLedger {
    pub fn record_source_packet(&mut self, _r: &Reading) {
        self.n_transmitted += 1;
    }

    /// Credits each distinct reading once. Returns the number newly credited.
    pub fn record_bs_delivery(&mut self, readings: &[Reading], t: f64) -> u64 {
        let mut fresh = 0;
        for r in readings {
            let k = key(r.source, r.seq);
            if self.credited.insert(k) {
                self.n_received += 1;
                self.delay_samples_s.push(t - r.created_s);
                self.arrival.insert(k, t);
                fresh += 1;
            } else {
                self.double_credit_attempts += 1;
            }
        }
        debug_assert!(self.n_received <= self.n_transmitted);
        fresh
    }

    /// BS arrival times of all credited readings, ascending.
    pub fn arrival_times(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.arrival.values().copied().collect();
        v.sort_by(f64::total_cmp);
        v
    }

    pub fn record_attempt(&mut self, at_s: f64, r: &Reading) {
        self.attempts.push(Attempt {
            at_s,
            source: r.source,
            seq: r.seq,
        });
    }

    pub fn delivered(&self, source: NodeId, seq: u32) -> bool {
        self.credited.contains(&key(source, seq))
    }

    /// Per-source (attempted, delivered) over attempts in `[from_s, to_s)`.
    pub fn window_stats(&self, from_s: f64, to_s: f64) -> HashMap<NodeId, (u32, u32)> {
        let start = self.attempts.partition_point(|a| a.at_s < from_s);
        let mut out: HashMap<NodeId, (u32, u32)> = HashMap::new();
        for a in self.attempts[start..].iter().take_while(|a| a.at_s < to_s) {
            let e = out.entry(a.source).or_default();
            e.0 += 1;
            if self.delivered(a.source, a.seq) {
                e.1 += 1;
            }
        }
        out
    }

    pub fn mean_delay_s(&self) -> Option<f64> {
        if self.delay_samples_s.is_empty() {
            None
        } else {
            Some(self.delay_samples_s.iter().sum::<f64>() / self.delay_samples_s.len() as f64)
        }
    }
}
