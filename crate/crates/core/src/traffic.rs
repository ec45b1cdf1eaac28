//! Source readings and per-node transmit queues.

use std::collections::VecDeque;

use rand::Rng;

use crate::engine::World;
use crate::model::{NodeId, Reading};

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficConfig {
    /// Readings generated by every source over the send interval.
    pub load_packets: u32,
    pub send_interval_s: f64,
    pub payload_min: u32,
    pub payload_max: u32,
    /// Oldest-first queue bound; readings arriving at a full queue are lost.
    pub queue_cap: usize,
    /// Readings a node hands on per transmit opportunity.
    pub readings_per_frame: usize,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        TrafficConfig {
            load_packets: 200,
            send_interval_s: 60.0,
            payload_min: 30,
            payload_max: 70,
            queue_cap: 12,
            readings_per_frame: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Traffic {
    pub cfg: TrafficConfig,
    /// Not yet created, latest first.
    future: Vec<Vec<Reading>>,
    pending: Vec<VecDeque<Reading>>,
    pub overflow_drops: u64,
}

impl Traffic {
    /// Draws every source's readings up front and counts them as transmitted.
    pub fn generate(w: &mut World, cfg: TrafficConfig) -> Traffic {
        Traffic::generate_for(w, cfg, None)
    }

    /// As `generate`, restricted to `sources` when given.
    pub fn generate_for(w: &mut World, cfg: TrafficConfig, sources: Option<&[NodeId]>) -> Traffic {
        let n = w.nodes.len();
        let mut future = vec![Vec::new(); n];
        let sensors: Vec<NodeId> = match sources {
            Some(s) => s.to_vec(),
            None => w.sensors().collect(),
        };
        for id in sensors {
            let mut times: Vec<(f64, u32)> = (0..cfg.load_packets)
                .map(|_| {
                    let t = w.rng.random::<f64>() * cfg.send_interval_s;
                    let b = w.rng.random_range(cfg.payload_min..=cfg.payload_max);
                    (t, b)
                })
                .collect();
            times.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut rs: Vec<Reading> = times
                .into_iter()
                .enumerate()
                .map(|(seq, (t, b))| Reading {
                    source: id,
                    seq: seq as u32,
                    created_s: t,
                    payload_bytes: b,
                })
                .collect();
            for r in &rs {
                w.metrics.record_source_packet(r);
            }
            rs.reverse();
            future[id.idx()] = rs;
        }
        Traffic {
            cfg,
            future,
            pending: vec![VecDeque::new(); n],
            overflow_drops: 0,
        }
    }

    fn admit(&mut self, id: NodeId, now: f64) {
        let i = id.idx();
        while let Some(r) = self.future[i].last() {
            if r.created_s > now {
                break;
            }
            let r = self.future[i].pop().expect("peeked");
            if self.pending[i].len() >= self.cfg.queue_cap {
                self.overflow_drops += 1;
            } else {
                self.pending[i].push_back(r);
            }
        }
    }

    /// Up to `readings_per_frame` oldest queued readings.
    pub fn take(&mut self, id: NodeId, now: f64) -> Vec<Reading> {
        self.admit(id, now);
        let k = self
            .cfg
            .readings_per_frame
            .min(self.pending[id.idx()].len());
        self.pending[id.idx()].drain(..k).collect()
    }

    /// Puts readings that could not be handed on back at the head of the queue.
    pub fn requeue(&mut self, id: NodeId, readings: Vec<Reading>) {
        let q = &mut self.pending[id.idx()];
        for r in readings.into_iter().rev() {
            q.push_front(r);
        }
    }

    pub fn has_pending(&mut self, id: NodeId, now: f64) -> bool {
        self.admit(id, now);
        !self.pending[id.idx()].is_empty()
    }

    /// Whether any reading is queued or still to be created anywhere.
    pub fn exhausted(&self) -> bool {
        self.future.iter().all(Vec::is_empty) && self.pending.iter().all(VecDeque::is_empty)
    }
}
