#![allow(dead_code)]

use std::collections::{BTreeSet, VecDeque};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use wsnsim::adversary::{locate_sinkhole, FlowResponse};
use wsnsim::model::NodeId;

/// Maps `f` over `items` on every available core, keeping input order.
pub fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let threads = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(items.len().max(1));
    let next = AtomicUsize::new(0);
    let out: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                out.lock().unwrap()[i] = Some(r);
            });
        }
    });
    out.into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.unwrap())
        .collect()
}

/// Outcome of one exhaustive locate check.
#[derive(Debug, Default)]
pub struct LocateTally {
    pub cases: u64,
    pub attracting: u64,
    pub mismatches: u64,
    pub missed: u64,
}

/// Every connected graph on the BS (vertex 0) plus `sensors` nodes, with each sensor in turn as
/// the only sinkhole. Honest nodes take the neighbour with the fewest advertised hops to the BS
/// (ties to the lower id); the sinkhole advertises one hop and answers nothing. Nodes whose flow
/// passes through it form the affected region.
pub fn exhaustive_locate(sensors: usize) -> LocateTally {
    let n = sensors + 1;
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
        .collect();
    let mut t = LocateTally::default();
    for mask in 0u32..(1 << pairs.len()) {
        let mut adj = vec![Vec::new(); n];
        for (i, &(a, b)) in pairs.iter().enumerate() {
            if mask >> i & 1 == 1 {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        if !connected(&adj) {
            continue;
        }
        for m in 1..n {
            t.cases += 1;
            let next = routes(&adj, m);
            let mut affected = BTreeSet::new();
            affected.insert(m);
            for v in 1..n {
                if v != m && passes_through(&next, v, m) {
                    affected.insert(v);
                }
            }
            if !(1..n).any(|v| v != m && next[v] == Some(m)) {
                continue;
            }
            t.attracting += 1;
            let responses: Vec<FlowResponse> = affected
                .iter()
                .filter(|&&v| v != m)
                .map(|&v| FlowResponse {
                    responder: NodeId(v as u32),
                    next_hop: next[v].map(|x| NodeId(x as u32)),
                    cost: 1,
                })
                .collect();
            let ids: BTreeSet<NodeId> = affected.iter().map(|&v| NodeId(v as u32)).collect();
            let got = locate_sinkhole(&responses, &ids);
            let want = brute_roots(&responses, &ids);
            if got != want {
                t.mismatches += 1;
            }
            if !got.contains(&NodeId(m as u32)) {
                t.missed += 1;
            }
        }
    }
    t
}

fn connected(adj: &[Vec<usize>]) -> bool {
    let mut seen = vec![false; adj.len()];
    let mut q = VecDeque::from([0]);
    seen[0] = true;
    while let Some(v) = q.pop_front() {
        for &u in &adj[v] {
            if !seen[u] {
                seen[u] = true;
                q.push_back(u);
            }
        }
    }
    seen.iter().all(|&s| s)
}

/// Next hop of each honest node under advertised hop counts, the sinkhole claiming 1.
fn routes(adj: &[Vec<usize>], m: usize) -> Vec<Option<usize>> {
    let n = adj.len();
    let mut adv = vec![u32::MAX; n];
    adv[0] = 0;
    adv[m] = 1;
    // relax until stable; honest advertisements are 1 + best neighbour
    loop {
        let mut changed = false;
        for v in 1..n {
            if v == m {
                continue;
            }
            let best = adj[v].iter().map(|&u| adv[u]).min().unwrap_or(u32::MAX);
            let cand = best.saturating_add(1);
            if cand < adv[v] {
                adv[v] = cand;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    (0..n)
        .map(|v| {
            if v == 0 || v == m {
                return None;
            }
            adj[v]
                .iter()
                .copied()
                .filter(|&u| adv[u] != u32::MAX)
                .min_by_key(|&u| (adv[u], u))
        })
        .collect()
}

fn passes_through(next: &[Option<usize>], mut v: usize, m: usize) -> bool {
    for _ in 0..next.len() {
        match next[v] {
            Some(u) if u == m => return true,
            Some(0) | None => return false,
            Some(u) => v = u,
        }
    }
    false
}

/// Follows every responder's pointers to where its flow ends inside the region.
pub fn brute_roots(responses: &[FlowResponse], affected: &BTreeSet<NodeId>) -> BTreeSet<NodeId> {
    let edge = |v: NodeId| -> Option<Option<NodeId>> {
        responses
            .iter()
            .find(|r| r.responder == v)
            .map(|r| r.next_hop)
    };
    let mut roots = BTreeSet::new();
    for r in responses.iter().filter(|r| affected.contains(&r.responder)) {
        let mut trail = vec![r.responder];
        let mut cur = r.next_hop;
        while let Some(v) = cur {
            if v.is_bs() {
                break;
            }
            if !affected.contains(&v) {
                // the flow left the region through `prev` to a stranger
                let prev = *trail.last().unwrap();
                if prev != r.responder || trail.len() > 1 {
                    roots.insert(prev);
                }
                break;
            }
            if let Some(pos) = trail.iter().position(|&t| t == v) {
                roots.extend(trail[pos..].iter().copied());
                break;
            }
            trail.push(v);
            match edge(v) {
                None | Some(None) => {
                    roots.insert(v);
                    break;
                }
                Some(next) => cur = next,
            }
        }
    }
    roots
}
