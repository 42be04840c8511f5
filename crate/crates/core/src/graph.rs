//! Shortest-path distances toward a destination.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::model::{LinkId, NodeId, Topology};

#[derive(Debug, Clone, Copy, PartialEq)]
struct Dist(f64);

impl Eq for Dist {}

impl PartialOrd for Dist {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Dist {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Shortest-path distances toward one destination plus the order in which nodes were
/// settled; `rank[i] < rank[j]` means `i` was settled first.
#[derive(Debug, Clone)]
pub struct SpTree {
    pub dist: Vec<f64>,
    pub rank: Vec<usize>,
}

/// Dijkstra toward `dest` under non-negative link `weights`. Unreachable nodes get
/// `f64::INFINITY` and rank `usize::MAX`.
pub fn shortest_paths_to(topo: &Topology, weights: &[f64], dest: NodeId) -> SpTree {
    debug_assert_eq!(weights.len(), topo.num_links());
    let mut dist = vec![f64::INFINITY; topo.num_nodes()];
    let mut rank = vec![usize::MAX; topo.num_nodes()];
    let mut settled = 0;
    let mut heap = BinaryHeap::new();
    dist[dest.index()] = 0.0;
    heap.push(Reverse((Dist(0.0), dest.index())));
    while let Some(Reverse((Dist(d), j))) = heap.pop() {
        if rank[j] != usize::MAX {
            continue;
        }
        rank[j] = settled;
        settled += 1;
        for &l in topo.in_links(NodeId(j)) {
            let i = topo.link(l).src.index();
            let cand = weights[l.index()] + d;
            if cand < dist[i] {
                dist[i] = cand;
                heap.push(Reverse((Dist(cand), i)));
            }
        }
    }
    SpTree { dist, rank }
}

/// Distance from every node to `dest` (`f64::INFINITY` where unreachable).
pub fn distances_to(topo: &Topology, weights: &[f64], dest: NodeId) -> Vec<f64> {
    shortest_paths_to(topo, weights, dest).dist
}

impl SpTree {
    /// The out-link of `node` that starts a shortest path, preferring the
    /// lexicographically smallest next-hop node and then the lowest link index. Only
    /// nodes settled before `node` qualify, which keeps the tree acyclic under zero
    /// weights.
    pub fn next_hop(&self, topo: &Topology, weights: &[f64], node: NodeId) -> Option<LinkId> {
        let here = self.dist[node.index()];
        if !here.is_finite() {
            return None;
        }
        let my_rank = self.rank[node.index()];
        topo.out_links(node)
            .iter()
            .copied()
            .filter(|&l| {
                let j = topo.link(l).dst.index();
                self.rank[j] < my_rank && weights[l.index()] + self.dist[j] == here
            })
            .min_by(|&a, &b| {
                topo.cmp_nodes(topo.link(a).dst, topo.link(b).dst)
                    .then(a.cmp(&b))
            })
    }

    /// Reachable nodes, latest settled first.
    pub fn reverse_settle_order(&self) -> Vec<NodeId> {
        let mut nodes: Vec<NodeId> = (0..self.dist.len())
            .filter(|&i| self.rank[i] != usize::MAX)
            .map(NodeId)
            .collect();
        nodes.sort_by_key(|n| Reverse(self.rank[n.index()]));
        nodes
    }
}

/// Nodes ordered by decreasing distance; ties broken by node name.
pub fn by_decreasing_distance(topo: &Topology, dist: &[f64]) -> Vec<NodeId> {
    let mut order: Vec<NodeId> = topo
        .node_ids()
        .filter(|n| dist[n.index()].is_finite())
        .collect();
    order.sort_by(|&a, &b| {
        dist[b.index()]
            .total_cmp(&dist[a.index()])
            .then(topo.cmp_nodes(a, b))
    });
    order
}
