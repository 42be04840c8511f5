//! Per-destination minimum-cost routing under fixed link weights.

use crate::error::{Error, Result};
use crate::graph::{shortest_paths_to, SpTree};
use crate::model::{LinkId, NodeId, Topology};

/// Single-path routing of every demand toward one destination.
#[derive(Debug, Clone)]
pub struct Routing {
    pub dest: NodeId,
    /// Flow `f^t` per link.
    pub flows: Vec<f64>,
    /// `sum_ij w_ij f^t_ij`.
    pub cost: f64,
    pub next_hop: Vec<Option<LinkId>>,
    pub tree: SpTree,
}

impl Routing {
    /// Links of the tree path from `src` to the destination.
    pub fn path(&self, topo: &Topology, src: NodeId) -> Vec<LinkId> {
        let mut path = Vec::new();
        let mut at = src;
        while at != self.dest {
            match self.next_hop[at.index()] {
                Some(l) => {
                    path.push(l);
                    at = topo.link(l).dst;
                }
                None => break,
            }
        }
        path
    }
}

/// Routes each `(source, demand)` toward `dest` along one shortest path under `weights`.
/// Among equal-cost next hops the lexicographically smallest node wins.
pub fn route_to_destination(
    topo: &Topology,
    weights: &[f64],
    dest: NodeId,
    demands: &[(NodeId, f64)],
) -> Result<Routing> {
    if let Some(bad) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(Error::Domain(format!("link weights must be finite and >= 0, got {bad}")));
    }
    let tree = shortest_paths_to(topo, weights, dest);
    let mut node_flow = vec![0.0; topo.num_nodes()];
    for &(s, d) in demands {
        if d > 0.0 && !tree.dist[s.index()].is_finite() {
            return Err(Error::Unreachable {
                source_node: topo.node_name(s).to_string(),
                dest: topo.node_name(dest).to_string(),
            });
        }
        node_flow[s.index()] += d;
    }

    let next_hop: Vec<Option<LinkId>> = topo
        .node_ids()
        .map(|n| {
            if n == dest {
                None
            } else {
                tree.next_hop(topo, weights, n)
            }
        })
        .collect();

    let mut flows = vec![0.0; topo.num_links()];
    for n in tree.reverse_settle_order() {
        let f = node_flow[n.index()];
        if n == dest || f == 0.0 {
            continue;
        }
        let l = next_hop[n.index()].expect("reachable node has a tree next hop");
        flows[l.index()] += f;
        node_flow[topo.link(l).dst.index()] += f;
    }

    let cost = demands
        .iter()
        .map(|&(s, d)| d * tree.dist[s.index()])
        .filter(|c| !c.is_nan())
        .sum();

    Ok(Routing {
        dest,
        flows,
        cost,
        next_hop,
        tree,
    })
}
