use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{by_decreasing_distance, distances_to};
use crate::model::{LinkId, NodeId, Topology};

/// Path-cost equality tolerance `abs + rel * dist_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DagTolerance {
    pub abs: f64,
    #[serde(default)]
    pub rel: f64,
}

impl DagTolerance {
    /// Real-valued first weights.
    pub const EXACT: DagTolerance = DagTolerance { abs: 1e-9, rel: 0.0 };
    /// Rounded non-integer weights.
    pub const ROUNDED: DagTolerance = DagTolerance { abs: 0.3, rel: 0.0 };
    /// Integer weights.
    pub const INTEGER: DagTolerance = DagTolerance { abs: 1.0, rel: 0.0 };

    pub fn absolute(abs: f64) -> Self {
        DagTolerance { abs, rel: 0.0 }
    }

    fn at(&self, dist: f64) -> f64 {
        self.abs + self.rel * dist
    }
}

impl Default for DagTolerance {
    fn default() -> Self {
        Self::EXACT
    }
}

/// Equal-cost shortest-path DAG toward one destination.
#[derive(Debug, Clone, PartialEq)]
pub struct DestDag {
    pub dest: NodeId,
    pub dist: Vec<f64>,
    /// DAG out-links per node, ordered by next-hop name then link index.
    pub succ: Vec<Vec<LinkId>>,
    /// Reachable nodes by decreasing distance (ties by name); `dest` comes last.
    pub order: Vec<NodeId>,
}

impl DestDag {
    pub fn contains(&self, l: LinkId) -> bool {
        self.succ.iter().any(|s| s.contains(&l))
    }

    pub fn links(&self) -> impl Iterator<Item = LinkId> + '_ {
        self.succ.iter().flatten().copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EcmpDag {
    pub tol: DagTolerance,
    per_dest: BTreeMap<NodeId, DestDag>,
}

impl EcmpDag {
    pub fn dest(&self, t: NodeId) -> Option<&DestDag> {
        self.per_dest.get(&t)
    }

    pub fn dests(&self) -> impl Iterator<Item = &DestDag> {
        self.per_dest.values()
    }

    /// Links that lie in the DAG of at least one destination.
    pub fn union_links(&self, num_links: usize) -> Vec<bool> {
        let mut on = vec![false; num_links];
        for d in self.per_dest.values() {
            for l in d.links() {
                on[l.index()] = true;
            }
        }
        on
    }
}

/// Builds the shortest-path DAG of every destination in `dests` under `w`.
///
/// Link `(i, j)` joins the DAG of `t` when `|dist_i - w_ij - dist_j| <= tol` and
/// `dist_j < dist_i`.
pub fn build_ecmp_dag(
    topo: &Topology,
    w: &[f64],
    dests: &[NodeId],
    tol: DagTolerance,
) -> Result<EcmpDag> {
    if w.len() != topo.num_links() {
        return Err(Error::Structural(format!(
            "{} weights for {} links",
            w.len(),
            topo.num_links()
        )));
    }
    if let Some((l, x)) = w.iter().enumerate().find(|(_, x)| !(x.is_finite() && **x > 0.0)) {
        return Err(Error::Domain(format!(
            "link {} has weight {x}; DAG weights must be positive",
            topo.links()[l].id
        )));
    }
    if !(tol.abs >= 0.0 && tol.rel >= 0.0) {
        return Err(Error::Domain("DAG tolerance must be non-negative".into()));
    }
    let mut per_dest = BTreeMap::new();
    for &t in dests {
        let dist = distances_to(topo, w, t);
        let mut succ = vec![Vec::new(); topo.num_nodes()];
        for n in topo.node_ids() {
            let di = dist[n.index()];
            if !di.is_finite() || n == t {
                continue;
            }
            let slack = tol.at(di);
            let mut out: Vec<LinkId> = topo
                .out_links(n)
                .iter()
                .copied()
                .filter(|&l| {
                    let dj = dist[topo.link(l).dst.index()];
                    dj < di && (di - w[l.index()] - dj).abs() <= slack
                })
                .collect();
            out.sort_by(|&a, &b| {
                topo.cmp_nodes(topo.link(a).dst, topo.link(b).dst)
                    .then(a.cmp(&b))
            });
            succ[n.index()] = out;
        }
        let order = by_decreasing_distance(topo, &dist);
        per_dest.insert(
            t,
            DestDag {
                dest: t,
                dist,
                succ,
                order,
            },
        );
    }
    Ok(EcmpDag { tol, per_dest })
}
