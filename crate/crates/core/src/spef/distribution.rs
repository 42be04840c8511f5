use crate::error::{Error, Result};
use crate::model::{DemandMatrix, FlowAssignment, Topology};

use super::dag::{DestDag, EcmpDag};
use super::split::SubtreeMasses;

/// How a node divides its traffic among DAG successors.
#[derive(Debug, Clone, Copy)]
pub enum SplitRule<'a> {
    /// Exponential split under second weights `v`.
    Exponential(&'a [f64]),
    /// `1 / m` per successor, as deployed ECMP does.
    Even,
}

/// Pushes every demand down its destination's DAG. Nodes are visited by decreasing
/// distance; each forwards its own demand plus everything it received.
pub fn traffic_distribution(
    topo: &Topology,
    dm: &DemandMatrix,
    dag: &EcmpDag,
    v: &[f64],
) -> Result<FlowAssignment> {
    distribute(topo, dm, dag, SplitRule::Exponential(v))
}

pub fn distribute(
    topo: &Topology,
    dm: &DemandMatrix,
    dag: &EcmpDag,
    rule: SplitRule<'_>,
) -> Result<FlowAssignment> {
    if let SplitRule::Exponential(v) = rule {
        if v.len() != topo.num_links() {
            return Err(Error::Structural(format!(
                "{} second weights for {} links",
                v.len(),
                topo.num_links()
            )));
        }
    }
    let mut fa = FlowAssignment::zero(topo);
    for t in dm.destinations() {
        let d = dag.dest(t).ok_or_else(|| {
            Error::Structural(format!("no DAG for destination {}", topo.node_name(t)))
        })?;
        fa.set_dest(t, distribute_one(topo, dm, d, rule)?);
    }
    Ok(fa)
}

pub(crate) fn distribute_one(
    topo: &Topology,
    dm: &DemandMatrix,
    dag: &DestDag,
    rule: SplitRule<'_>,
) -> Result<Vec<f64>> {
    let t = dag.dest;
    let mut inflow = vec![0.0; topo.num_nodes()];
    for (s, d) in dm.demands_to(t) {
        if d > 0.0 && !dag.dist[s.index()].is_finite() {
            return Err(Error::Unreachable {
                source_node: topo.node_name(s).to_string(),
                dest: topo.node_name(t).to_string(),
            });
        }
        inflow[s.index()] += d;
    }
    let masses = match rule {
        SplitRule::Exponential(v) => Some((SubtreeMasses::compute(topo, dag, v), v)),
        SplitRule::Even => None,
    };
    let mut flows = vec![0.0; topo.num_links()];
    for &node in &dag.order {
        let total = inflow[node.index()];
        if node == t || total == 0.0 {
            continue;
        }
        let succ = &dag.succ[node.index()];
        if succ.is_empty() {
            return Err(Error::Structural(format!(
                "node {} holds {total} toward {} but has no DAG successor",
                topo.node_name(node),
                topo.node_name(t)
            )));
        }
        let ratios: Vec<(crate::model::LinkId, f64)> = match &masses {
            Some((m, v)) => m.ratios(topo, dag, v, node),
            None => {
                let r = 1.0 / succ.len() as f64;
                succ.iter().map(|&l| (l, r)).collect()
            }
        };
        for (l, r) in ratios {
            let x = total * r;
            flows[l.index()] += x;
            inflow[topo.link(l).dst.index()] += x;
        }
    }
    Ok(flows)
}
