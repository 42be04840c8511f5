use serde::Serialize;

use crate::error::Result;
use crate::model::Topology;

use super::dag::EcmpDag;
use super::split::SubtreeMasses;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NextHop {
    pub via: String,
    pub ratio: f64,
    /// Subtree mass `Z^t(via)`.
    #[serde(skip)]
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub node: String,
    pub dest: String,
    pub nexthops: Vec<NextHop>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
#[serde(transparent)]
pub struct ForwardingTable {
    pub rows: Vec<TableRow>,
}

impl ForwardingTable {
    pub fn row(&self, node: &str, dest: &str) -> Option<&TableRow> {
        self.rows.iter().find(|r| r.node == node && r.dest == dest)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// One row per `(node, destination)` for every node with DAG successors, ordered by
/// destination then node name. With `v = None` every row splits evenly.
pub fn build_forwarding_tables(topo: &Topology, dag: &EcmpDag, v: Option<&[f64]>) -> ForwardingTable {
    let mut dests: Vec<_> = dag.dests().collect();
    dests.sort_by(|a, b| topo.cmp_nodes(a.dest, b.dest));
    let mut rows = Vec::new();
    for d in dests {
        let masses = v.map(|v| SubtreeMasses::compute(topo, d, v));
        let mut nodes: Vec<_> = topo.node_ids().filter(|n| !d.succ[n.index()].is_empty()).collect();
        nodes.sort_by(|&a, &b| topo.cmp_nodes(a, b));
        for n in nodes {
            let nexthops = match (&masses, v) {
                (Some(m), Some(v)) => m
                    .ratios(topo, d, v, n)
                    .into_iter()
                    .map(|(l, ratio)| {
                        let via = topo.link(l).dst;
                        NextHop {
                            via: topo.node_name(via).to_string(),
                            ratio,
                            mass: m.mass(via),
                        }
                    })
                    .collect(),
                _ => {
                    let succ = &d.succ[n.index()];
                    let r = 1.0 / succ.len() as f64;
                    succ.iter()
                        .map(|&l| NextHop {
                            via: topo.node_name(topo.link(l).dst).to_string(),
                            ratio: r,
                            mass: 1.0,
                        })
                        .collect()
                }
            };
            rows.push(TableRow {
                node: topo.node_name(n).to_string(),
                dest: topo.node_name(d.dest).to_string(),
                nexthops,
            });
        }
    }
    ForwardingTable { rows }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;
    use crate::spef::dag::{build_ecmp_dag, DagTolerance};

    #[test]
    fn fig1_row() {
        let (topo, dm) = builtin::fig1();
        let dag = build_ecmp_dag(&topo, &[3.0, 10.0, 1.5, 1.5], &dm.destinations(), DagTolerance::EXACT)
            .unwrap();
        let v = [0.0, 0.0, std::f64::consts::LN_2, 0.0];
        let tables = build_forwarding_tables(&topo, &dag, Some(&v));
        let row = tables.row("1", "3").unwrap();
        assert_eq!(row.nexthops.len(), 2);
        assert_eq!(row.nexthops[0].via, "2");
        assert!((row.nexthops[0].ratio - 1.0 / 3.0).abs() < 1e-15);
        assert!((row.nexthops[1].ratio - 2.0 / 3.0).abs() < 1e-15);
        let leaf = tables.row("2", "3").unwrap();
        assert_eq!(leaf.nexthops[0].ratio, 1.0);
        // Node 4 has no route toward 3.
        assert!(tables.row("4", "3").is_none());
        for r in &tables.rows {
            let s: f64 = r.nexthops.iter().map(|h| h.ratio).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        let json = tables.to_json().unwrap();
        assert!(json.contains("\"nexthops\""));
        assert!(!json.contains("mass"));
    }
}
