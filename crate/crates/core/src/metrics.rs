//! OSPF/InvCap baseline and evaluation metrics.

use std::collections::BTreeMap;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::model::{DemandMatrix, FlowAssignment, Topology};
use crate::spef::{build_ecmp_dag, distribute, DagTolerance, EcmpDag, SplitRule};

/// Paths counts saturate here.
pub const PATH_COUNT_LIMIT: u64 = 1 << 32;

/// InvCap weights `1 / c`.
pub fn invcap_weights(topo: &Topology) -> Vec<f64> {
    topo.capacities().iter().map(|c| 1.0 / c).collect()
}

/// OSPF with InvCap weights and even per-node ECMP splitting. Returns the DAG used so
/// callers can count paths or build tables.
pub fn ospf_invcap(
    topo: &Topology,
    dm: &DemandMatrix,
    tol: DagTolerance,
) -> Result<(FlowAssignment, EcmpDag)> {
    let w = invcap_weights(topo);
    let dag = build_ecmp_dag(topo, &w, &dm.destinations(), tol)?;
    let fa = distribute(topo, dm, &dag, SplitRule::Even)?;
    Ok((fa, dag))
}

fn finite_or_null<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else {
        s.serialize_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EcmpHistogram {
    /// Number of demanded pairs per equal-cost path count.
    pub counts: BTreeMap<u64, usize>,
    /// Some pair reached [`PATH_COUNT_LIMIT`].
    pub saturated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub mlu: f64,
    /// `sum ln(1 - u)`; `-inf` (JSON `null`) once the MLU reaches 1.
    #[serde(serialize_with = "finite_or_null")]
    pub normalized_utility: f64,
    pub sorted_utilizations: Vec<f64>,
    pub ecmp_histogram: Option<EcmpHistogram>,
    pub network_load: f64,
    /// Per-link utilization in topology order, keyed by link id.
    pub utilization: BTreeMap<String, f64>,
}

impl MetricsReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn sorted_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["rank", "utilization"])?;
        for (i, u) in self.sorted_utilizations.iter().enumerate() {
            w.write_record([(i + 1).to_string(), u.to_string()])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv writer emits utf-8"))
    }

    pub fn feasible(&self) -> bool {
        self.mlu < 1.0
    }
}

/// `sum ln(1 - u)`, or `-inf` when some `u >= 1`.
pub fn normalized_utility(utilizations: &[f64]) -> f64 {
    if utilizations.iter().any(|&u| u >= 1.0) {
        return f64::NEG_INFINITY;
    }
    utilizations.iter().map(|u| (1.0 - u).ln()).sum()
}

pub fn compute_metrics(
    topo: &Topology,
    dm: &DemandMatrix,
    fa: &FlowAssignment,
    dag: Option<&EcmpDag>,
) -> Result<MetricsReport> {
    if fa.num_links() != topo.num_links() {
        return Err(Error::Structural(format!(
            "flow assignment covers {} links, topology has {}",
            fa.num_links(),
            topo.num_links()
        )));
    }
    let agg = fa.aggregate();
    let util: Vec<f64> = agg
        .iter()
        .zip(topo.links())
        .map(|(f, l)| f / l.capacity)
        .collect();
    let mut sorted = util.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mlu = sorted.first().copied().unwrap_or(0.0);
    Ok(MetricsReport {
        mlu,
        normalized_utility: normalized_utility(&util),
        sorted_utilizations: sorted,
        ecmp_histogram: dag.map(|d| count_ecmp_paths(topo, d, dm)),
        network_load: dm.total() / topo.total_capacity(),
        utilization: topo
            .links()
            .iter()
            .map(|l| l.id.clone())
            .zip(util)
            .collect(),
    })
}

/// Counts DAG paths of every demanded pair: `n(t) = 1`, `n(s) = sum n(j)`.
pub fn count_ecmp_paths(topo: &Topology, dag: &EcmpDag, dm: &DemandMatrix) -> EcmpHistogram {
    let mut counts = BTreeMap::new();
    let mut saturated = false;
    for d in dag.dests() {
        let pairs = dm.demands_to(d.dest);
        if pairs.is_empty() {
            continue;
        }
        let mut n = vec![0u64; topo.num_nodes()];
        n[d.dest.index()] = 1;
        for &node in d.order.iter().rev() {
            if node == d.dest {
                continue;
            }
            let mut c: u64 = 0;
            for &l in &d.succ[node.index()] {
                c = c.saturating_add(n[topo.link(l).dst.index()]);
            }
            if c >= PATH_COUNT_LIMIT {
                c = PATH_COUNT_LIMIT;
            }
            n[node.index()] = c;
        }
        for (s, x) in pairs {
            if x > 0.0 {
                let c = n[s.index()];
                saturated |= c >= PATH_COUNT_LIMIT;
                *counts.entry(c).or_insert(0) += 1;
            }
        }
    }
    EcmpHistogram { counts, saturated }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;

    #[test]
    fn utility_examples() {
        let u = normalized_utility(&[0.5, 0.9, 0.5, 0.5]);
        assert!((u - (3.0 * 0.5f64.ln() + 0.1f64.ln())).abs() < 1e-12);
        assert!((u + 4.382).abs() < 1e-3);
        assert_eq!(normalized_utility(&[0.2, 1.0]), f64::NEG_INFINITY);
        assert_eq!(normalized_utility(&[0.0, 0.0]), 0.0);
    }

    #[test]
    fn ospf_fig1() {
        let (topo, dm) = builtin::fig1();
        let (fa, dag) = ospf_invcap(&topo, &dm, DagTolerance::EXACT).unwrap();
        let m = compute_metrics(&topo, &dm, &fa, Some(&dag)).unwrap();
        assert_eq!(m.utilization["1-3"], 1.0);
        assert_eq!(m.utilization["3-4"], 0.9);
        assert_eq!(m.utilization["1-2"], 0.0);
        assert_eq!(m.mlu, 1.0);
        assert_eq!(m.normalized_utility, f64::NEG_INFINITY);
        assert!(m.to_json().unwrap().contains("\"normalized_utility\": null"));
        assert_eq!(m.ecmp_histogram.unwrap().counts, BTreeMap::from([(1, 2)]));
        assert!((m.network_load - 1.9 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn zero_flow_metrics() {
        let (topo, _) = builtin::fig1();
        let m = compute_metrics(&topo, &DemandMatrix::empty(), &FlowAssignment::zero(&topo), None)
            .unwrap();
        assert_eq!(m.mlu, 0.0);
        assert_eq!(m.normalized_utility, 0.0);
    }

    #[test]
    fn fig1_two_paths_under_optimal_weights() {
        let (topo, dm) = builtin::fig1();
        let dag = build_ecmp_dag(&topo, &[3.0, 10.0, 1.5, 1.5], &dm.destinations(), DagTolerance::EXACT)
            .unwrap();
        let h = count_ecmp_paths(&topo, &dag, &dm);
        assert_eq!(h.counts, BTreeMap::from([(1, 1), (2, 1)]));
    }

    #[test]
    fn ladder_has_four_paths() {
        let mut links = Vec::new();
        let names = ["a", "b1", "b2", "c", "d1", "d2", "e"];
        for (s, d) in [
            ("a", "b1"), ("a", "b2"), ("b1", "c"), ("b2", "c"),
            ("c", "d1"), ("c", "d2"), ("d1", "e"), ("d2", "e"),
        ] {
            links.push((format!("{s}{d}"), s.to_string(), d.to_string(), 1.0));
        }
        let topo = Topology::new(names, links).unwrap();
        let dm = DemandMatrix::from_named(&topo, [("a", "e", 1.0)]).unwrap();
        let dag = build_ecmp_dag(&topo, &[1.0; 8], &dm.destinations(), DagTolerance::EXACT).unwrap();
        assert_eq!(count_ecmp_paths(&topo, &dag, &dm).counts, BTreeMap::from([(4, 1)]));
    }

    #[test]
    fn sorted_csv_shape() {
        let (topo, dm) = builtin::fig1();
        let (fa, _) = ospf_invcap(&topo, &dm, DagTolerance::EXACT).unwrap();
        let m = compute_metrics(&topo, &dm, &fa, None).unwrap();
        let csv = m.sorted_csv().unwrap();
        assert!(csv.starts_with("rank,utilization\n1,1\n2,0.9\n"));
    }
}
